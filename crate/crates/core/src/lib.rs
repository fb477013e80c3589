pub mod crosstalk;
pub mod detection;
pub mod error;
pub mod io;
pub mod modes;
pub mod optimizer;
pub mod qkd;
pub mod quadrature;
pub mod tomography;

pub use error::{Error, Result};

// The guide's code blocks run as doctests through these modules.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/modes.md")]
    mod modes {}
    #[doc = include_str!("../../../book/src/quadrature.md")]
    mod quadrature {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/crosstalk.md")]
    mod crosstalk {}
    #[doc = include_str!("../../../book/src/key-rates.md")]
    mod key_rates {}
    #[doc = include_str!("../../../book/src/subspace.md")]
    mod subspace {}
    #[doc = include_str!("../../../book/src/tomography.md")]
    mod tomography {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
