use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("overlap not converged: coarse {coarse:.3e}, refined {refined:.3e}, aperture check {aperture:.3e}")]
    NonConverged { coarse: f64, refined: f64, aperture: f64 },

    #[error("degenerate matrix: all entries vanish")]
    DegenerateMatrix,

    #[error("degenerate basis {basis}: every outcome has zero probability")]
    DegenerateBasis { basis: usize },

    #[error("visibility target {target} unachievable: V({beta_hi}) = {achieved}")]
    Unachievable { target: f64, beta_hi: f64, achieved: f64 },

    #[error("visibility is not monotone in beta near beta = {beta}")]
    NonMonotone { beta: f64 },

    #[error("{count} subsets exceed the exhaustive-search cap of {cap}")]
    TooManySubsets { count: u128, cap: u128 },

    #[error("dimension {0} is not prime")]
    NotPrime(usize),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
