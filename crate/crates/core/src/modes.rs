//! Laguerre-Gauss mode fields at the beam-waist plane.
//!
//! Fields are normalized so that `∫|LG|² d²r = 1` over the whole plane. No
//! propagation is modelled: every overlap in this crate is a plane integral at
//! the phase screen, so Gouy phase and wavefront curvature never enter.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;

/// Label of one LG mode: azimuthal index `ell` and radial index `p`.
///
/// Serializes as the token `l<ell>p<p>`, e.g. `l-2p1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub ell: i32,
    pub p: u32,
}

impl ModeIndex {
    pub const fn new(ell: i32, p: u32) -> Self {
        Self { ell, p }
    }

    /// Mode order `N = 2p + |ell| + 1`.
    pub fn order(&self) -> u32 {
        mode_order(*self)
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}p{}", self.ell, self.p)
    }
}

impl FromStr for ModeIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("invalid mode token {s:?}, expected l<ell>p<p>"));
        let rest = s.trim().strip_prefix('l').ok_or_else(bad)?;
        let (ell, p) = rest.split_once('p').ok_or_else(bad)?;
        Ok(Self { ell: ell.parse().map_err(|_| bad())?, p: p.parse().map_err(|_| bad())? })
    }
}

impl Serialize for ModeIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModeIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn mode_order(mode: ModeIndex) -> u32 {
    2 * mode.p + mode.ell.unsigned_abs() + 1
}

/// All modes with order at most `max_order`, sorted by `(N, ell, p)`.
pub fn enumerate_modes(max_order: u32) -> Vec<ModeIndex> {
    let mut out = Vec::with_capacity((max_order * (max_order + 1) / 2) as usize);
    for n in 1..=max_order {
        let span = (n - 1) as i32;
        for ell in -span..=span {
            let rem = n - 1 - ell.unsigned_abs();
            if rem % 2 == 0 {
                out.push(ModeIndex::new(ell, rem / 2));
            }
        }
    }
    out
}

/// Associated Laguerre polynomial `L_p^alpha(x)` by forward recurrence.
pub fn laguerre_assoc(p: u32, alpha: u32, x: f64) -> f64 {
    let a = alpha as f64;
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Roots of `L_p^alpha`, ascending.
///
/// Eigenvalues of the symmetric Jacobi matrix of the Laguerre weight, each
/// polished with a few Newton steps on the recurrence.
pub fn laguerre_roots(p: u32, alpha: u32) -> Vec<f64> {
    if p == 0 {
        return Vec::new();
    }
    let n = p as usize;
    let a = alpha as f64;
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * i as f64 + a + 1.0
        } else if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            (k * (k + a)).sqrt()
        } else {
            0.0
        }
    });
    let mut roots: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    roots.sort_by(f64::total_cmp);
    for x in roots.iter_mut() {
        for _ in 0..3 {
            // x L'_p = p L_p - (p + alpha) L_{p-1}
            let lp = laguerre_assoc(p, alpha, *x);
            let lpm = laguerre_assoc(p - 1, alpha, *x);
            let deriv = (p as f64 * lp - (p as f64 + a) * lpm) / *x;
            if deriv == 0.0 {
                break;
            }
            *x -= lp / deriv;
        }
    }
    roots
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Real radial profile of `LG_{ell,p}` (the field without `exp(i ell phi)`).
pub fn lg_radial(mode: ModeIndex, waist: f64, r: f64) -> f64 {
    let a = mode.ell.unsigned_abs();
    let ln_norm = 0.5 * (2f64.ln() + ln_factorial(mode.p) - PI.ln() - ln_factorial(mode.p + a));
    let rho = r / waist;
    let x = 2.0 * rho * rho;
    ln_norm.exp() / waist
        * (std::f64::consts::SQRT_2 * rho).powi(a as i32)
        * laguerre_assoc(mode.p, a, x)
        * (-rho * rho).exp()
}

/// `LG_{ell,p}(r, phi)` at the waist plane, unit L² norm.
pub fn lg_field(mode: ModeIndex, waist: f64, r: f64, phi: f64) -> Complex64 {
    Complex64::from_polar(1.0, mode.ell as f64 * phi) * lg_radial(mode, waist, r)
}

/// Normalized superposition of LG modes sharing one waist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialState {
    modes: Vec<ModeIndex>,
    coeffs: Vec<Complex64>,
    waist: f64,
}

const NORM_TOL: f64 = 1e-12;

impl SpatialState {
    /// Builds a state from already-normalized coefficients.
    pub fn new(modes: Vec<ModeIndex>, coeffs: Vec<Complex64>, waist: f64) -> Result<Self> {
        Self::check_shape(&modes, &coeffs, waist)?;
        let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("coefficients have squared norm {norm}, expected 1")));
        }
        Ok(Self { modes, coeffs, waist })
    }

    /// Builds a state, rescaling the coefficients to unit norm.
    pub fn normalized(modes: Vec<ModeIndex>, coeffs: Vec<Complex64>, waist: f64) -> Result<Self> {
        Self::check_shape(&modes, &coeffs, waist)?;
        let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("zero or non-finite coefficient vector".into()));
        }
        let coeffs = coeffs.into_iter().map(|c| c / norm).collect();
        Ok(Self { modes, coeffs, waist })
    }

    pub fn single(mode: ModeIndex, waist: f64) -> Self {
        Self { modes: vec![mode], coeffs: vec![Complex64::new(1.0, 0.0)], waist }
    }

    fn check_shape(modes: &[ModeIndex], coeffs: &[Complex64], waist: f64) -> Result<()> {
        if modes.is_empty() || modes.len() != coeffs.len() {
            return Err(Error::InvalidArgument(format!("{} modes but {} coefficients", modes.len(), coeffs.len())));
        }
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(Error::InvalidArgument(format!("waist must be positive, got {waist}")));
        }
        let mut seen = modes.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != modes.len() {
            return Err(Error::InvalidArgument("duplicate mode in state".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    /// The single mode, if this state is one.
    pub fn as_single_mode(&self) -> Option<ModeIndex> {
        match self.modes.as_slice() {
            [m] => Some(*m),
            _ => None,
        }
    }

    /// Largest `|ell|` over the support.
    pub fn max_abs_ell(&self) -> u32 {
        self.modes.iter().map(|m| m.ell.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn max_order(&self) -> u32 {
        self.modes.iter().map(|m| m.order()).max().unwrap_or(1)
    }

    /// Short identifier: the mode token for single modes, otherwise a
    /// `+`-joined list of the support.
    pub fn label(&self) -> String {
        match self.as_single_mode() {
            Some(m) => m.to_string(),
            None => self.modes.iter().map(ToString::to_string).collect::<Vec<_>>().join("+"),
        }
    }

    pub fn eval(&self, r: f64, phi: f64) -> Complex64 {
        self.modes.iter().zip(&self.coeffs).map(|(m, c)| c * lg_field(*m, self.waist, r, phi)).sum()
    }

    /// Samples the field on every grid node, row-major in `(radial, azimuthal)`.
    pub fn sample_on(&self, grid: &QuadratureGrid) -> Vec<Complex64> {
        let n_az = grid.azimuthal_nodes().len();
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (mode, c) in self.modes.iter().zip(&self.coeffs) {
            let phase: Vec<Complex64> = grid
                .azimuthal_nodes()
                .iter()
                .map(|&phi| c * Complex64::from_polar(1.0, mode.ell as f64 * phi))
                .collect();
            for (i, &r) in grid.radial_nodes().iter().enumerate() {
                let radial = lg_radial(*mode, self.waist, r);
                if radial == 0.0 {
                    continue;
                }
                let row = &mut out[i * n_az..(i + 1) * n_az];
                for (v, ph) in row.iter_mut().zip(&phase) {
                    *v += ph * radial;
                }
            }
        }
        out
    }

    /// Inner product `<self|other>` of coefficient vectors over the union of
    /// supports (exact by orthonormality of the LG family).
    pub fn inner(&self, other: &SpatialState) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, c) in self.modes.iter().zip(&self.coeffs) {
            if let Some(j) = other.modes.iter().position(|o| o == m) {
                acc += c.conj() * other.coeffs[j];
            }
        }
        acc
    }
}
