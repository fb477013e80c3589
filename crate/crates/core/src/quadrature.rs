//! Polar-plane quadrature for overlap integrals.
//!
//! Radial direction: Gauss-Legendre on `[0, r_max]` (optionally split into
//! panels at known discontinuities), with the polar Jacobian `r` folded into
//! the weights. Azimuthal direction: uniform trapezoid on a closed ring, which
//! is exact for trigonometric polynomials of degree below `n_azimuthal`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_RADIAL: usize = 256;
pub const DEFAULT_R_MAX_FACTOR: f64 = 8.0;

/// Node counts and aperture of a polar grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_radial: usize,
    pub n_azimuthal: usize,
    /// Aperture radius, same length unit as the mode waist.
    pub r_max: f64,
}

impl GridSpec {
    pub fn new(n_radial: usize, n_azimuthal: usize, r_max: f64) -> Result<Self> {
        let spec = Self { n_radial, n_azimuthal, r_max };
        spec.validate()?;
        Ok(spec)
    }

    /// Production defaults for modes up to `|ell| = ell_max` at waist `waist`.
    pub fn for_modes(waist: f64, ell_max: u32) -> Self {
        Self {
            n_radial: DEFAULT_N_RADIAL,
            n_azimuthal: default_n_azimuthal(ell_max),
            r_max: DEFAULT_R_MAX_FACTOR * waist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_radial < 16 {
            return Err(Error::InvalidArgument(format!("n_radial must be >= 16, got {}", self.n_radial)));
        }
        if self.n_azimuthal < 8 || !self.n_azimuthal.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("n_azimuthal must be even and >= 8, got {}", self.n_azimuthal)));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("r_max must be positive, got {}", self.r_max)));
        }
        Ok(())
    }

    /// Twice the nodes in both directions, same aperture.
    pub fn refined(&self) -> Self {
        Self { n_radial: 2 * self.n_radial, n_azimuthal: 2 * self.n_azimuthal, r_max: self.r_max }
    }
}

/// `4 (2 ell_max + 1)` rounded up to even, at least 8.
pub fn default_n_azimuthal(ell_max: u32) -> usize {
    let n = 4 * (2 * ell_max as usize + 1);
    (n + n % 2).max(8)
}

/// Precomputed nodes and weights; immutable after construction.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    spec: GridSpec,
    radial_nodes: Vec<f64>,
    radial_weights: Vec<f64>,
    azimuthal_nodes: Vec<f64>,
    azimuthal_weight: f64,
}

pub fn build_grid(spec: &GridSpec) -> Result<QuadratureGrid> {
    build_grid_with_breakpoints(spec, &[])
}

/// Like [`build_grid`], but the radial rule is split into Gauss-Legendre
/// panels at each breakpoint inside `(0, r_max)`. Each panel gets
/// `max(16, ceil(n_radial / panels))` nodes.
pub fn build_grid_with_breakpoints(spec: &GridSpec, breakpoints: &[f64]) -> Result<QuadratureGrid> {
    spec.validate()?;
    let mut edges = vec![0.0];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > 0.0 && b < spec.r_max).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * spec.r_max);
    edges.extend(inner);
    edges.push(spec.r_max);

    let panels = edges.len() - 1;
    let per_panel = spec.n_radial.div_ceil(panels).max(16);
    let rule = gauss_legendre(per_panel);

    let mut radial_nodes = Vec::with_capacity(per_panel * panels);
    let mut radial_weights = Vec::with_capacity(per_panel * panels);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        for &(x, wx) in &rule {
            let r = mid + half * x;
            radial_nodes.push(r);
            radial_weights.push(wx * half * r);
        }
    }

    let n_az = spec.n_azimuthal;
    let azimuthal_nodes = (0..n_az).map(|k| 2.0 * PI * k as f64 / n_az as f64).collect();
    Ok(QuadratureGrid {
        spec: *spec,
        radial_nodes,
        radial_weights,
        azimuthal_nodes,
        azimuthal_weight: 2.0 * PI / n_az as f64,
    })
}

/// Gauss-Legendre pairs on `[-1, 1]`, ascending in the node.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("panel size is at least 16"));
    let mut pairs = rule.into_node_weight_pairs().into_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

impl QuadratureGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn radial_nodes(&self) -> &[f64] {
        &self.radial_nodes
    }

    /// Radial weights, Jacobian `r` included.
    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn azimuthal_nodes(&self) -> &[f64] {
        &self.azimuthal_nodes
    }

    pub fn azimuthal_weight(&self) -> f64 {
        self.azimuthal_weight
    }

    /// Total number of `(r, phi)` nodes.
    pub fn len(&self) -> usize {
        self.radial_nodes.len() * self.azimuthal_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `f` on every node, row-major in `(radial, azimuthal)`.
    pub fn sample<F>(&self, f: F) -> Vec<Complex64>
    where
        F: Fn(f64, f64) -> Complex64,
    {
        let mut out = Vec::with_capacity(self.len());
        for &r in &self.radial_nodes {
            for &phi in &self.azimuthal_nodes {
                out.push(f(r, phi));
            }
        }
        out
    }

    /// `∫∫ f r dr dphi` for a field given as samples on this grid.
    pub fn integrate_samples(&self, samples: &[Complex64]) -> Complex64 {
        debug_assert_eq!(samples.len(), self.len());
        let n_az = self.azimuthal_nodes.len();
        let mut total = Complex64::new(0.0, 0.0);
        for (i, wr) in self.radial_weights.iter().enumerate() {
            let ring: Complex64 = samples[i * n_az..(i + 1) * n_az].iter().sum();
            total += ring * *wr;
        }
        total * self.azimuthal_weight
    }

    pub fn integrate<F>(&self, f: F) -> Complex64
    where
        F: Fn(f64, f64) -> Complex64,
    {
        let mut total = Complex64::new(0.0, 0.0);
        for (&r, &wr) in self.radial_nodes.iter().zip(&self.radial_weights) {
            let mut ring = Complex64::new(0.0, 0.0);
            for &phi in &self.azimuthal_nodes {
                ring += f(r, phi);
            }
            total += ring * wr;
        }
        total * self.azimuthal_weight
    }
}

/// `∫∫ conj(A) B weight(r) r dr dphi` on `grid`.
pub fn overlap<A, B, W>(field_a: A, field_b: B, weight: W, grid: &QuadratureGrid) -> Complex64
where
    A: Fn(f64, f64) -> Complex64,
    B: Fn(f64, f64) -> Complex64,
    W: Fn(f64) -> f64,
{
    let mut total = Complex64::new(0.0, 0.0);
    for (&r, &wr) in grid.radial_nodes.iter().zip(&grid.radial_weights) {
        let g = weight(r);
        let mut ring = Complex64::new(0.0, 0.0);
        for &phi in &grid.azimuthal_nodes {
            ring += field_a(r, phi).conj() * field_b(r, phi);
        }
        total += ring * (g * wr);
    }
    total * grid.azimuthal_weight
}

/// [`overlap`] with a refinement check.
///
/// Evaluates on `spec`, on the refined grid (twice the nodes both ways), and on
/// the refined grid with a 1.5x larger aperture. Returns the refined value when
/// both differences are within `rel_tol * max(1, |value|)`; otherwise the grid
/// or the aperture is inadequate and [`Error::NonConverged`] is returned.
pub fn converged_overlap<A, B, W>(field_a: A, field_b: B, weight: W, spec: &GridSpec, rel_tol: f64) -> Result<Complex64>
where
    A: Fn(f64, f64) -> Complex64,
    B: Fn(f64, f64) -> Complex64,
    W: Fn(f64) -> f64,
{
    check_converged(spec, rel_tol, |s| Ok(overlap(&field_a, &field_b, &weight, &build_grid(s)?)))
}

/// Runs `eval` on the coarse, refined and enlarged-aperture variants of `spec`.
pub(crate) fn check_converged<E>(spec: &GridSpec, rel_tol: f64, eval: E) -> Result<Complex64>
where
    E: Fn(&GridSpec) -> Result<Complex64>,
{
    if rel_tol.is_nan() || rel_tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let refined_spec = spec.refined();
    let wide_spec = GridSpec { r_max: 1.5 * spec.r_max, ..refined_spec };
    let coarse = eval(spec)?;
    let refined = eval(&refined_spec)?;
    let wide = eval(&wide_spec)?;
    let tol = rel_tol * refined.norm().max(1.0);
    if (refined - coarse).norm() > tol || (wide - refined).norm() > tol {
        return Err(Error::NonConverged { coarse: coarse.norm(), refined: refined.norm(), aperture: wide.norm() });
    }
    Ok(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{lg_field, ModeIndex};

    fn spec() -> GridSpec {
        GridSpec::new(256, 16, 5.0).unwrap()
    }

    #[test]
    fn radial_weights_sum_to_disk_moment() {
        let g = build_grid(&spec()).unwrap();
        let s: f64 = g.radial_weights().iter().sum();
        assert!((s - 12.5).abs() < 1e-12);
        let split = build_grid_with_breakpoints(&spec(), &[0.7, 2.0, 2.0, 9.0]).unwrap();
        let s: f64 = split.radial_weights().iter().sum();
        assert!((s - 12.5).abs() < 1e-12);
    }

    #[test]
    fn disk_integrals() {
        let g = build_grid(&spec()).unwrap();
        let area = g.integrate(|_, _| Complex64::new(1.0, 0.0));
        assert!((area.re - 25.0 * PI).abs() < 1e-10);
        let gauss = g.integrate(|r, _| Complex64::new((-r * r).exp(), 0.0));
        assert!((gauss.re - PI * (1.0 - (-25f64).exp())).abs() < 1e-10);
        let samples = g.sample(|r, _| Complex64::new((-r * r).exp(), 0.0));
        assert!((g.integrate_samples(&samples) - gauss).norm() < 1e-14);
    }

    #[test]
    fn minimal_and_invalid_grids() {
        let g = build_grid(&GridSpec::new(16, 8, 1.0).unwrap()).unwrap();
        assert_eq!(g.len(), 128);
        assert!(GridSpec::new(16, 9, 1.0).is_err());
        assert!(GridSpec::new(15, 8, 1.0).is_err());
        assert!(GridSpec::new(16, 8, 0.0).is_err());
        assert_eq!(default_n_azimuthal(0), 8);
        assert_eq!(default_n_azimuthal(10), 84);
    }

    #[test]
    fn mode_overlaps() {
        let g = build_grid(&GridSpec::for_modes(1.0, 3)).unwrap();
        let lg = |ell, p| move |r, phi| lg_field(ModeIndex::new(ell, p), 1.0, r, phi);
        let one = |_| 1.0;
        assert!((overlap(lg(0, 0), lg(0, 0), one, &g) - 1.0).norm() < 1e-12);
        assert!(overlap(lg(2, 1), lg(-1, 1), one, &g).norm() < 1e-12);
        assert!(overlap(lg(0, 1), lg(0, 3), one, &g).norm() < 1e-12);
        let w = overlap(lg(0, 1), lg(0, 0), |r: f64| (-r * r).exp(), &g);
        assert!((w - 2.0 / 9.0).norm() < 1e-12);
    }

    #[test]
    fn overlap_conjugation_and_linearity() {
        let g = build_grid(&GridSpec::for_modes(1.0, 2)).unwrap();
        let a = |r: f64, phi: f64| {
            lg_field(ModeIndex::new(1, 0), 1.0, r, phi) + lg_field(ModeIndex::new(-2, 1), 1.0, r, phi)
        };
        let b = |r: f64, phi: f64| lg_field(ModeIndex::new(1, 1), 1.0, r, phi) * Complex64::new(0.3, -0.8);
        let wt = |r: f64| (-0.5 * r * r).exp();
        let ab = overlap(a, b, wt, &g);
        let ba = overlap(b, a, wt, &g);
        assert!((ab - ba.conj()).norm() < 1e-14);
        let k = Complex64::new(-1.5, 2.0);
        let kb = overlap(a, |r, phi| k * b(r, phi), wt, &g);
        assert!((kb - k * ab).norm() < 1e-13);
    }

    #[test]
    fn convergence_check() {
        let lg = |ell, p| move |r, phi| lg_field(ModeIndex::new(ell, p), 1.0, r, phi);
        let one = |_| 1.0;
        let v = converged_overlap(lg(0, 0), lg(0, 0), one, &GridSpec::for_modes(1.0, 0), 1e-10).unwrap();
        assert!((v - 1.0).norm() < 1e-12);
        assert!(converged_overlap(lg(3, 3), lg(3, 3), one, &GridSpec::for_modes(1.0, 3), 1e-10).is_ok());
        let cut = GridSpec::new(64, 8, 1.5).unwrap();
        assert!(matches!(converged_overlap(lg(0, 7), lg(0, 7), one, &cut, 1e-6), Err(Error::NonConverged { .. })));
        assert!(converged_overlap(lg(0, 0), lg(0, 0), one, &cut, 0.0).is_err());
    }
}
