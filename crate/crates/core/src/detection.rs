//! Single-phase-screen projective measurement.
//!
//! A detector displays a mask built from the detection state, and the light
//! leaving the screen is coupled into the fibre's fundamental mode, imagined
//! propagating backwards onto the screen as a Gaussian of waist `W = beta * w`.
//! The coupling amplitude is
//!
//! ```text
//! c = ∫∫ G_W(r) · mask(r, phi) · psi_in(r, phi) r dr dphi
//! ```
//!
//! with `G_W` the unit-norm Gaussian, so `|c|²` is directly a coupling
//! efficiency including the mask loss.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{laguerre_roots, SpatialState};
use crate::quadrature::{build_grid, build_grid_with_breakpoints, check_converged, GridSpec, QuadratureGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Amplitude-and-phase mask, enlarged backward Gaussian.
    #[serde(rename = "if")]
    IntensityFlattening,
    /// Phase-only mask, matched backward Gaussian.
    #[serde(rename = "pf")]
    PhaseFlattening,
    /// Amplitude-and-phase mask, matched backward Gaussian.
    #[serde(rename = "pf-am")]
    PhaseFlatteningAm,
}

impl Method {
    pub fn mask_kind(self) -> MaskKind {
        match self {
            Method::PhaseFlattening => MaskKind::PhaseOnly,
            Method::IntensityFlattening | Method::PhaseFlatteningAm => MaskKind::AmplitudeAndPhase,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Method::IntensityFlattening => "if",
            Method::PhaseFlattening => "pf",
            Method::PhaseFlatteningAm => "pf-am",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "if" => Ok(Method::IntensityFlattening),
            "pf" => Ok(Method::PhaseFlattening),
            "pf-am" => Ok(Method::PhaseFlatteningAm),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}, expected one of if, pf, pf-am"))),
        }
    }
}

/// Measurement operator: method, backward-waist ratio and integration grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    method: Method,
    beta: f64,
    grid: GridSpec,
}

impl DetectionModel {
    pub fn new(method: Method, beta: f64, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        match method {
            Method::IntensityFlattening if beta < 1.0 => {
                Err(Error::InvalidArgument(format!("intensity flattening needs beta >= 1, got {beta}")))
            }
            Method::PhaseFlattening | Method::PhaseFlatteningAm if beta != 1.0 => {
                Err(Error::InvalidArgument(format!("{method} fixes beta = 1, got {beta}")))
            }
            _ => Ok(Self { method, beta, grid }),
        }
    }

    pub fn intensity_flattening(beta: f64, grid: GridSpec) -> Result<Self> {
        Self::new(Method::IntensityFlattening, beta, grid)
    }

    pub fn phase_flattening(grid: GridSpec) -> Result<Self> {
        Self::new(Method::PhaseFlattening, 1.0, grid)
    }

    pub fn phase_flattening_am(grid: GridSpec) -> Result<Self> {
        Self::new(Method::PhaseFlatteningAm, 1.0, grid)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mask_kind(&self) -> MaskKind {
        self.method.mask_kind()
    }

    pub fn with_grid(&self, grid: GridSpec) -> Self {
        Self { grid, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskKind {
    AmplitudeAndPhase,
    PhaseOnly,
}

/// Transmission function displayed for one detection state.
#[derive(Debug, Clone)]
pub struct MaskFunction {
    target: SpatialState,
    kind: MaskKind,
    scale: f64,
}

impl MaskFunction {
    /// Mask normalized to the peak of its own target (`max |mask| = 1`).
    pub fn new(target: SpatialState, kind: MaskKind, grid: &QuadratureGrid) -> Self {
        let scale = match kind {
            MaskKind::AmplitudeAndPhase => peak_magnitude(&target, grid),
            MaskKind::PhaseOnly => 1.0,
        };
        Self { target, kind, scale }
    }

    /// Mask divided by an externally chosen `scale`, e.g. one peak shared by a
    /// whole measurement set. `scale` must be at least the target's own peak
    /// for the transmission to stay bounded by 1.
    pub fn with_scale(target: SpatialState, kind: MaskKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("mask scale must be positive, got {scale}")));
        }
        Ok(Self { target, kind, scale })
    }

    pub fn target(&self) -> &SpatialState {
        &self.target
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn mask_value(mask: &MaskFunction, r: f64, phi: f64) -> Complex64 {
    mask_from_field(mask.kind, mask.scale, mask.target.eval(r, phi))
}

fn mask_from_field(kind: MaskKind, scale: f64, psi: Complex64) -> Complex64 {
    match kind {
        MaskKind::AmplitudeAndPhase => psi.conj() / scale,
        MaskKind::PhaseOnly => {
            let n = psi.norm();
            if n == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                psi.conj() / n
            }
        }
    }
}

/// Unit-norm fundamental Gaussian of waist `waist`.
pub fn backward_gaussian(waist: f64, r: f64) -> f64 {
    (2.0 / PI).sqrt() / waist * (-(r * r) / (waist * waist)).exp()
}

/// `max |psi|` over the grid nodes and the origin, polished off-grid by
/// golden-section search around the best node.
pub fn peak_magnitude(state: &SpatialState, grid: &QuadratureGrid) -> f64 {
    let samples = state.sample_on(grid);
    peak_from_samples(state, grid, &samples)
}

/// [`peak_magnitude`] reusing samples already taken on `grid`.
pub fn peak_from_samples(state: &SpatialState, grid: &QuadratureGrid, samples: &[Complex64]) -> f64 {
    let n_az = grid.azimuthal_nodes().len();
    let (best, best_val) =
        samples
            .iter()
            .map(|v| v.norm())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let origin = state.eval(0.0, 0.0).norm();

    let rs = grid.radial_nodes();
    let ir = best / n_az;
    let mut phi = grid.azimuthal_nodes()[best % n_az];
    let r_lo = if ir == 0 { 0.0 } else { rs[ir - 1] };
    let r_hi = rs.get(ir + 1).copied().unwrap_or(rs[ir]);
    let dphi = 2.0 * PI / n_az as f64;
    let mut polished = best_val;
    for _ in 0..3 {
        let r = golden_max(|x| state.eval(x, phi).norm(), r_lo, r_hi);
        phi = golden_max(|x| state.eval(r, x).norm(), phi - dphi, phi + dphi);
        polished = polished.max(state.eval(r, phi).norm());
    }
    best_val.max(origin).max(polished)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Radii where a phase-only mask of `state` jumps by pi: the zeros of the
/// Laguerre factor of a single mode. Superpositions have no such radii.
fn phase_jump_radii(state: &SpatialState) -> Vec<f64> {
    match state.as_single_mode() {
        Some(m) => {
            laguerre_roots(m.p, m.ell.unsigned_abs()).into_iter().map(|x| state.waist() * (x / 2.0).sqrt()).collect()
        }
        None => Vec::new(),
    }
}

/// One detection state prepared on its integration grid.
///
/// Holds `weight * G_W * mask` at every node, so each coupling amplitude is a
/// single dot product with the sampled input field.
#[derive(Debug, Clone)]
pub struct Detector {
    grid: QuadratureGrid,
    kernel: Vec<Complex64>,
    waist: f64,
    scale: f64,
}

impl Detector {
    /// Detector with its mask normalized to its own peak.
    pub fn new(detector: &SpatialState, model: &DetectionModel) -> Result<Self> {
        Self::build(detector, model, model.grid(), None)
    }

    /// Detector whose amplitude mask is divided by a shared `scale`.
    pub fn with_mask_scale(detector: &SpatialState, model: &DetectionModel, scale: f64) -> Result<Self> {
        Self::build(detector, model, model.grid(), Some(scale))
    }

    fn build(detector: &SpatialState, model: &DetectionModel, spec: &GridSpec, scale: Option<f64>) -> Result<Self> {
        let kind = model.mask_kind();
        let grid = match kind {
            MaskKind::PhaseOnly => build_grid_with_breakpoints(spec, &phase_jump_radii(detector))?,
            MaskKind::AmplitudeAndPhase => build_grid(spec)?,
        };
        let samples = detector.sample_on(&grid);
        let scale = match (kind, scale) {
            (MaskKind::PhaseOnly, _) => 1.0,
            (MaskKind::AmplitudeAndPhase, Some(s)) => s,
            (MaskKind::AmplitudeAndPhase, None) => peak_from_samples(detector, &grid, &samples),
        };
        Self::from_samples(grid, &samples, kind, scale, detector.waist(), model.beta())
    }

    /// Builds the kernel from detection-state samples already taken on `grid`.
    /// The grid must be plain (no breakpoints) for phase-only masks to be
    /// integrated accurately; amplitude masks are smooth on any grid.
    pub fn from_samples(
        grid: QuadratureGrid,
        detector_samples: &[Complex64],
        kind: MaskKind,
        scale: f64,
        waist: f64,
        beta: f64,
    ) -> Result<Self> {
        if detector_samples.len() != grid.len() {
            return Err(Error::InvalidArgument("sample count does not match grid".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("mask scale must be positive, got {scale}")));
        }
        let n_az = grid.azimuthal_nodes().len();
        let w_az = grid.azimuthal_weight();
        let big_w = beta * waist;
        let mut kernel = Vec::with_capacity(grid.len());
        for (i, (&r, &wr)) in grid.radial_nodes().iter().zip(grid.radial_weights()).enumerate() {
            let g = wr * w_az * backward_gaussian(big_w, r);
            for psi in &detector_samples[i * n_az..(i + 1) * n_az] {
                kernel.push(mask_from_field(kind, scale, *psi) * g);
            }
        }
        Ok(Self { grid, kernel, waist, scale })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// Normalization actually applied to the amplitude mask (1 for phase-only).
    pub fn mask_scale(&self) -> f64 {
        self.scale
    }

    pub fn amplitude(&self, input: &SpatialState) -> Result<Complex64> {
        check_waists(input.waist(), self.waist)?;
        Ok(self.amplitude_sampled(&input.sample_on(&self.grid)))
    }

    /// Coupling amplitude for an input already sampled on [`Detector::grid`].
    pub fn amplitude_sampled(&self, input_samples: &[Complex64]) -> Complex64 {
        debug_assert_eq!(input_samples.len(), self.kernel.len());
        self.kernel.iter().zip(input_samples).map(|(k, v)| k * v).sum()
    }
}

fn check_waists(input: f64, detector: f64) -> Result<()> {
    if (input - detector).abs() > 1e-12 * detector.abs() {
        return Err(Error::InvalidArgument(format!("input waist {input} differs from detector waist {detector}")));
    }
    Ok(())
}

pub fn coupling_amplitude(input: &SpatialState, detector: &SpatialState, model: &DetectionModel) -> Result<Complex64> {
    Detector::new(detector, model)?.amplitude(input)
}

pub fn detection_probability(input: &SpatialState, detector: &SpatialState, model: &DetectionModel) -> Result<f64> {
    coupling_amplitude(input, detector, model).map(|c| c.norm_sqr())
}

/// [`coupling_amplitude`] with the grid-refinement and aperture checks of
/// [`crate::quadrature::converged_overlap`].
pub fn converged_coupling_amplitude(
    input: &SpatialState,
    detector: &SpatialState,
    model: &DetectionModel,
    rel_tol: f64,
) -> Result<Complex64> {
    check_waists(input.waist(), detector.waist())?;
    check_converged(model.grid(), rel_tol, |spec| Detector::build(detector, model, spec, None)?.amplitude(input))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::ModeIndex;

    fn grid() -> GridSpec {
        GridSpec::for_modes(1.0, 4)
    }

    #[test]
    fn model_validation() {
        let g = grid();
        assert!(DetectionModel::intensity_flattening(0.5, g).is_err());
        assert!(DetectionModel::intensity_flattening(8.4, g).is_ok());
        assert!(DetectionModel::new(Method::PhaseFlattening, 2.0, g).is_err());
        assert!(DetectionModel::new(Method::PhaseFlatteningAm, 1.0, g).is_ok());
        assert!(DetectionModel::new(Method::IntensityFlattening, f64::NAN, g).is_err());
        assert_eq!("pf-am".parse::<Method>().unwrap(), Method::PhaseFlatteningAm);
        assert!("sorter".parse::<Method>().is_err());
    }

    #[test]
    fn phase_only_vortex() {
        let g = build_grid(&grid()).unwrap();
        let m = MaskFunction::new(SpatialState::single(ModeIndex::new(3, 0), 1.0), MaskKind::PhaseOnly, &g);
        for (r, phi) in [(0.3, 0.1), (1.7, 2.0), (4.0, -1.0)] {
            let v = mask_value(&m, r, phi);
            let want = Complex64::from_polar(1.0, -3.0 * phi);
            assert!((v - want).norm() < 1e-12);
        }
        // field null at the origin
        assert_eq!(mask_value(&m, 0.0, 0.4), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn amplitude_mask_gaussian_and_p1() {
        let g = build_grid(&grid()).unwrap();
        let m = MaskFunction::new(SpatialState::single(ModeIndex::new(0, 0), 1.0), MaskKind::AmplitudeAndPhase, &g);
        assert!((m.scale() - (2.0 / PI).sqrt()).abs() < 1e-15);
        for r in [0.0, 0.5, 1.3, 2.2] {
            let v = mask_value(&m, r, 0.7);
            assert!((v.re - (-r * r).exp()).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
        // |(1 - 2u) e^{-u}| peaks at u = 0 with value 1
        let m = MaskFunction::new(SpatialState::single(ModeIndex::new(0, 1), 1.0), MaskKind::AmplitudeAndPhase, &g);
        for r in [0.0, 0.4, 1.0, 1.9] {
            let u = r * r;
            let v = mask_value(&m, r, 1.1);
            assert!((v.re - (1.0 - 2.0 * u) * (-u).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn amplitude_mask_bounded_off_grid() {
        let g = build_grid(&grid()).unwrap();
        for mode in [ModeIndex::new(1, 0), ModeIndex::new(-3, 2), ModeIndex::new(4, 1)] {
            let m = MaskFunction::new(SpatialState::single(mode, 1.0), MaskKind::AmplitudeAndPhase, &g);
            let mut max = 0f64;
            for i in 0..4000 {
                let r = 4.0 * i as f64 / 4000.0;
                max = max.max(mask_value(&m, r, 0.2).norm());
            }
            assert!(max <= 1.0 + 1e-12, "{mode}: {max}");
            assert!(max > 1.0 - 1e-6, "{mode}: {max}");
        }
    }

    #[test]
    fn waist_mismatch_rejected() {
        let model = DetectionModel::intensity_flattening(2.0, grid()).unwrap();
        let a = SpatialState::single(ModeIndex::new(0, 0), 1.0);
        let b = SpatialState::single(ModeIndex::new(0, 0), 1.5);
        assert!(coupling_amplitude(&a, &b, &model).is_err());
    }
}
