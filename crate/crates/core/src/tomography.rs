//! Tomography in mutually unbiased bases (prime dimensions only).
//!
//! States on a `d`-mode support are handled as coefficient vectors in the
//! order of the support list. Reconstruction is the linear direct inversion
//! `rho = sum P Pi - 1`, which is not guaranteed positive.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{peak_from_samples, DetectionModel, Detector, MaskKind};
use crate::error::{Error, Result};
use crate::modes::{ModeIndex, SpatialState};
use crate::quadrature::build_grid;

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    (2..).take_while(|k| k * k <= n).all(|k| !n.is_multiple_of(k))
}

/// `d + 1` orthonormal bases over a fixed support; basis 0 is computational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MubSet {
    dimension: usize,
    support: Vec<ModeIndex>,
    /// `bases[alpha][m][k] = <k|psi_m^alpha>`
    bases: Vec<Vec<Vec<Complex64>>>,
}

/// MUBs for prime `d`. Odd `d` uses `<k|psi_m^a> = w^(a k^2 + m k) / sqrt(d)`
/// with `w = exp(2 pi i / d)` for `a = 0..d`; `d = 2` uses the Pauli eigenbases.
pub fn mub_bases(d: usize, support: &[ModeIndex]) -> Result<MubSet> {
    if !is_prime(d) {
        return Err(Error::NotPrime(d));
    }
    if support.len() != d {
        return Err(Error::InvalidArgument(format!("support has {} modes, dimension is {d}", support.len())));
    }
    let mut sorted = support.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != d {
        return Err(Error::InvalidArgument("support modes must be distinct".into()));
    }

    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let computational: Vec<Vec<Complex64>> =
        (0..d).map(|m| (0..d).map(|k| if k == m { one } else { zero }).collect()).collect();
    let mut bases = vec![computational];
    if d == 2 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let i = Complex64::new(0.0, 1.0);
        bases.push(vec![vec![one * s, one * s], vec![one * s, -one * s]]);
        bases.push(vec![vec![one * s, i * s], vec![one * s, -i * s]]);
    } else {
        let amp = 1.0 / (d as f64).sqrt();
        for a in 0..d {
            let basis = (0..d)
                .map(|m| {
                    (0..d)
                        .map(|k| {
                            let e = (a * k * k + m * k) % d;
                            Complex64::from_polar(amp, 2.0 * PI * e as f64 / d as f64)
                        })
                        .collect()
                })
                .collect();
            bases.push(basis);
        }
    }
    Ok(MubSet { dimension: d, support: support.to_vec(), bases })
}

impl MubSet {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support(&self) -> &[ModeIndex] {
        &self.support
    }

    pub fn num_bases(&self) -> usize {
        self.bases.len()
    }

    /// Coefficients of `|psi_m^alpha>` over the support.
    pub fn vector(&self, alpha: usize, m: usize) -> &[Complex64] {
        &self.bases[alpha][m]
    }

    pub fn state(&self, alpha: usize, m: usize, waist: f64) -> Result<SpatialState> {
        SpatialState::normalized(self.support.clone(), self.bases[alpha][m].clone(), waist)
    }

    /// `|psi_m^alpha><psi_m^alpha|`
    pub fn projector(&self, alpha: usize, m: usize) -> DMatrix<Complex64> {
        let v = DVector::from_column_slice(&self.bases[alpha][m]);
        &v * v.adjoint()
    }

    /// Largest deviations from orthonormality, unbiasedness and completeness.
    pub fn check(&self) -> MubReport {
        let d = self.dimension;
        let mut orthonormality: f64 = 0.0;
        let mut unbiasedness: f64 = 0.0;
        for a in 0..self.bases.len() {
            for b in a..self.bases.len() {
                for m in 0..d {
                    for n in 0..d {
                        let o = inner(&self.bases[a][m], &self.bases[b][n]).norm_sqr();
                        if a != b {
                            unbiasedness = unbiasedness.max((o - 1.0 / d as f64).abs());
                        } else {
                            orthonormality = orthonormality.max((o - if m == n { 1.0 } else { 0.0 }).abs());
                        }
                    }
                }
            }
        }
        let mut sum = DMatrix::<Complex64>::zeros(d, d);
        for a in 0..self.bases.len() {
            for m in 0..d {
                sum += self.projector(a, m);
            }
        }
        let target = DMatrix::<Complex64>::identity(d, d) * Complex64::new((d + 1) as f64, 0.0);
        let completeness = (sum - target).iter().map(|z| z.norm()).fold(0.0, f64::max);
        MubReport { dimension: d, orthonormality, unbiasedness, completeness }
    }

    /// Coefficients of `state` in support order; errors if it leaves the support.
    pub fn coefficients_of(&self, state: &SpatialState) -> Result<Vec<Complex64>> {
        support_coefficients(&self.support, state)
    }
}

/// Worst-case errors of a [`MubSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MubReport {
    pub dimension: usize,
    /// `max | |<m|n>|^2 - delta_mn |` within a basis.
    pub orthonormality: f64,
    /// `max | |<m|n>|^2 - 1/d |` across bases.
    pub unbiasedness: f64,
    /// `max | (sum Pi - (d+1) 1)_ij |`
    pub completeness: f64,
}

impl MubReport {
    pub fn passes(&self, pair_tol: f64, completeness_tol: f64) -> bool {
        self.orthonormality <= pair_tol && self.unbiasedness <= pair_tol && self.completeness <= completeness_tol
    }
}

fn support_coefficients(support: &[ModeIndex], state: &SpatialState) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); support.len()];
    for (mode, c) in state.modes().iter().zip(state.coeffs()) {
        match support.iter().position(|s| s == mode) {
            Some(k) => out[k] = *c,
            None if c.norm() == 0.0 => {}
            None => {
                return Err(Error::InvalidArgument(format!("mode {mode} is outside the support")));
            }
        }
    }
    Ok(out)
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// How amplitude masks of the `(d+1) d` measurement states are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskNormalization {
    /// One scale for the whole set: the largest peak over all states.
    #[default]
    SharedPeak,
    /// Each mask divided by its own peak.
    PerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord {
    /// `probs[alpha][m]`, each row summing to 1.
    pub probs: Vec<Vec<f64>>,
    pub mubs: MubSet,
    /// `None` for ideal projectors.
    pub model: Option<DetectionModel>,
}

/// Ideal projective measurement: `P = |<psi_m^alpha|truth>|^2`.
pub fn exact_tomography(truth: &SpatialState, mubs: &MubSet) -> Result<TomographyRecord> {
    let psi = mubs.coefficients_of(truth)?;
    let raw: Vec<Vec<f64>> =
        mubs.bases.iter().map(|basis| basis.iter().map(|v| inner(v, &psi).norm_sqr()).collect()).collect();
    Ok(TomographyRecord { probs: renormalize(raw)?, mubs: mubs.clone(), model: None })
}

pub fn simulate_tomography(truth: &SpatialState, mubs: &MubSet, model: &DetectionModel) -> Result<TomographyRecord> {
    simulate_tomography_with(truth, mubs, model, MaskNormalization::default())
}

/// Measures `truth` against every MUB state through `model`, then
/// renormalizes each basis's outcomes to sum to 1.
pub fn simulate_tomography_with(
    truth: &SpatialState,
    mubs: &MubSet,
    model: &DetectionModel,
    normalization: MaskNormalization,
) -> Result<TomographyRecord> {
    let psi = mubs.coefficients_of(truth)?;
    let waist = truth.waist();
    let d = mubs.dimension;
    let grid = build_grid(model.grid())?;
    let support_samples: Vec<Vec<Complex64>> =
        mubs.support.par_iter().map(|m| SpatialState::single(*m, waist).sample_on(&grid)).collect();
    let combine = |coeffs: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (c, s) in coeffs.iter().zip(&support_samples) {
            if c.norm() == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(s) {
                *o += c * v;
            }
        }
        out
    };
    let truth_samples = combine(&psi);

    let jobs: Vec<(usize, usize)> = (0..mubs.num_bases()).flat_map(|a| (0..d).map(move |m| (a, m))).collect();
    let kind = model.mask_kind();

    // amplitude masks need the peak of every state before any can be built
    let peaks: Vec<f64> = match kind {
        MaskKind::PhaseOnly => vec![1.0; jobs.len()],
        MaskKind::AmplitudeAndPhase => jobs
            .par_iter()
            .map(|&(a, m)| {
                let state = mubs.state(a, m, waist)?;
                Ok(peak_from_samples(&state, &grid, &combine(mubs.vector(a, m))))
            })
            .collect::<Result<_>>()?,
    };
    let shared = peaks.iter().copied().fold(0.0, f64::max);

    let raw: Vec<f64> = jobs
        .par_iter()
        .zip(&peaks)
        .map(|(&(a, m), &peak)| {
            let state = mubs.state(a, m, waist)?;
            let amp = match (kind, state.as_single_mode()) {
                // single-mode phase masks jump at the Laguerre zeros; the
                // detector's own grid puts panel edges there
                (MaskKind::PhaseOnly, Some(_)) => Detector::new(&state, model)?.amplitude(truth)?,
                _ => {
                    let scale = match normalization {
                        MaskNormalization::SharedPeak => shared,
                        MaskNormalization::PerState => peak,
                    };
                    let det = Detector::from_samples(
                        grid.clone(),
                        &combine(mubs.vector(a, m)),
                        kind,
                        scale,
                        waist,
                        model.beta(),
                    )?;
                    det.amplitude_sampled(&truth_samples)
                }
            };
            Ok(amp.norm_sqr())
        })
        .collect::<Result<_>>()?;

    let raw: Vec<Vec<f64>> = raw.chunks(d).map(<[f64]>::to_vec).collect();
    Ok(TomographyRecord { probs: renormalize(raw)?, mubs: mubs.clone(), model: Some(*model) })
}

fn renormalize(raw: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    raw.into_iter()
        .enumerate()
        .map(|(basis, row)| {
            let total: f64 = row.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::DegenerateBasis { basis });
            }
            Ok(row.into_iter().map(|p| p / total).collect())
        })
        .collect()
}

/// Reconstructed `d x d` density matrix over a mode support.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    support: Vec<ModeIndex>,
    rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(support: Vec<ModeIndex>, rho: DMatrix<Complex64>) -> Result<Self> {
        if !rho.is_square() || rho.nrows() != support.len() {
            return Err(Error::InvalidArgument("density matrix shape does not match support".into()));
        }
        Ok(Self { support, rho })
    }

    /// `|psi><psi|` of a pure state on `support`.
    pub fn pure(support: &[ModeIndex], state: &SpatialState) -> Result<Self> {
        let v = DVector::from_vec(support_coefficients(support, state)?);
        Self::new(support.to_vec(), &v * v.adjoint())
    }

    pub fn support(&self) -> &[ModeIndex] {
        &self.support
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.rho - self.rho.adjoint()).iter().all(|z| z.norm() <= tol)
    }

    /// Largest elementwise distance to `other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (&self.rho - &other.rho).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `rho = sum_{alpha,m} P_m^alpha Pi_m^alpha - 1`.
pub fn direct_inversion(rec: &TomographyRecord) -> DensityMatrix {
    let d = rec.mubs.dimension;
    let mut rho = -DMatrix::<Complex64>::identity(d, d);
    for (a, row) in rec.probs.iter().enumerate() {
        for (m, &p) in row.iter().enumerate() {
            rho += rec.mubs.projector(a, m) * Complex64::new(p, 0.0);
        }
    }
    DensityMatrix { support: rec.mubs.support.clone(), rho }
}

/// `Re <psi|rho|psi>` for a pure target; not clipped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, truth: &SpatialState) -> Result<f64> {
    let psi = DVector::from_vec(support_coefficients(&rho.support, truth)?);
    Ok((psi.adjoint() * &rho.rho * &psi)[(0, 0)].re)
}

/// Haar-random pure state on `support` (normalized complex Gaussian vector).
pub fn random_pure_state(support: &[ModeIndex], waist: f64, seed: u64) -> Result<SpatialState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = support
        .iter()
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    SpatialState::normalized(support.to_vec(), coeffs, waist)
}

/// Radial support `LG_{ell, p}` for `p = 0..d`.
pub fn radial_support(ell: i32, d: usize) -> Vec<ModeIndex> {
    (0..d as u32).map(|p| ModeIndex::new(ell, p)).collect()
}

/// OAM support `LG_{ell, 0}` for `d` consecutive `ell` centred on zero
/// (odd `d`), or `-d/2 + 1 ..= d/2` for even `d`.
pub fn oam_support(d: usize) -> Vec<ModeIndex> {
    let lo = -(((d - 1) / 2) as i32);
    (0..d as i32).map(|k| ModeIndex::new(lo + k, 0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes() {
        let p: Vec<usize> = (0..30).filter(|&n| is_prime(n)).collect();
        assert_eq!(p, [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn composite_rejected() {
        assert!(matches!(mub_bases(6, &radial_support(0, 6)), Err(Error::NotPrime(6))));
        assert!(mub_bases(5, &radial_support(0, 4)).is_err());
        let dup = vec![ModeIndex::new(0, 0); 3];
        assert!(mub_bases(3, &dup).is_err());
    }

    #[test]
    fn qubit_bases() {
        let mubs = mub_bases(2, &oam_support(2)).unwrap();
        assert_eq!(mubs.num_bases(), 3);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(mubs.vector(2, 1)[1], Complex64::new(0.0, -s));
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            for m in 0..2 {
                for n in 0..2 {
                    let o = inner(mubs.vector(a, m), mubs.vector(b, n)).norm_sqr();
                    assert!((o - 0.5).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn projector_probabilities() {
        let mubs = mub_bases(5, &radial_support(0, 5)).unwrap();
        let truth = mubs.state(2, 3, 1.0).unwrap();
        let rec = exact_tomography(&truth, &mubs).unwrap();
        for (a, row) in rec.probs.iter().enumerate() {
            for (m, p) in row.iter().enumerate() {
                let want = if a == 2 {
                    if m == 3 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.2
                };
                assert!((p - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maximally_mixed_inversion() {
        let mubs = mub_bases(3, &oam_support(3)).unwrap();
        let rec = TomographyRecord { probs: vec![vec![1.0 / 3.0; 3]; 4], mubs, model: None };
        let rho = direct_inversion(&rec);
        let want = DMatrix::<Complex64>::identity(3, 3) / Complex64::new(3.0, 0.0);
        assert!((rho.matrix() - want).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn fidelity_of_mixed_state() {
        let support = oam_support(7);
        let rho = DensityMatrix::new(support.clone(), DMatrix::<Complex64>::identity(7, 7) / Complex64::new(7.0, 0.0))
            .unwrap();
        let psi = random_pure_state(&support, 1.0, 3).unwrap();
        assert!((fidelity(&rho, &psi).unwrap() - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn outside_support_rejected() {
        let mubs = mub_bases(3, &oam_support(3)).unwrap();
        let stray = SpatialState::single(ModeIndex::new(4, 0), 1.0);
        assert!(exact_tomography(&stray, &mubs).is_err());
    }

    #[test]
    fn degenerate_basis_flagged() {
        assert!(matches!(renormalize(vec![vec![0.5, 0.5], vec![0.0, 0.0]]), Err(Error::DegenerateBasis { basis: 1 })));
    }

    #[test]
    fn self_check() {
        let r = mub_bases(7, &oam_support(7)).unwrap().check();
        assert!(r.passes(1e-12, 1e-10), "{r:?}");
        assert_eq!(r.dimension, 7);
    }

    #[test]
    fn supports() {
        let o = oam_support(5);
        assert_eq!(o.first().unwrap().ell, -2);
        assert_eq!(o.last().unwrap().ell, 2);
        assert_eq!(oam_support(2).iter().map(|m| m.ell).collect::<Vec<_>>(), [0, 1]);
    }
}
