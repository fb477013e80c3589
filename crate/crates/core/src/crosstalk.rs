//! Crosstalk matrices, visibility and the visibility/efficiency trade-off.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{peak_from_samples, DetectionModel, Detector, MaskKind};
use crate::error::{Error, Result};
use crate::modes::{enumerate_modes, ModeIndex, SpatialState};
use crate::quadrature::{build_grid, GridSpec};

/// Probabilities `C[i][j]` of detecting state `j` given input state `i`.
///
/// Stored probabilities are never rescaled; see
/// [`CrosstalkMatrix::normalized_to_max`] for the display form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMatrix {
    labels: Vec<String>,
    values: Vec<f64>,
    model: Option<DetectionModel>,
}

const RANGE_TOL: f64 = 1e-9;

impl CrosstalkMatrix {
    /// Row-major `values`, `labels.len()²` entries, each in `[0, 1]`.
    pub fn new(labels: Vec<String>, values: Vec<f64>, model: Option<DetectionModel>) -> Result<Self> {
        let d = labels.len();
        if d == 0 || values.len() != d * d {
            return Err(Error::InvalidArgument(format!("{} labels need {} entries, got {}", d, d * d, values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < -RANGE_TOL || **v > 1.0 + RANGE_TOL) {
            return Err(Error::InvalidArgument(format!("crosstalk entry {v} outside [0, 1]")));
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { labels, values, model })
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let d = labels.len();
        let values = (0..d * d).map(|k| if k / d == k % d { 1.0 } else { 0.0 }).collect();
        Self { labels, values, model: None }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn model(&self) -> Option<&DetectionModel> {
        self.model.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(move |i| self.get(i, i))
    }

    /// Rows and columns restricted to `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Result<Self> {
        let d = self.dim();
        if indices.iter().any(|&i| i >= d) {
            return Err(Error::InvalidArgument(format!("subset index out of range for dimension {d}")));
        }
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        let values =
            indices.iter().flat_map(|&i| indices.iter().map(move |&j| (i, j))).map(|(i, j)| self.get(i, j)).collect();
        Ok(Self { labels, values, model: self.model })
    }

    /// Every entry divided by the largest one, as the matrices are plotted.
    pub fn normalized_to_max(&self) -> Vec<f64> {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return self.values.clone();
        }
        self.values.iter().map(|v| v / max).collect()
    }
}

/// `sum_i C_ii / sum_ij C_ij`.
pub fn visibility(m: &CrosstalkMatrix) -> Result<f64> {
    let total: f64 = m.values.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateMatrix);
    }
    Ok(m.diagonal().sum::<f64>() / total)
}

/// Mean of the diagonal.
pub fn mean_efficiency(m: &CrosstalkMatrix) -> f64 {
    m.diagonal().sum::<f64>() / m.dim() as f64
}

fn check_states(states: &[SpatialState]) -> Result<()> {
    let Some(first) = states.first() else {
        return Err(Error::InvalidArgument("empty state list".into()));
    };
    if states.iter().any(|s| (s.waist() - first.waist()).abs() > 1e-12 * first.waist()) {
        return Err(Error::InvalidArgument("states must share one waist".into()));
    }
    for (i, a) in states.iter().enumerate() {
        if states[..i].iter().any(|b| b == a) {
            return Err(Error::InvalidArgument(format!("state {} appears twice", a.label())));
        }
    }
    Ok(())
}

/// `C_ij = detection_probability(states[i], states[j], model)`.
///
/// Entries are computed independently in parallel, so the result does not
/// depend on the thread count.
pub fn crosstalk_matrix(states: &[SpatialState], model: &DetectionModel) -> Result<CrosstalkMatrix> {
    check_states(states)?;
    let d = states.len();
    let labels = states.iter().map(SpatialState::label).collect();

    let columns: Vec<Vec<f64>> = match model.mask_kind() {
        MaskKind::AmplitudeAndPhase => {
            // smooth masks: one shared grid, every state sampled once
            let grid = build_grid(model.grid())?;
            let samples: Vec<_> = states.par_iter().map(|s| s.sample_on(&grid)).collect();
            states
                .par_iter()
                .zip(&samples)
                .map(|(det, det_samples)| {
                    let scale = peak_from_samples(det, &grid, det_samples);
                    let detector = Detector::from_samples(
                        grid.clone(),
                        det_samples,
                        MaskKind::AmplitudeAndPhase,
                        scale,
                        det.waist(),
                        model.beta(),
                    )?;
                    Ok(samples.iter().map(|s| detector.amplitude_sampled(s).norm_sqr()).collect())
                })
                .collect::<Result<_>>()?
        }
        MaskKind::PhaseOnly => states
            .par_iter()
            .map(|det| {
                let detector = Detector::new(det, model)?;
                states.iter().map(|input| detector.amplitude(input).map(|c| c.norm_sqr())).collect()
            })
            .collect::<Result<_>>()?,
    };

    let mut values = vec![0.0; d * d];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * d + j] = *v;
        }
    }
    CrosstalkMatrix::new(labels, values, Some(*model))
}

/// Radial family `LG_{ell, p}` for `p` in `p_range`.
pub fn radial_states(ell: i32, p_range: std::ops::RangeInclusive<u32>, waist: f64) -> Vec<SpatialState> {
    p_range.map(|p| SpatialState::single(ModeIndex::new(ell, p), waist)).collect()
}

/// Azimuthal family `LG_{ell, p}` for `ell` in `ell_range`.
pub fn azimuthal_states(p: u32, ell_range: std::ops::RangeInclusive<i32>, waist: f64) -> Vec<SpatialState> {
    ell_range.map(|ell| SpatialState::single(ModeIndex::new(ell, p), waist)).collect()
}

/// All modes of order at most `max_order`, in canonical order.
pub fn full_field_states(max_order: u32, waist: f64) -> Vec<SpatialState> {
    enumerate_modes(max_order).into_iter().map(|m| SpatialState::single(m, waist)).collect()
}

/// Smallest backward-waist ratio reaching a target visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub dimension: usize,
    pub target_visibility: f64,
    pub beta_min: f64,
    pub mean_efficiency: f64,
    /// Visibility actually reached at `beta_min`.
    pub visibility: f64,
}

const COARSE_STEPS: usize = 8;
const BISECT_REL_WIDTH: f64 = 1e-3;
const MONOTONE_SLACK: f64 = 1e-12;

/// Bisection on `beta` under intensity flattening for the smallest `beta` in
/// `beta_range` with `V >= target`.
///
/// A coarse geometric pass over the range first checks that `V(beta)` is
/// nondecreasing; the bracket is then bisected to relative width `1e-3`.
pub fn min_beta_for_visibility(
    states: &[SpatialState],
    target: f64,
    beta_range: (f64, f64),
    grid: &GridSpec,
) -> Result<TradeoffPoint> {
    let (lo, hi) = beta_range;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target visibility must be in (0, 1), got {target}")));
    }
    if !(lo >= 1.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid beta range [{lo}, {hi}]")));
    }
    let eval = |beta: f64| -> Result<(f64, f64)> {
        let model = DetectionModel::intensity_flattening(beta, *grid)?;
        let m = crosstalk_matrix(states, &model)?;
        Ok((visibility(&m)?, mean_efficiency(&m)))
    };
    let point = |beta: f64, (v, eff): (f64, f64)| TradeoffPoint {
        dimension: states.len(),
        target_visibility: target,
        beta_min: beta,
        mean_efficiency: eff,
        visibility: v,
    };

    if states.len() == 1 {
        return Ok(point(lo, eval(lo)?));
    }

    let betas: Vec<f64> = (0..=COARSE_STEPS).map(|k| lo * (hi / lo).powf(k as f64 / COARSE_STEPS as f64)).collect();
    let coarse: Vec<(f64, f64)> = betas.iter().map(|&b| eval(b)).collect::<Result<_>>()?;
    for k in 1..coarse.len() {
        if coarse[k].0 < coarse[k - 1].0 - MONOTONE_SLACK {
            return Err(Error::NonMonotone { beta: betas[k] });
        }
    }
    let last = coarse[COARSE_STEPS];
    if last.0 < target {
        return Err(Error::Unachievable { target, beta_hi: hi, achieved: last.0 });
    }
    if coarse[0].0 >= target {
        return Ok(point(lo, coarse[0]));
    }

    let k = coarse.iter().position(|c| c.0 >= target).expect("V(hi) >= target");
    let (mut a, mut b) = (betas[k - 1], betas[k]);
    let (mut va, mut at_b) = (coarse[k - 1].0, coarse[k]);
    while (b - a) / b > BISECT_REL_WIDTH {
        let mid = 0.5 * (a + b);
        let at_mid = eval(mid)?;
        if at_mid.0 < va - MONOTONE_SLACK || at_mid.0 > at_b.0 + MONOTONE_SLACK {
            return Err(Error::NonMonotone { beta: mid });
        }
        if at_mid.0 >= target {
            b = mid;
            at_b = at_mid;
        } else {
            a = mid;
            va = at_mid.0;
        }
    }
    Ok(point(b, at_b))
}

/// Settings for [`efficiency_vs_dimension_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub beta_range: (f64, f64),
    pub waist: f64,
    pub grid: GridSpec,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { beta_range: (1.0, 32.0), waist: 1.0, grid: GridSpec::for_modes(1.0, 0) }
    }
}

/// For each `d` in `2..=d_max` and each target, the minimal `beta` on the
/// radial family `p = 0..d-1` and the mean efficiency there.
pub fn efficiency_vs_dimension_scan(d_max: usize, targets: &[f64], config: &ScanConfig) -> Result<Vec<TradeoffPoint>> {
    if d_max < 2 {
        return Err(Error::InvalidArgument(format!("d_max must be >= 2, got {d_max}")));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target visibilities".into()));
    }
    let jobs: Vec<(usize, f64)> = (2..=d_max).flat_map(|d| targets.iter().map(move |&t| (d, t))).collect();
    jobs.par_iter()
        .map(|&(d, t)| {
            let states = radial_states(0, 0..=(d as u32 - 1), config.waist);
            min_beta_for_visibility(&states, t, config.beta_range, &config.grid)
        })
        .collect()
}
