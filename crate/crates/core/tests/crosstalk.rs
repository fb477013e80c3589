use lgflat::crosstalk::{
    azimuthal_states, crosstalk_matrix, efficiency_vs_dimension_scan, full_field_states, mean_efficiency,
    min_beta_for_visibility, radial_states, visibility, ScanConfig,
};
use lgflat::detection::DetectionModel;
use lgflat::error::Error;
use lgflat::quadrature::GridSpec;

fn radial_grid() -> GridSpec {
    GridSpec::for_modes(1.0, 0)
}

#[test]
fn radial_eight_at_beta_8_4() {
    let m = crosstalk_matrix(
        &radial_states(0, 0..=7, 1.0),
        &DetectionModel::intensity_flattening(8.4, radial_grid()).unwrap(),
    )
    .unwrap();
    assert_eq!(m.dim(), 8);
    assert_eq!(m.labels()[3], "l0p3");
    assert!(visibility(&m).unwrap() >= 0.99);
    assert!(m.model().is_some());
}

#[test]
fn azimuthal_off_diagonals_vanish() {
    let states = azimuthal_states(0, -3..=3, 1.0);
    let spec = GridSpec::for_modes(1.0, 3);
    for model in
        [DetectionModel::intensity_flattening(2.0, spec).unwrap(), DetectionModel::phase_flattening(spec).unwrap()]
    {
        let m = crosstalk_matrix(&states, &model).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    assert!(m.get(i, j) < 1e-12);
                }
            }
        }
    }
}

#[test]
fn full_field_set() {
    let states = full_field_states(10, 1.0);
    assert_eq!(states.len(), 55);
    let model = DetectionModel::intensity_flattening(8.4, GridSpec::for_modes(1.0, 9)).unwrap();
    let m = crosstalk_matrix(&states, &model).unwrap();
    assert!(visibility(&m).unwrap() > 0.99);
}

#[test]
fn minimal_beta_radial_eight() {
    let p = min_beta_for_visibility(&radial_states(0, 0..=7, 1.0), 0.99, (1.0, 32.0), &radial_grid()).unwrap();
    assert!((p.beta_min - 5.4).abs() <= 0.5, "beta_min = {}", p.beta_min);
    assert!(p.visibility >= 0.99);
    assert_eq!(p.dimension, 8);
}

#[test]
fn single_state_needs_no_search() {
    let p = min_beta_for_visibility(&radial_states(0, 0..=0, 1.0), 0.99, (1.0, 32.0), &radial_grid()).unwrap();
    assert_eq!(p.beta_min, 1.0);
    assert_eq!(p.visibility, 1.0);
}

#[test]
fn unreachable_target() {
    let r = min_beta_for_visibility(&radial_states(0, 0..=7, 1.0), 0.999_999, (1.0, 2.0), &radial_grid());
    assert!(matches!(r, Err(Error::Unachievable { .. })));
}

#[test]
fn three_targets_radial_ten() {
    let states = radial_states(0, 0..=9, 1.0);
    let pts: Vec<_> = [0.90, 0.95, 0.99]
        .iter()
        .map(|&t| min_beta_for_visibility(&states, t, (1.0, 32.0), &radial_grid()).unwrap())
        .collect();
    assert!(pts[0].beta_min < pts[1].beta_min && pts[1].beta_min < pts[2].beta_min);
    assert!(pts[0].mean_efficiency > pts[1].mean_efficiency && pts[1].mean_efficiency > pts[2].mean_efficiency);
    assert!((pts[2].mean_efficiency - 0.025).abs() <= 0.01, "{}", pts[2].mean_efficiency);
}

#[test]
fn scan_is_monotone() {
    let targets = [0.90, 0.95, 0.99];
    let pts = efficiency_vs_dimension_scan(10, &targets, &ScanConfig::default()).unwrap();
    assert_eq!(pts.len(), 27);
    for (k, &t) in targets.iter().enumerate() {
        let series: Vec<f64> = pts.iter().skip(k).step_by(3).map(|p| p.mean_efficiency).collect();
        assert!(pts.iter().skip(k).step_by(3).all(|p| p.target_visibility == t));
        assert!(series.windows(2).all(|w| w[1] < w[0]), "target {t}: {series:?}");
    }
    for d in 0..9 {
        let e: Vec<f64> = pts[3 * d..3 * d + 3].iter().map(|p| p.mean_efficiency).collect();
        assert!(e[0] >= e[1] && e[1] >= e[2]);
    }
}

#[test]
fn small_target_stays_near_lower_bracket() {
    let p = min_beta_for_visibility(&radial_states(0, 0..=3, 1.0), 0.05, (1.0, 32.0), &radial_grid()).unwrap();
    assert_eq!(p.beta_min, 1.0);
    let m = crosstalk_matrix(
        &radial_states(0, 0..=3, 1.0),
        &DetectionModel::intensity_flattening(1.0, radial_grid()).unwrap(),
    )
    .unwrap();
    assert_eq!(p.mean_efficiency, mean_efficiency(&m));
}
