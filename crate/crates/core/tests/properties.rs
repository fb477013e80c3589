use lgflat::crosstalk::{crosstalk_matrix, radial_states, visibility, CrosstalkMatrix};
use lgflat::detection::{detection_probability, DetectionModel};
use lgflat::modes::{enumerate_modes, lg_field, ModeIndex, SpatialState};
use lgflat::qkd::{entropy_d, secret_key_rate};
use lgflat::quadrature::{build_grid, overlap, GridSpec};
use lgflat::tomography::{
    direct_inversion, exact_tomography, fidelity, mub_bases, oam_support, radial_support, random_pure_state,
    DensityMatrix,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn mode() -> impl Strategy<Value = ModeIndex> {
    (-4i32..=4, 0u32..=3).prop_map(|(l, p)| ModeIndex::new(l, p))
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

#[test]
fn unit_norm_up_to_order_ten() {
    let g = build_grid(&GridSpec::for_modes(1.0, 9)).unwrap();
    for m in enumerate_modes(10) {
        let f = |r, phi| lg_field(m, 1.0, r, phi);
        let n = overlap(f, f, |_| 1.0, &g);
        assert!((n.re - 1.0).abs() < 1e-8 && n.im.abs() < 1e-12, "{m}: {n}");
    }
}

#[test]
fn enumeration_counts() {
    for n in 1..=12 {
        let modes = enumerate_modes(n);
        assert_eq!(modes.len() as u32, n * (n + 1) / 2);
        let mut sorted = modes.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), modes.len());
        assert!(modes.iter().all(|m| m.order() <= n));
    }
}

#[test]
fn visibility_nondecreasing_efficiency_nonincreasing() {
    let states = radial_states(0, 0..=7, 1.0);
    let spec = GridSpec::for_modes(1.0, 0);
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..20 {
        let beta = 1.0 + 15.0 * k as f64 / 19.0;
        let model = DetectionModel::intensity_flattening(beta, spec).unwrap();
        let m = crosstalk_matrix(&states, &model).unwrap();
        let v = visibility(&m).unwrap();
        let e = lgflat::crosstalk::mean_efficiency(&m);
        if let Some((pv, pe)) = prev {
            assert!(v >= pv - 1e-12, "V fell at beta {beta}: {pv} -> {v}");
            assert!(e <= pe + 1e-12, "efficiency rose at beta {beta}: {pe} -> {e}");
        }
        prev = Some((v, e));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugation_symmetry(ell in -10i32..=10, p in 0u32..=6, r in 0.0f64..6.0, phi in -7.0f64..7.0) {
        let a = lg_field(ModeIndex::new(-ell, p), 1.3, r, phi);
        let b = lg_field(ModeIndex::new(ell, p), 1.3, r, phi).conj();
        prop_assert!((a - b).norm() <= 1e-15 * a.norm().max(1.0));
    }

    #[test]
    fn overlap_conjugate_and_linear(m1 in mode(), m2 in mode(), m3 in mode(), a in complex(), b in complex()) {
        let g = build_grid(&GridSpec::new(64, 40, 8.0).unwrap()).unwrap();
        let f = |m: ModeIndex| move |r, phi| lg_field(m, 1.0, r, phi);
        let w = |r: f64| (-0.7 * r * r).exp();
        let x = overlap(f(m1), f(m2), w, &g);
        let y = overlap(f(m2), f(m1), w, &g);
        prop_assert_eq!(x, y.conj());
        let combo = |r, phi| a * f(m2)(r, phi) + b * f(m3)(r, phi);
        let lhs = overlap(f(m1), combo, w, &g);
        let rhs = a * x + b * overlap(f(m1), f(m3), w, &g);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn selection_rule_and_energy_bound(
        m1 in mode(), m2 in mode(), method in 0usize..3, beta in 1.0f64..16.0
    ) {
        let spec = GridSpec::for_modes(1.0, 4);
        let model = match method {
            0 => DetectionModel::intensity_flattening(beta, spec).unwrap(),
            1 => DetectionModel::phase_flattening(spec).unwrap(),
            _ => DetectionModel::phase_flattening_am(spec).unwrap(),
        };
        let a = SpatialState::single(m1, 1.0);
        let b = SpatialState::single(m2, 1.0);
        let p = detection_probability(&a, &b, &model).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if m1.ell != m2.ell {
            prop_assert!(p < 1e-12, "{} -> {}: {}", m1, m2, p);
        }
    }

    #[test]
    fn pf_am_is_if_at_unit_beta(m1 in mode(), m2 in mode()) {
        let spec = GridSpec::for_modes(1.0, 4);
        let a = SpatialState::single(m1, 1.0);
        let b = SpatialState::single(m2, 1.0);
        let am = detection_probability(&a, &b, &DetectionModel::phase_flattening_am(spec).unwrap()).unwrap();
        let iff = detection_probability(&a, &b, &DetectionModel::intensity_flattening(1.0, spec).unwrap()).unwrap();
        prop_assert_eq!(am, iff);
    }

    #[test]
    fn energy_bound_for_superpositions(coeffs in proptest::collection::vec(complex(), 3), beta in 1.0f64..12.0) {
        prop_assume!(coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() > 1e-3);
        let support = vec![ModeIndex::new(-1, 0), ModeIndex::new(0, 1), ModeIndex::new(2, 0)];
        let s = SpatialState::normalized(support.clone(), coeffs, 1.0).unwrap();
        let spec = GridSpec::for_modes(1.0, 2);
        for model in [
            DetectionModel::intensity_flattening(beta, spec).unwrap(),
            DetectionModel::phase_flattening(spec).unwrap(),
        ] {
            for det in support.iter().map(|m| SpatialState::single(*m, 1.0)).chain([s.clone()]) {
                let p = detection_probability(&s, &det, &model).unwrap();
                prop_assert!(p <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn visibility_bounds(values in proptest::collection::vec(0.0f64..1.0, 16)) {
        let labels: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let m = CrosstalkMatrix::new(labels, values.clone(), None).unwrap();
        prop_assume!(values.iter().sum::<f64>() > 0.0);
        let v = visibility(&m).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let off: f64 = (0..16).filter(|k| k / 4 != k % 4).map(|k| values[k]).sum();
        prop_assert_eq!(v == 1.0, off == 0.0);
    }

    #[test]
    fn entropy_maximum_and_rate_monotone(d in 2usize..40, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let peak = (d - 1) as f64 / d as f64;
        prop_assert!((entropy_d(peak, d) - (d as f64).log2()).abs() < 1e-12);
        prop_assert!(entropy_d(x, d) <= (d as f64).log2() + 1e-12);
        let (lo, hi) = if x < y { (x * peak, y * peak) } else { (y * peak, x * peak) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(secret_key_rate(d, lo).rate_bits > secret_key_rate(d, hi).rate_bits);
        prop_assert!(secret_key_rate(d, x).rate_bits <= (d as f64).log2());
    }

    #[test]
    fn tomography_round_trip(seed in any::<u64>(), which in 0usize..4) {
        let d = [2, 3, 5, 7][which];
        let support = if which % 2 == 0 { oam_support(d) } else { radial_support(1, d) };
        let mubs = mub_bases(d, &support).unwrap();
        let psi = random_pure_state(&support, 1.0, seed).unwrap();
        let rec = exact_tomography(&psi, &mubs).unwrap();
        prop_assert!(rec.probs.iter().flatten().all(|p| *p >= 0.0));
        let rho = direct_inversion(&rec);
        let want = DensityMatrix::pure(&support, &psi).unwrap();
        prop_assert!(rho.max_abs_diff(&want) < 1e-10);
        prop_assert!(rho.is_hermitian(1e-10));
        prop_assert!((rho.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        prop_assert!((fidelity(&rho, &psi).unwrap() - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn crosstalk_permutation_invariance(perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(), beta in 1.0f64..10.0) {
        let states: Vec<SpatialState> = [(0, 0), (0, 1), (1, 0), (-1, 1), (0, 2)]
            .iter()
            .map(|&(l, p)| SpatialState::single(ModeIndex::new(l, p), 1.0))
            .collect();
        let permuted: Vec<SpatialState> = perm.iter().map(|&i| states[i].clone()).collect();
        let model = DetectionModel::intensity_flattening(beta, GridSpec::for_modes(1.0, 1)).unwrap();
        let a = crosstalk_matrix(&states, &model).unwrap();
        let b = crosstalk_matrix(&permuted, &model).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                prop_assert_eq!(b.get(i, j), a.get(perm[i], perm[j]));
            }
        }
        prop_assert!((visibility(&a).unwrap() - visibility(&b).unwrap()).abs() < 1e-14);
    }
}

#[test]
fn mub_completeness() {
    for d in [2usize, 3, 5, 7, 11, 13] {
        let mubs = mub_bases(d, &oam_support(d)).unwrap();
        let mut sum = DMatrix::<Complex64>::zeros(d, d);
        for a in 0..=d {
            for m in 0..d {
                sum += mubs.projector(a, m);
            }
        }
        let want = DMatrix::<Complex64>::identity(d, d) * Complex64::new((d + 1) as f64, 0.0);
        assert!((sum - want).iter().all(|z| z.norm() < 1e-10), "d = {d}");
    }
}
