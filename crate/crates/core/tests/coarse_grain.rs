use lmphc_core::coarse_grain::{
    correlation_observable, extract_contours, peierls_statistics, simply_connected, theta_fields, Contour,
    PeierlsConfig, PhaseField, PhaseLevel, PhaseWindows,
};
use lmphc_core::model::{cell_of, multibody_integral, KernelSpec, Metric, ModelParams, Point};
use lmphc_core::sampler::SamplerConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, Poisson};

mod common;
use common::contours::{
    annulus_eta, contour_mismatch, oracle_contours, random_eta, sparse_random_eta, strictness_violation,
    supports_separated,
};

#[test]
fn contours_match_flood_fill_on_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nontrivial = 0;
    for trial in 0..100 {
        let d = 1 + trial % 3;
        let n = [14, 10, 7][d - 1];
        let eta = random_eta(&mut rng, d, n, 2);
        let (_, big) = theta_fields(&eta, 2).unwrap();
        let got = extract_contours(&big, Some(&eta)).unwrap();
        let want = oracle_contours(&big.values, n, d);
        assert_eq!(contour_mismatch(&got, &want, 2), None, "trial {trial}");
        assert!(supports_separated(&want, n, d), "trial {trial}");
        nontrivial += (!got.is_empty()) as usize;
    }
    assert!(nontrivial > 50);
}

#[test]
fn indicator_strictness_chain_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..1000 {
        let d = 1 + trial % 3;
        let n = [8, 6, 4][d - 1];
        let ratio = 2 + trial % 2;
        let eta = sparse_random_eta(&mut rng, d, n * ratio);
        let (theta, big) = theta_fields(&eta, ratio).unwrap();
        assert_eq!(strictness_violation(&eta, &theta, &big, n, ratio), None, "trial {trial}");
    }
}

#[test]
fn annulus_gives_one_plus_contour_with_minus_interior() {
    let (eta, n, ratio) = annulus_eta();
    let d = 2;
    let (_, big) = theta_fields(&eta, ratio).unwrap();
    let contours = extract_contours(&big, Some(&eta)).unwrap();
    assert_eq!(contours.len(), 1);
    let g = &contours[0];
    assert_eq!(g.sign, 1);
    assert_eq!(g.n_gamma, 24);
    assert_eq!(g.interiors.len(), 1);
    assert_eq!(g.interiors[0].sign, -1);
    assert_eq!(g.interiors[0].cubes, vec![5 * n + 5]);
    assert_eq!(g.a_ext.len(), 24);
    assert!(simply_connected(&g.c_gamma(), n, d));
    assert!(simply_connected(&g.interiors[0].cubes, n, d));
    let json = g.to_json();
    assert_eq!(json["N_gamma"], 24);
    assert_eq!(json["interiors"][0]["sign"], -1);
}

#[test]
fn pair_observable_matches_tuple_enumeration() {
    let p = ModelParams::new(2, 0.1, 0.0, 1.0, 0.0).unwrap();
    let ell = p.scales().ell_minus;
    let a: Vec<Point> = vec![[0.3, 0.4, 0.0], [1.2, 4.1, 0.0], [5.0, 0.2, 0.0]];
    let b: Vec<Point> = vec![[ell + 0.5, 1.0, 0.0], [ell + 4.4, 3.3, 0.0]];
    let mut pts = a.clone();
    pts.extend_from_slice(&b);
    let ca = cell_of(&a[0], 2, ell);
    let cb = cell_of(&b[0], 2, ell);
    assert!(a.iter().all(|q| cell_of(q, 2, ell) == ca) && b.iter().all(|q| cell_of(q, 2, ell) == cb));
    let metric = Metric::free(2);
    let mut brute = 0.0;
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i != j && cell_of(&pts[i], 2, ell) == ca && cell_of(&pts[j], 2, ell) == cb {
                brute += multibody_integral(&[pts[i], pts[j]], metric, &p);
            }
        }
    }
    let f = correlation_observable(&pts, metric, &[ca, cb], &p).unwrap();
    assert!((f - brute / 2.0).abs() < 1e-12 * brute.abs().max(1.0));
    assert!(f > 0.0);
    assert_eq!(correlation_observable(&pts, metric, &[ca], &p).unwrap(), 3.0);
    let far = [ca[0] + 100, ca[1], 0];
    assert_eq!(correlation_observable(&pts, metric, &[ca, far], &p).unwrap(), 0.0);
}

/// A one-cube plus contour in `d = 1` decorated with `pattern` on its sub-cubes.
fn single_cube_contour(pattern: &[i8]) -> Contour {
    let ratio = pattern.len();
    let n = 5;
    let mut values = vec![1i8; n * ratio];
    values[2 * ratio..3 * ratio].copy_from_slice(pattern);
    let eta = PhaseField::new(PhaseLevel::Eta, 1, 1.0, n * ratio, false, values).unwrap();
    let theta = PhaseField::new(PhaseLevel::BigTheta, 1, 1.0, n, false, vec![1, 1, 0, 1, 1]).unwrap();
    let mut cs = extract_contours(&theta, Some(&eta)).unwrap();
    assert_eq!(cs.len(), 1);
    cs.pop().unwrap()
}

fn free_params() -> (ModelParams, PhaseWindows) {
    let mut p = ModelParams::new(1, 0.1, 0.0, 0.0, 0.0).unwrap();
    p.kernel = KernelSpec::Off;
    (p, PhaseWindows::new(0.6, 1.2, 0.15).unwrap())
}

fn peierls_cfg(seed: u64) -> PeierlsConfig {
    PeierlsConfig {
        steps: 3_000_000,
        burn_in: 50_000,
        every: 50,
        seed,
        sampler: SamplerConfig {
            trace_every: 0,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn all_plus_decoration_has_unit_weight() {
    let (p, w) = free_params();
    let ratio = p.scales().plus_ratio;
    let g = single_cube_contour(&vec![1; ratio]);
    let est = peierls_statistics(&g, 1, &w, &p, &PeierlsConfig { steps: 200_000, ..peierls_cfg(1) }).unwrap();
    assert_eq!(est.numerator_hits, est.denominator_hits);
    assert_eq!(est.ratio, 1.0);
}

/// Probability that a Poisson count of mean `ell` classifies as `sign`.
fn window_probability(ell: f64, w: &PhaseWindows, sign: i8) -> f64 {
    let law = Poisson::new(ell).unwrap();
    (0..200u64).filter(|&k| w.classify(k as f64 / ell) == sign).map(|k| law.pmf(k)).sum()
}

#[test]
fn free_measure_weight_matches_poisson_windows() {
    let (p, w) = free_params();
    let ell = p.scales().ell_minus;
    let ratio = p.scales().plus_ratio;
    assert_eq!(ratio, 3);
    let pattern = [1i8, -1, 1];
    let g = single_cube_contour(&pattern);
    let want: f64 = pattern
        .iter()
        .map(|&s| window_probability(ell, &w, s) / window_probability(ell, &w, 1))
        .product();
    let a = peierls_statistics(&g, 1, &w, &p, &peierls_cfg(5)).unwrap();
    let b = peierls_statistics(&g, 1, &w, &p, &peierls_cfg(6)).unwrap();
    for est in [&a, &b] {
        assert!(est.ratio_ci.0 <= want && want <= est.ratio_ci.1, "{est:?} vs {want}");
        assert!((est.ratio - want).abs() < 0.15 * want, "{} vs {want}", est.ratio);
    }
    assert!(a.ratio_ci.0 <= b.ratio_ci.1 && b.ratio_ci.0 <= a.ratio_ci.1);
}

#[test]
fn oversized_support_is_refused() {
    let (p, w) = free_params();
    let g = single_cube_contour(&[1, 0, 1]);
    let cfg = PeierlsConfig {
        max_support: 0,
        ..peierls_cfg(1)
    };
    assert!(peierls_statistics(&g, 1, &w, &p, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn constant_eta_has_no_contours(d in 1usize..=3, sign in prop_oneof![Just(-1i8), Just(1i8)]) {
        let n = 4;
        let eta = PhaseField::new(PhaseLevel::Eta, d, 1.0, 2 * n, false, vec![sign; (2 * n).pow(d as u32)]).unwrap();
        let (theta, big) = theta_fields(&eta, 2).unwrap();
        prop_assert!(theta.values.iter().all(|&v| v == sign));
        prop_assert!(big.values.iter().all(|&v| v == sign));
        prop_assert!(extract_contours(&big, Some(&eta)).unwrap().is_empty());
    }
}
