use lmphc_core::model::coarse::CubeAverageTable;
use lmphc_core::model::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cluster(rng: &mut ChaCha8Rng, d: usize, n: usize, spread: f64, r: f64) -> Vec<Point> {
    let m = Metric::free(d);
    let mut pts: Vec<Point> = Vec::new();
    while pts.len() < n {
        let mut p = [0.0; 3];
        for x in p.iter_mut().take(d) {
            *x = (rng.random::<f64>() - 0.5) * spread;
        }
        if pts.iter().all(|q| m.dist(q, &p) > r) {
            pts.push(p);
        }
    }
    pts
}

#[test]
fn functional_equals_full_multibody_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d, trials, n_max) in [(1, 6, 12), (2, 4, 12), (3, 1, 6)] {
        let p = ModelParams::new(d, 0.2, 0.3, 1.0, 0.4).unwrap();
        for t in 0..trials {
            let n = 1 + (t * 5 + 3) % n_max;
            let pts = random_cluster(&mut rng, d, n, 9.0, p.hc_radius);
            let m = Metric::free(d);
            let f = energy_functional_points(&pts, m, &p).unwrap();
            let mb = energy_multibody(&pts, m, &p, IndexRule::All).unwrap();
            let rel = (f - mb).abs() / (1.0 + mb.abs());
            assert!(rel <= 1e-5, "d={d} n={n}: functional {f} multibody {mb} rel {rel}");
        }
    }
}

#[test]
fn distinct_grid_form_matches_distinct_multibody_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ModelParams::new(2, 0.2, 0.3, 1.0, 0.0).unwrap();
    p.form = HamiltonianForm::Multibody;
    let pts = random_cluster(&mut rng, 2, 7, 8.0, p.hc_radius);
    let m = Metric::free(2);
    let grid = energy(&pts, m, &p).unwrap();
    let exact = energy_multibody(&pts, m, &p, IndexRule::Distinct).unwrap();
    assert!((grid - exact).abs() / (1.0 + exact.abs()) < 1e-6, "{grid} vs {exact}");
}

#[test]
fn richardson_refinement_shrinks_quadrature_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut p = ModelParams::new(2, 0.2, 0.0, 1.0, 0.0).unwrap();
    let pts = random_cluster(&mut rng, 2, 6, 8.0, 0.0);
    let m = Metric::free(2);
    let exact = energy_multibody(&pts, m, &p, IndexRule::All).unwrap();
    let coarse = energy_functional_points(&pts, m, &p).unwrap();
    p.quad_factor = 16;
    let fine = energy_functional_points(&pts, m, &p).unwrap();
    assert!((fine - exact).abs() <= (coarse - exact).abs() + 1e-12);
}

#[test]
fn size_guard_refuses_crowded_neighbourhoods() {
    let p = ModelParams::new(1, 0.1, 0.0, 1.0, 0.0).unwrap();
    let pts: Vec<Point> = (0..65).map(|i| [i as f64 * 0.01, 0.0, 0.0]).collect();
    let err = energy_multibody(&pts, Metric::free(1), &p, IndexRule::All).unwrap_err();
    assert!(matches!(err, lmphc_core::Error::SizeGuard { .. }));
}

#[test]
fn relative_and_interaction_energies_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for d in [1, 2] {
        let p = ModelParams::new(d, 0.25, 0.2, 1.0, 0.3).unwrap();
        let m = Metric::free(d);
        for _ in 0..5 {
            let all = random_cluster(&mut rng, d, 8, 10.0, p.hc_radius);
            let (q, qb) = all.split_at(4);
            let hq = energy(q, m, &p).unwrap();
            let hb = energy(qb, m, &p).unwrap();
            let hall = energy(&all, m, &p).unwrap();
            let rel = relative_energy(q, qb, m, &p).unwrap().finite().unwrap();
            let u = interaction_energy(q, qb, m, &p).unwrap().finite().unwrap();
            let scale = 1.0 + hall.abs();
            assert!((rel - (hq + u)).abs() / scale < 1e-9);
            assert!((u - (hall - hq - hb)).abs() / scale < 1e-9);
            assert!((relative_energy(q, &[], m, &p).unwrap().finite().unwrap() - hq).abs() < 1e-12 * scale);
        }
        // far apart sets do not interact
        let far = [[100.0, 0.0, 0.0]];
        assert_eq!(interaction_energy(&[[0.0; 3]], &far, m, &p).unwrap(), Energy::Finite(0.0));
    }
}

#[test]
fn torus_energy_is_translation_invariant() {
    let p = ModelParams::new(2, 0.2, 0.3, 1.0, 0.2).unwrap();
    let dom = Domain::torus(&p, 2).unwrap();
    let side = dom.side;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<Point> = random_cluster(&mut rng, 2, 30, side, p.hc_radius)
        .into_iter()
        .map(|q| [q[0] + side / 2.0, q[1] + side / 2.0, 0.0])
        .collect();
    let h = p.scales().spacing;
    let e0 = energy(&pts, dom.metric(), &p).unwrap();
    for shift in [[h, 0.0], [3.0 * h, -7.0 * h], [17.0 * h, side]] {
        let moved: Vec<Point> = pts
            .iter()
            .map(|q| dom.wrap(&[q[0] + shift[0], q[1] + shift[1], 0.0]))
            .collect();
        let e1 = energy(&moved, dom.metric(), &p).unwrap();
        assert!((e1 - e0).abs() <= 1e-9 * (1.0 + e0.abs()), "{e0} vs {e1}");
    }
}

#[test]
fn lattice_density_is_reproduced_locally() {
    let p = ModelParams::new(2, 0.1, 0.0, 1.0, 0.0).unwrap();
    let dom = Domain::torus(&p, 2).unwrap();
    let a = (1.0f64 / 0.5).sqrt();
    let n = (dom.side / a).round() as usize;
    let a = dom.side / n as f64;
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            pts.push([(i as f64 + 0.5) * a, (j as f64 + 0.5) * a, 0.0]);
        }
    }
    let rho0 = pts.len() as f64 / (dom.side * dom.side);
    let q = ParticleConfiguration::new(pts, dom, &p).unwrap();
    for r in [[3.1, 7.7, 0.0], [20.0, 11.0, 0.0]] {
        let v = q.local_density(&r);
        assert!((v - rho0).abs() < 0.01 * rho0, "{v} vs {rho0}");
    }
}

#[test]
fn coarse_pair_potential_matches_monte_carlo_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (d, samples) in [(1usize, 100_000usize), (2, 20_000)] {
        let mut p = ModelParams::new(d, 0.2, 0.0, 1.0, 0.0).unwrap();
        p.alpha = 0.3;
        let t = CubeAverageTable::build(&p);
        let ell = p.scales().ell_minus;
        let x: Cell = [0, 0, 0];
        let mut y: Cell = [2, 0, 0];
        if d == 2 {
            y = [1, 1, 0];
        }
        let want = t.coarse_potential(&[x, y]);
        let mut acc = Vec::with_capacity(samples);
        for _ in 0..samples {
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            for k in 0..d {
                a[k] = (x[k] as f64 + rng.random::<f64>()) * ell;
                b[k] = (y[k] as f64 + rng.random::<f64>()) * ell;
            }
            acc.push(multibody_integral(&[a, b], Metric::free(d), &p));
        }
        let mean = acc.iter().sum::<f64>() / samples as f64;
        let var = acc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
        let se = (var / samples as f64).sqrt();
        assert!((mean - want).abs() < 3.0 * se + 1e-9 * want, "d={d}: MC {mean} ± {se}, table {want}");
    }
}

#[test]
fn snapped_kernel_coarse_potential_equals_exact_constant() {
    let mut p = ModelParams::new(1, 0.2, 0.0, 1.0, 0.0).unwrap();
    p.kernel = KernelSpec::CubeSnapped { blend: 0.0 };
    let t = CubeAverageTable::build(&p);
    let ell = p.scales().ell_minus;
    let pair = [[0.2 * ell, 0.0, 0.0], [1.9 * ell, 0.0, 0.0]];
    let lattice = lattice_product_sum(&pair, Metric::free(1), &p);
    let exact = multibody_integral(&pair, Metric::free(1), &p);
    let coarse = t.coarse_potential(&[[0, 0, 0], [1, 0, 0]]);
    assert!((lattice - coarse).abs() < 1e-12 * lattice, "{lattice} vs {coarse}");
    // lattice quadrature error of the pair integral
    assert!((exact - coarse).abs() < 1e-4 * exact, "{exact} vs {coarse}");
}

#[test]
fn far_edit_leaves_local_density_bit_identical() {
    let p = ModelParams::new(2, 0.2, 0.1, 1.0, 0.0).unwrap();
    let dom = Domain::torus(&p, 3).unwrap();
    let mut q = ParticleConfiguration::new(vec![[5.0, 5.0, 0.0], [6.0, 5.5, 0.0], [30.0, 30.0, 0.0]], dom, &p).unwrap();
    let probe = [5.5, 5.0, 0.0];
    let before = q.local_density(&probe).to_bits();
    q.move_particle(2, [31.0, 29.0, 0.0]).unwrap();
    q.insert([28.0, 33.0, 0.0]).unwrap();
    assert_eq!(q.local_density(&probe).to_bits(), before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutators_preserve_admissibility(moves in proptest::collection::vec((0u8..3, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..80)) {
        let p = ModelParams::new(2, 0.2, 1.0, 1.0, 0.0).unwrap();
        let dom = Domain::torus(&p, 1).unwrap();
        let side = dom.side;
        let mut q = ParticleConfiguration::empty(dom, &p).unwrap();
        for (kind, u, v, w) in moves {
            match kind {
                0 => { let _ = q.insert([u * side, v * side, 0.0]); }
                1 if !q.is_empty() => { q.remove((w * q.len() as f64) as usize % q.len()); }
                _ if !q.is_empty() => {
                    // adversarial: land at distance R(1 +- tiny) from another particle
                    let i = (w * q.len() as f64) as usize % q.len();
                    let anchor = q.positions()[(i + 1) % q.len()];
                    let r = 1.0 + (u - 0.5) * 1e-12;
                    let th = v * std::f64::consts::TAU;
                    let _ = q.move_particle(i, [anchor[0] + r * th.cos(), anchor[1] + r * th.sin(), 0.0]);
                }
                _ => {}
            }
            prop_assert!(q.admissible());
            prop_assert!(q.audit_index());
        }
    }
}
