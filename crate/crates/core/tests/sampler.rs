use lmphc_core::coarse_grain::{eta_field, theta_fields, PhaseWindows};
use lmphc_core::model::{hardcore_admissible, Domain, ModelParams, ParticleConfiguration, Point};
use lmphc_core::sampler::{phase_configuration, DilutedConstraint, Move, SamplerConfig, SamplerState};
use lmphc_core::Error;
use proptest::prelude::*;

mod common;
use common::sampler::{capped_box_sectors, free_gas_counts, hard_rod_density, poisson_p_value, quiet};

#[test]
fn interactions_off_gives_poisson_particle_number() {
    let (counts, mean) = free_gas_counts(100_000, 11);
    let (chi2, df, pval) = poisson_p_value(&counts, mean);
    assert!(pval > 0.01, "chi2 {chi2} on {df} dof, p = {pval}");
}

#[test]
fn hard_rods_follow_tonks_equation_of_state() {
    let (rho, m, se) = hard_rod_density(5);
    assert!((m - rho).abs() / rho < 0.01, "density {m} (se {se}) vs {rho}");
    assert!(se / rho < 0.003, "standard error {se} too large for the check");
}

#[test]
fn running_energy_does_not_drift_over_a_million_steps() {
    let p = ModelParams::new(2, 0.1, 0.3, 1.9, -0.8324).unwrap();
    let dom = Domain::torus(&p, 2).unwrap();
    let q = ParticleConfiguration::empty(dom, &p).unwrap();
    let cfg = SamplerConfig {
        audit_every: 100_000,
        ..quiet()
    };
    let mut s = SamplerState::new(q, &p, cfg, None, 17).unwrap();
    s.run(1_000_000).unwrap();
    let drift = s.audit().unwrap();
    assert!(s.len() > 100);
    assert!(s.max_drift() <= 1e-9 && drift <= 1e-9, "drift {}", s.max_drift());
    assert!(hardcore_admissible(s.configuration().positions(), p.hc_radius, s.configuration().metric()));
}

#[test]
fn capped_box_occupation_matches_sector_quadrature() {
    let sectors = capped_box_sectors(23);
    assert!(sectors.iter().all(|s| s.0 > 0.03), "{sectors:?}");
    for (k, (want, m, se)) in sectors.into_iter().enumerate() {
        assert!((m - want).abs() <= 3.0 * se, "sector {k}: {m} +- {se} vs {want}");
    }
}

#[test]
fn equal_seeds_give_identical_snapshots() {
    let p = ModelParams::new(2, 0.1, 0.3, 1.9, -0.8).unwrap();
    let run = |seed| {
        let dom = Domain::torus(&p, 2).unwrap();
        let q = ParticleConfiguration::empty(dom, &p).unwrap();
        let cfg = SamplerConfig {
            snapshot_every: 5_000,
            ..Default::default()
        };
        let mut s = SamplerState::new(q, &p, cfg, None, seed).unwrap();
        let out = s.run(20_000).unwrap();
        out.snapshots.iter().map(|x| x.hash()).collect::<Vec<_>>()
    };
    let a = run(99);
    assert_eq!(a.len(), 4);
    assert_eq!(a, run(99));
    assert_ne!(a, run(100));
}

fn framed_setup() -> (ModelParams, Domain, PhaseWindows) {
    let mut p = ModelParams::new(1, 0.1, 0.0, 1.9, -0.8324).unwrap();
    p.a = 0.2;
    let dom = Domain::boxed(&p, 4, Vec::new()).unwrap();
    let w = PhaseWindows::new(0.60857, 1.02818, 0.15).unwrap();
    (p, dom, w)
}

#[test]
fn frame_condition_holds_on_every_snapshot() {
    let (p, dom, w) = framed_setup();
    let c = DilutedConstraint::outer_frame(&dom, 1, w, 1).unwrap();
    let frame = c.frame.clone();
    let q = phase_configuration(&dom, &p, |_| w.rho_plus).unwrap();
    let cfg = SamplerConfig {
        snapshot_every: 500,
        ..quiet()
    };
    let mut s = SamplerState::new(q, &p, cfg, Some(c), 3).unwrap();
    let out = s.run(100_000).unwrap();
    assert_eq!(out.snapshots.len(), 200);
    let ratio = p.scales().plus_ratio;
    for snap in &out.snapshots {
        let q = snap.to_configuration(&p).unwrap();
        let q = ParticleConfiguration::new(q.positions().to_vec(), dom.clone(), &p).unwrap();
        let eta = eta_field(&q, &p, &w).unwrap();
        let (_, big) = theta_fields(&eta, ratio).unwrap();
        for &x in &frame {
            assert_eq!(big.values[x], 1);
        }
    }
    assert!(out.stats.accepted.iter().all(|&a| a > 0));
}

#[test]
fn initial_frame_violation_is_reported() {
    let (p, dom, w) = framed_setup();
    let c = DilutedConstraint::outer_frame(&dom, 1, w, 1).unwrap();
    let q = ParticleConfiguration::empty(dom, &p).unwrap();
    let err = SamplerState::new(q, &p, quiet(), Some(c), 3).unwrap_err();
    assert!(matches!(err, Error::Constraint(ref m) if m.contains("lattice")), "{err}");
}

#[test]
fn insert_then_delete_flows_balance() {
    let p = ModelParams::new(2, 0.1, 0.3, 1.9, -0.8).unwrap();
    let dom = Domain::torus(&p, 2).unwrap();
    let q = phase_configuration(&dom, &p, |_| 0.7).unwrap();
    let mut s = SamplerState::new(q, &p, quiet(), None, 1).unwrap();
    let n = s.len();
    let site = [12.345, 6.789, 0.0];
    let mut probe = s.clone();
    let fwd = probe.force(&Move::Insert(site)).expect("probe site is free");
    let bwd = probe.evaluate(&Move::Delete(n)).unwrap();
    assert!((fwd.delta_h + bwd.delta_h).abs() < 1e-10);
    assert!((fwd.log_ratio + bwd.log_ratio).abs() < 1e-10);
    let h0 = s.full_energy().unwrap();
    let h1 = probe.full_energy().unwrap();
    assert!((h1 - h0 - fwd.delta_h).abs() < 1e-10 * (1.0 + h1.abs()));
    assert!(s.evaluate(&Move::Insert(site)).is_some());
}

#[test]
fn detailed_balance_audit_passes_on_random_pairs() {
    let p = ModelParams::new(2, 0.1, 0.3, 1.9, -0.8).unwrap();
    let dom = Domain::torus(&p, 2).unwrap();
    let q = phase_configuration(&dom, &p, |c| if c[0] < 3 { 1.0 } else { 0.6 }).unwrap();
    let s = SamplerState::new(q, &p, quiet(), None, 1).unwrap();
    let rep = s.detailed_balance_audit(1000, 7).unwrap();
    assert!(rep.passed, "{rep:?}");
    assert!(rep.trials - rep.skipped > 300);
}

#[test]
fn detailed_balance_audit_passes_with_boundary_and_frame() {
    let (p, dom, w) = framed_setup();
    let side = dom.side;
    let bdry: Vec<Point> = (0..40).map(|k| [-0.5 - k as f64 * 0.97, 0.0, 0.0]).chain((0..40).map(|k| [side + 0.5 + k as f64 * 0.97, 0.0, 0.0])).collect();
    let dom = dom.with_boundary(bdry, &p).unwrap();
    let c = DilutedConstraint::outer_frame(&dom, 1, w, 1).unwrap();
    let q = phase_configuration(&dom, &p, |_| w.rho_plus).unwrap();
    let s = SamplerState::new(q, &p, quiet(), Some(c), 2).unwrap();
    let rep = s.detailed_balance_audit(1000, 8).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn far_particles_do_not_change_local_energy_differences() {
    let p = ModelParams::new(1, 0.1, 0.5, 1.9, -0.8).unwrap();
    let dom = Domain::torus(&p, 4).unwrap();
    let cut = 2.0 * p.range() + p.hc_radius;
    let near: Vec<Point> = (0..8).map(|k| [10.0 + 1.3 * k as f64, 0.0, 0.0]).collect();
    let far: Vec<Point> = (0..10).map(|k| [15.0 + cut + 1.0 + 0.9 * k as f64, 0.0, 0.0]).collect();
    let mut both = near.clone();
    both.extend_from_slice(&far);
    let mut a = SamplerState::new(ParticleConfiguration::new(near, dom.clone(), &p).unwrap(), &p, quiet(), None, 1).unwrap();
    let mut b = SamplerState::new(ParticleConfiguration::new(both, dom, &p).unwrap(), &p, quiet(), None, 1).unwrap();
    for mv in [Move::Displace(3, [14.6, 0.0, 0.0]), Move::Displace(0, [8.0, 0.0, 0.0])] {
        let ea = a.evaluate(&mv).unwrap();
        let eb = b.evaluate(&mv).unwrap();
        assert!((ea.delta_h - eb.delta_h).abs() < 1e-12);
        assert!((ea.log_ratio - eb.log_ratio).abs() < 1e-12);
    }
    let ins = Move::Insert([11.95, 0.0, 0.0]);
    assert!((a.evaluate(&ins).unwrap().delta_h - b.evaluate(&ins).unwrap().delta_h).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn accepted_moves_keep_hard_core(seed in any::<u64>(), hc in 0.2f64..1.5) {
        let p = ModelParams::new(2, 0.1, hc, 1.0, 1.5).unwrap();
        let dom = Domain::torus(&p, 2).unwrap();
        let q = ParticleConfiguration::empty(dom, &p).unwrap();
        let mut s = SamplerState::new(q, &p, quiet(), None, seed).unwrap();
        for _ in 0..20 {
            s.run_observed(200, 0, |_| {}).unwrap();
            prop_assert!(hardcore_admissible(s.configuration().positions(), hc, s.configuration().metric()));
        }
    }
}
