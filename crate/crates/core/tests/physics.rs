use std::sync::Arc;

use noisecalc::integrals::realized_variation;
use noisecalc::parallel::{map_indexed, Execution};
use noisecalc::paths::{generate_brownian_vector, SamplePath, SeedSpec, TimeGrid};
use noisecalc::physics::{
    kinetic_models, levy_composite_brownian, relativistic_models, rest_start_diagnostics, two_particle_models,
    BoundaryBehavior, LangevinParams, ModelTrio, RelativisticParams,
};
use noisecalc::sde::{from_ito, to_ito, Interpretation};
use noisecalc::solvers::{
    besq_time_change, exact_kinetic_oracle, mean_var, simulate_ensemble, BoundaryMode, EventKind, McConfig, SolverScheme,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn assert_trio_commutes(trio: &ModelTrio, lo: f64, hi: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..100 {
        let x = rng.random_range(lo..hi);
        let want = trio.ito.drift(x, 0.0);
        for m in [&trio.strat, &trio.hk] {
            let got = to_ito(m).drift(x, 0.0);
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{:?} at {x}: {got} vs {want}", trio.family);
        }
    }
}

#[test]
fn trios_convert_onto_their_ito_member() {
    let p = LangevinParams { m: 1.7, gamma: 0.6, sigma: 1.2, v0: 0.3, u0: -0.4 };
    assert_trio_commutes(&kinetic_models(&p).unwrap(), 1e-3, 5.0);
    assert_trio_commutes(&two_particle_models(&p).unwrap(), 1e-3, 5.0);
    let rel = RelativisticParams { alpha: Arc::new(|e: f64| 0.5 + 0.1 * e), ..RelativisticParams::constant(1.3, 1.0, 0.8, 0.5).unwrap() };
    assert_trio_commutes(&relativistic_models(&rel).unwrap(), 1.3 + 1e-3, 20.0);
}

#[test]
fn two_particle_examples() {
    let p = LangevinParams { m: 2.0, gamma: 1.0, sigma: 1.0, v0: 0.0, u0: 0.0 };
    let t = two_particle_models(&p).unwrap();
    assert!((t.ito.drift(1.0, 0.0) + 0.5).abs() < 1e-15);
    let d = LangevinParams::default();
    let t = two_particle_models(&d).unwrap();
    assert_eq!([t.ito.drift(0.0, 0.0), t.strat.drift(0.0, 0.0), t.hk.drift(0.0, 0.0)], [1.0, 0.5, 0.0]);
    assert_eq!(t.ito.diffusion(0.0, 0.0), 0.0);
    let hk = from_ito(&t.ito, Interpretation::HaenggiKlimontovich).unwrap();
    for k in [0.2, 1.0, 4.0] {
        assert!((hk.drift(k, 0.0) - t.hk.drift(k, 0.0)).abs() < 1e-12);
    }
}

#[test]
fn relativistic_shape() {
    let t = relativistic_models(&RelativisticParams::constant(1.0, 1.0, 1.0, 0.0).unwrap()).unwrap();
    for e in [1.1, 2.0, 5.0] {
        let diff = t.strat.drift(e, 0.0) - t.hk.drift(e, 0.0);
        assert!((diff - 1.0 / e.powi(3)).abs() < 1e-12, "{diff}");
    }
    let e = 100.0;
    for m in [&t.ito, &t.strat, &t.hk] {
        assert!((m.drift(e, 0.0) / -e - 1.0).abs() < 0.01);
    }
    assert!(t.with_x0(0.5).is_err());
}

#[test]
fn besq_representation_in_mean_and_variance() {
    let n = 20_000;
    let (m, gamma, sigma) = (1.0, 1.0, 1.0);
    for (delta, v0s) in [(1usize, vec![1.0]), (2, vec![0.5, 0.8])] {
        let t = 0.7;
        let grid = TimeGrid::uniform(0.0, t, 7).unwrap();
        let oracle = map_indexed(n, Execution::Parallel, |i| {
            exact_kinetic_oracle(delta, m, gamma, sigma, &v0s, &grid, SeedSpec::new(72, i as u64)).unwrap().last()
        });
        // Independent BESQ^δ sampler at s(t): |a + √s Z|² with |a|² = k₀.
        let s = besq_time_change(t, m, gamma, sigma).unwrap();
        let a: Vec<f64> = v0s.iter().map(|v| (0.5 * m).sqrt() * v).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let decay = (-2.0 * gamma * t / m).exp();
        let besq: Vec<f64> = (0..n)
            .map(|_| decay * a.iter().map(|ai| (ai + s.sqrt() * rng.sample::<f64, _>(StandardNormal)).powi(2)).sum::<f64>())
            .collect();
        let ((ma, va), (mb, vb)) = (mean_var(&oracle).unwrap(), mean_var(&besq).unwrap());
        let se = ((va + vb) / n as f64).sqrt();
        assert!((ma - mb).abs() < 2.0 * se, "δ={delta}: means {ma} vs {mb}");
        assert!((va / vb - 1.0).abs() < 0.05, "δ={delta}: variances {va} vs {vb}");
    }
}

#[test]
fn relativistic_energy_floor_is_flagged_not_clamped() {
    let t = relativistic_models(&RelativisticParams::constant(1.0, 1.0, 1.0, 0.0).unwrap()).unwrap();
    let cfg = McConfig::new(300, 1e-3, 2.0, SeedSpec::new(74, 0)).with_boundary(BoundaryMode::None);
    let ens = simulate_ensemble(&t.ito, SolverScheme::EulerMaruyamaOnItoForm, &cfg).unwrap();
    let mut flagged = 0;
    for p in &ens.paths {
        let v = p.path.values();
        let below: Vec<usize> = (0..v.len()).filter(|&i| v[i] < 1.0 - 1e-12).collect();
        if let Some(&first) = below.first() {
            // Only the last recorded value may lie below the floor, and the step after it is flagged.
            assert_eq!(first, v.len() - 1);
            if p.terminated_early {
                assert_eq!(p.events.last().unwrap().kind, EventKind::DomainViolation);
                flagged += 1;
            }
        }
    }
    let strict = simulate_ensemble(&t.ito, SolverScheme::EulerMaruyamaOnItoForm, &cfg.with_boundary(BoundaryMode::StopOnViolation)).unwrap();
    for p in &strict.paths {
        assert!(p.path.values().iter().all(|v| *v >= 1.0));
        assert_eq!(p.terminated_early, p.violated());
    }
    assert_eq!(flagged, strict.paths.iter().filter(|p| p.violated()).count());
}

#[test]
fn composite_motion_with_still_second_particle() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1 << 12).unwrap();
    let bw = generate_brownian_vector(&grid, 2, SeedSpec::new(75, 0)).unwrap();
    let (b, w) = (bw.component(0), bw.component(1));
    let u = SamplePath::from_fn(grid.clone(), |t| (6.0 * t).sin() + 0.3).unwrap();
    let v = SamplePath::from_fn(grid, |_| 0.0).unwrap();
    let wt = levy_composite_brownian(&u, &v, &b, &w).unwrap();
    assert_eq!(wt.first(), 0.0);
    for ((dw, db), uu) in wt.increments().zip(b.increments()).zip(u.values()) {
        assert!((dw - uu.signum() * db).abs() < 1e-12);
    }
    assert!((realized_variation(&wt) - 1.0).abs() < 0.1);
}

#[test]
fn two_particle_rest_start() {
    let r = rest_start_diagnostics(&two_particle_models(&LangevinParams::default()).unwrap(), 1e-3, 200, 76).unwrap();
    let hk = r.member(Interpretation::HaenggiKlimontovich);
    assert_eq!(hk.stuck_fraction, 1.0);
    assert_eq!(hk.boundary_behavior, BoundaryBehavior::Absorbing);
    assert_eq!(r.member(Interpretation::Ito).interior_fraction, 1.0);
    assert_eq!(r.member(Interpretation::Stratonovich).interior_fraction, 1.0);
    assert_eq!(r.member(Interpretation::Ito).boundary_behavior, BoundaryBehavior::PushesInward);
}

#[test]
fn relativistic_displayed_drifts_carry_d_prime_with_opposite_sign_to_conversion() {
    // With energy-dependent D̂ the listed Stratonovich and HK drifts are kept
    // verbatim; converting each to Itô leaves a residual of D̂′(1 − r²) and
    // 2D̂′(1 − r²) against the listed Itô drift.
    let p = RelativisticParams {
        mass: 1.0,
        alpha: Arc::new(|_| 0.7),
        d: Arc::new(|e| 0.5 + 0.2 * e),
        d_prime: Some(Arc::new(|_| 0.2)),
        p0: 1.0,
    };
    let trio = relativistic_models(&p).unwrap();
    for &e in &[1.05, 1.5, 2.0, 4.0] {
        let base = trio.ito.drift(e, 0.0);
        let w = 0.2 * (1.0 - 1.0 / (e * e));
        let s = to_ito(&trio.strat).drift(e, 0.0) - base;
        let h = to_ito(&trio.hk).drift(e, 0.0) - base;
        assert!((s - w).abs() < 1e-9, "stratonovich residual {s} vs {w} at {e}");
        assert!((h - 2.0 * w).abs() < 1e-9, "hk residual {h} vs {} at {e}", 2.0 * w);
    }
}
