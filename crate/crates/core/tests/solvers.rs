use noisecalc::parallel::{map_indexed, Execution};
use noisecalc::paths::{SeedSpec, TimeGrid};
use noisecalc::physics::{kinetic_models, LangevinParams};
use noisecalc::sde::{Domain, Interpretation, SdeModel};
use noisecalc::solvers::{
    besq_dimension, besq_time_change, exact_kinetic_oracle, exact_ou_path, hitting_time, kinetic_oracle_first_hits,
    mean_var, simulate_ensemble, simulate_ensemble_with, simulate_path, simulate_reflected, strong_convergence_order,
    BoundaryMode, EventKind, KineticFamily, McConfig, Recording, Reference, SolverScheme,
};

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn hk_rest_start_violates_for_nearly_all_seeds() {
    let trio = kinetic_models(&LangevinParams::default()).unwrap();
    let cfg = McConfig::new(1000, 1e-3, 0.01, SeedSpec::new(41, 0));
    let ens = simulate_ensemble(&trio.hk, SolverScheme::DirectRightPredictorCorrector, &cfg).unwrap();
    let frac = ens.paths.iter().filter(|p| p.violated()).count() as f64 / 1000.0;
    assert!(frac >= 0.99, "{frac}");
    for p in &ens.paths {
        assert!(p.terminated_early);
        assert_eq!(p.events.last().unwrap().kind, EventKind::DomainViolation);
    }
}

#[test]
fn ito_kinetic_mean_matches_oracle() {
    let p = LangevinParams::with_kinetic_energy(1.0, 1.0, 1.0, 0.5).unwrap();
    let trio = kinetic_models(&p).unwrap();
    let n = 4000;
    // Zero is instantaneously reflecting for the δ = 1 energy; Euler steps that overshoot are folded back.
    let cfg = McConfig::new(n, 1e-3, 5.0, SeedSpec::new(42, 0))
        .with_boundary(BoundaryMode::Reflect { lo: 0.0, hi: f64::INFINITY })
        .with_recording(Recording::Endpoints);
    let em = simulate_ensemble(&trio.ito, SolverScheme::EulerMaruyamaOnItoForm, &cfg).unwrap().terminal_values();
    assert_eq!(em.len(), n);
    let grid = cfg.grid().unwrap();
    let oracle = map_indexed(n, Execution::Parallel, |i| {
        exact_kinetic_oracle(1, 1.0, 1.0, 1.0, &[p.v0], &grid, SeedSpec::new(43, i as u64)).unwrap().last()
    });
    let ((ma, va), (mb, vb)) = (mean_var(&em).unwrap(), mean_var(&oracle).unwrap());
    let se = ((va + vb) / n as f64).sqrt();
    assert!((ma - mb).abs() < 2.0 * se, "{ma} vs {mb} (SE {se})");
}

#[test]
fn ito_kinetic_law_matches_oracle() {
    let p = LangevinParams::with_kinetic_energy(1.0, 1.0, 1.0, 0.5).unwrap();
    let trio = kinetic_models(&p).unwrap();
    let n = 10_000;
    let cfg = McConfig::new(n, 1e-4, 1.0, SeedSpec::new(44, 0))
        .with_boundary(BoundaryMode::Reflect { lo: 0.0, hi: f64::INFINITY })
        .with_recording(Recording::Endpoints);
    let em = simulate_ensemble(&trio.ito, SolverScheme::EulerMaruyamaOnItoForm, &cfg).unwrap().terminal_values();
    assert_eq!(em.len(), n);
    let grid = TimeGrid::uniform(0.0, 1.0, 100).unwrap();
    let oracle = map_indexed(n, Execution::Parallel, |i| {
        exact_kinetic_oracle(1, 1.0, 1.0, 1.0, &[p.v0], &grid, SeedSpec::new(45, i as u64)).unwrap().last()
    });
    let d = ks_statistic(em, oracle);
    assert!(d < 0.03, "KS = {d}");
}

#[test]
fn event_counts_do_not_depend_on_execution() {
    let m = SdeModel::new(|x, _| -x, |_, _| 1.5, Interpretation::Ito, Domain::real_line(), 0.0).unwrap();
    let cfg = McConfig::new(64, 1e-2, 2.0, SeedSpec::new(46, 0)).with_boundary(BoundaryMode::Reflect { lo: -0.5, hi: 0.5 });
    let a = simulate_ensemble_with(&m, SolverScheme::DirectLeft, &cfg, Execution::Sequential).unwrap();
    let b = simulate_ensemble_with(&m, SolverScheme::DirectLeft, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a.paths, b.paths);
    assert_eq!(a.summary.events.reflections, b.summary.events.reflections);
    assert!(a.summary.events.reflections > 0);
}

#[test]
fn reflections_grow_with_noise_amplitude() {
    let counts: Vec<usize> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&s| {
            let m = SdeModel::new(|_, _| 0.0, move |_, _| s, Interpretation::Ito, Domain::real_line(), 0.0).unwrap();
            let cfg = McConfig::new(1, 1e-3, 20.0, SeedSpec::new(47, 0));
            simulate_reflected(&m, SolverScheme::DirectLeft, -1.0, 1.0, &cfg).unwrap().count(EventKind::Reflection)
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[1] > w[0]), "{counts:?}");
}

#[test]
fn reflected_path_stays_in_interval() {
    let m = SdeModel::new(|x, _| 2.0 - x, |_, _| 1.0, Interpretation::Ito, Domain::real_line(), 1.0).unwrap();
    let cfg = McConfig::new(1, 1e-2, 50.0, SeedSpec::new(48, 0));
    let r = simulate_reflected(&m, SolverScheme::DirectLeft, 0.0, 1.0, &cfg).unwrap();
    assert!(r.path.values().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(!r.terminated_early);
}

#[test]
fn ou_stationary_variance() {
    let grid = TimeGrid::uniform(0.0, 20.0, 20).unwrap();
    let ends = map_indexed(10_000, Execution::Parallel, |i| exact_ou_path(1.0, 1.0, 1.0, 3.0, &grid, SeedSpec::new(49, i as u64)).unwrap().last());
    let (_, v) = mean_var(&ends).unwrap();
    assert!((v - 0.5).abs() < 0.02, "{v}");
}

#[test]
fn ou_one_step_conditional_mean() {
    let grid = TimeGrid::new(vec![0.0, std::f64::consts::LN_2]).unwrap();
    let ends = map_indexed(20_000, Execution::Parallel, |i| exact_ou_path(1.0, 1.0, 1.0, 2.0, &grid, SeedSpec::new(50, i as u64)).unwrap().last());
    let (m, v) = mean_var(&ends).unwrap();
    // Conditional variance ½(1 − e^{−2 ln 2}) = 3/8.
    assert!((m - 1.0).abs() < 4.0 * (0.375f64 / 20_000.0).sqrt(), "{m}");
    assert!((v - 0.375).abs() < 0.02, "{v}");
}

#[test]
fn oracle_hitting_by_dimension() {
    let grid = TimeGrid::uniform(0.0, 20.0, 200_000).unwrap();
    let n = 10_000;
    let one = map_indexed(n, Execution::Parallel, |i| {
        kinetic_oracle_first_hits(1, 1.0, 1.0, 1.0, &[1.0], &grid, SeedSpec::new(51, i as u64), &[1e-4]).unwrap()[0]
    });
    let hit1 = one.iter().filter(|t| t.is_some()).count() as f64 / n as f64;
    assert!(hit1 >= 0.95, "δ=1 fraction {hit1}");
    // δ = 2 stays away from zero far more often, and the gap widens as the band shrinks.
    let two = map_indexed(n, Execution::Parallel, |i| {
        kinetic_oracle_first_hits(2, 1.0, 1.0, 1.0, &[0.0, 1.0], &grid, SeedSpec::new(52, i as u64), &[1e-4, 1e-6]).unwrap()
    });
    let f = |k: usize| two.iter().filter(|t| t[k].is_some()).count() as f64 / n as f64;
    assert!(f(1) < f(0) && f(1) < 0.5 * hit1, "δ=2 fractions {} {}", f(0), f(1));
}

#[test]
fn besq_time_change_values() {
    assert_eq!(besq_time_change(0.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
    assert!((besq_time_change(std::f64::consts::LN_2, 1.0, 1.0, 1.0).unwrap() - 0.75).abs() < 1e-14);
    let s: Vec<f64> = (0..20).map(|k| besq_time_change(0.1 * k as f64, 2.0, 0.5, 1.5).unwrap()).collect();
    assert!(s.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(besq_dimension(KineticFamily::SingleParticle), 1);
    assert_eq!(besq_dimension(KineticFamily::TwoParticle), 2);
    assert!(besq_time_change(1.0, -1.0, 1.0, 1.0).is_err());
}

#[test]
fn no_hit_when_moving_away_without_noise() {
    let m = SdeModel::new(|_, _| -1.0, |_, _| 0.0, Interpretation::Ito, Domain::real_line(), 0.0).unwrap();
    let cfg = McConfig::new(20, 1e-2, 1.0, SeedSpec::new(53, 0));
    let s = hitting_time(&m, SolverScheme::EulerMaruyamaOnItoForm, 1.0, 1e-3, &cfg).unwrap();
    assert_eq!(s.fraction_hit, 0.0);
    assert!(s.mean_hit_time.is_none());
}

#[test]
fn deterministic_euler_has_order_one() {
    let m = SdeModel::new(|x, _| -x, |_, _| 0.0, Interpretation::Ito, Domain::real_line(), 1.0).unwrap();
    let cfg = McConfig::new(4, 0.0625, 1.0, SeedSpec::new(54, 0)).with_boundary(BoundaryMode::None);
    let dts = [0.0625, 0.03125, 0.015625, 0.0078125];
    let r = strong_convergence_order(&m, SolverScheme::EulerMaruyamaOnItoForm, &dts, &Reference::FinestGrid { levels: 4 }, &cfg).unwrap();
    assert!(r.slope >= 0.9, "{}", r.slope);
}

#[test]
fn exact_reference_against_itself_has_zero_error() {
    // Additive noise with zero drift: Euler reproduces W exactly at every resolution.
    let m = SdeModel::new(|_, _| 0.0, |_, _| 1.0, Interpretation::Ito, Domain::real_line(), 0.0).unwrap();
    let cfg = McConfig::new(8, 0.125, 1.0, SeedSpec::new(55, 0)).with_boundary(BoundaryMode::None);
    let dts = [0.125, 0.0625, 0.03125];
    let (errs, _) = noisecalc::solvers::strong_errors(&m, SolverScheme::EulerMaruyamaOnItoForm, &dts, &Reference::FinestGrid { levels: 2 }, &cfg).unwrap();
    assert!(errs.iter().all(|e| *e < 1e-12), "{errs:?}");
}

#[test]
fn single_path_is_reproducible() {
    let m = SdeModel::new(|x, _| -x, |x: f64, _| (1.0 + x * x).sqrt(), Interpretation::Ito, Domain::real_line(), 1.0).unwrap();
    let g = TimeGrid::uniform(0.0, 1.0, 500).unwrap();
    let a = simulate_path(&m, SolverScheme::EulerMaruyamaOnItoForm, &g, SeedSpec::new(56, 9)).unwrap();
    let b = simulate_path(&m, SolverScheme::DirectLeft, &g, SeedSpec::new(56, 9)).unwrap();
    assert_eq!(a, b);
}
