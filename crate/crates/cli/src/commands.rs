//! Subcommand implementations. Each returns the one-line summary printed on
//! stdout.

use noisecalc::fokker_planck::{admissible_dt, evolve_fpe, stationary_density, FpeProblem, GridDensity, Initial};
use noisecalc::integrals::{rule_convergence, EvaluationRule};
use noisecalc::parallel::Execution;
use noisecalc::paths::{generate_brownian, SeedSpec, TimeGrid};
use noisecalc::physics::{rest_start_diagnostics_with, BoundaryBehavior, ModelFamily};
use noisecalc::sde::{convert, Interpretation, SdeModel};
use noisecalc::solvers::{
    hitting_time_bands_with, simulate_ensemble_with, BoundaryMode, HittingSummary, McConfig, Recording, SolverScheme,
};
use serde::Serialize;

use crate::config::{build_model, trio_for, BuiltModel, Format, InitialConfig, RunConfig};
use crate::output::OutDir;
use crate::Failure;

fn model(cfg: &RunConfig) -> Result<BuiltModel, Failure> {
    match &cfg.model {
        Some(m) => build_model(m),
        None => Err(Failure::config("this command needs a `model` block in the config")),
    }
}

fn homogeneous(cfg: &RunConfig, what: &str) -> Result<SdeModel, Failure> {
    let b = model(cfg)?;
    if !b.time_homogeneous {
        return Err(Failure::config(format!("{what} needs time-independent coefficients")));
    }
    Ok(b.model)
}

fn interval(explicit: Option<[f64; 2]>, m: &SdeModel, what: &str) -> Result<(f64, f64), Failure> {
    let (a, b) = match explicit {
        Some([a, b]) => (a, b),
        None if m.domain.lo.is_finite() && m.domain.hi.is_finite() => (m.domain.lo, m.domain.hi),
        None => return Err(Failure::config(format!("{what}.interval is required for an unbounded domain"))),
    };
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Failure::config(format!("{what}.interval [{a}, {b}] is empty")));
    }
    Ok((a, b))
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

pub fn integrate(cfg: &RunConfig, out: &mut OutDir) -> Result<String, Failure> {
    let sec = &cfg.integrate;
    let phi = noisecalc::expr::Expr::parse(&sec.phi).map_err(|e| Failure::config(format!("integrand `{}`: {e}", sec.phi)))?;
    if phi.depends_on_t() {
        return Err(Failure::config("the integrand is a function of `x` only"));
    }
    if sec.rules.is_empty() {
        return Err(Failure::config("integrate.rules is empty"));
    }
    let grid = TimeGrid::uniform(0.0, sec.horizon, sec.steps)?;
    let w = generate_brownian(&grid, SeedSpec::new(cfg.run.seed, 0));
    let f = |x: f64| phi.eval(x, 0.0).unwrap_or(f64::NAN);
    let mut finals = Vec::new();
    for &rule in &sec.rules {
        let table = rule_convergence(f, &w, sec.levels, rule, SeedSpec::new(cfg.run.seed, 1))?;
        let name = format!("convergence_{}.{}", rule.name(), ext(cfg.outputs.format));
        match cfg.outputs.format {
            Format::Csv => out.write(&name, |w| table.write_csv(w))?,
            Format::Json => out.write_json(&name, &table)?,
        }
        finals.push((rule, table.extrapolated));
    }
    let get = |r| finals.iter().find(|(q, _)| *q == r).map(|p| p.1);
    let mut line = format!("integrate: {} table(s), {} levels from {} steps", finals.len(), sec.levels + 1, sec.steps);
    if let (Some(l), Some(r)) = (get(EvaluationRule::Left), get(EvaluationRule::Right)) {
        line += &format!("; right - left = {}", r - l);
    }
    Ok(line)
}

#[derive(Serialize)]
struct DriftRow {
    x: f64,
    f_original: f64,
    f_ito: f64,
}

pub fn convert_drift(cfg: &RunConfig, out: &mut OutDir) -> Result<String, Failure> {
    let m = model(cfg)?.model;
    let sec = &cfg.convert;
    let (a, b) = match sec.range {
        Some([a, b]) => (a, b),
        None if m.domain.lo.is_finite() && m.domain.hi.is_finite() => (m.domain.lo, m.domain.hi),
        None => return Err(Failure::config("convert.range is required for an unbounded domain")),
    };
    if sec.samples == 0 || !(a <= b) || !a.is_finite() || !b.is_finite() || (a == b && sec.samples > 1) {
        return Err(Failure::config(format!("empty sample: {} points on [{a}, {b}]", sec.samples)));
    }
    if !m.has_analytic_dgdx() {
        eprintln!("warning: no analytic dg/dx; using finite differences");
    }
    let n = sec.samples;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let x = if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 };
        rows.push(DriftRow { x, f_original: m.drift_checked(x, sec.t)?, f_ito: m.ito_drift(x, sec.t)? });
    }
    let name = format!("converted_drift.{}", ext(cfg.outputs.format));
    match cfg.outputs.format {
        Format::Csv => out.write(&name, |w| {
            writeln!(w, "x,f_original,f_ito")?;
            for r in &rows {
                writeln!(w, "{},{},{}", r.x, r.f_original, r.f_ito)?;
            }
            Ok(())
        })?,
        Format::Json => out.write_json(&name, &rows)?,
    }
    let shift = rows.iter().map(|r| (r.f_ito - r.f_original).abs()).fold(0.0, f64::max);
    Ok(format!("convert: {} model to ito at {n} points on [{a}, {b}]; max |f_ito - f| = {shift}", m.interpretation))
}

fn mc_config(cfg: &RunConfig) -> Result<McConfig, Failure> {
    let r = &cfg.run;
    let mc = McConfig::new(r.n_paths, r.dt, r.horizon, SeedSpec::new(r.seed, 0))
        .with_boundary(r.boundary)
        .with_recording(Recording::Endpoints);
    mc.validate()?;
    Ok(mc)
}

pub fn simulate(cfg: &RunConfig, out: &mut OutDir) -> Result<String, Failure> {
    let m = model(cfg)?.model;
    let mc = mc_config(cfg)?;
    let scheme = cfg.run.scheme;
    let mut ens = simulate_ensemble_with(&m, scheme, &mc, Execution::Parallel)?;
    if let Some(h) = cfg.simulate.hitting {
        if !(h.band > 0.0) {
            return Err(Failure::config("simulate.hitting.band must be positive"));
        }
        let stats = hitting_time_bands_with(&m, scheme, h.level, &[h.band], &mc, Execution::Parallel)?.remove(0);
        ens.summary.hitting = Some(stats.summary());
    }
    let s = &ens.summary;
    out.write_json("ensemble_summary.json", s)?;
    let hist = format!("histogram.{}", ext(cfg.outputs.format));
    match cfg.outputs.format {
        Format::Csv => out.write(&hist, |w| s.histogram.write_csv(w))?,
        Format::Json => out.write_json(&hist, &s.histogram)?,
    }
    let mean = s.terminal_mean.map_or("n/a".to_string(), |v| v.to_string());
    Ok(format!(
        "simulate: {} paths with {}, {} completed, terminal mean {mean}, {} violations, {} reflections",
        s.n_paths,
        scheme.name(),
        s.n_completed,
        s.events.violations,
        s.events.reflections
    ))
}

fn write_density(out: &mut OutDir, stem: &str, format: Format, p: &GridDensity) -> Result<(), Failure> {
    let name = format!("{stem}.{}", ext(format));
    match format {
        Format::Csv => out.write(&name, |w| p.write_csv(w)),
        Format::Json => {
            #[derive(Serialize)]
            struct Cell {
                x_center: f64,
                density: f64,
            }
            let cells: Vec<Cell> = p.centers().into_iter().zip(p.values()).map(|(x_center, &density)| Cell { x_center, density }).collect();
            out.write_json(&name, &cells)
        }
    }
}

/// Drift of the HK form with the same law, and the diffusion, at t = 0.
fn hk_coefficients(m: &SdeModel) -> Result<(impl Fn(f64) -> f64 + Send + Sync + 'static, impl Fn(f64) -> f64 + Send + Sync + 'static), Failure> {
    let hk = convert(m, Interpretation::HaenggiKlimontovich)?;
    let g = m.diffusion_coef().clone();
    Ok((move |x| hk.drift(x, 0.0), move |x| g(x, 0.0)))
}

pub fn stationary(cfg: &RunConfig, out: &mut OutDir) -> Result<String, Failure> {
    let m = homogeneous(cfg, "the stationary density")?;
    let (a, b) = interval(cfg.stationary.interval, &m, "stationary")?;
    let (f, g) = hk_coefficients(&m)?;
    let p = stationary_density(f, g, a, b, cfg.stationary.n_cells)?;
    write_density(out, "density", cfg.outputs.format, &p)?;
    Ok(format!("stationary: {} cells on [{a}, {b}], mode at x = {}", p.n_cells(), p.center(p.argmax())))
}

pub fn fpe(cfg: &RunConfig, out: &mut OutDir) -> Result<String, Failure> {
    let m = homogeneous(cfg, "the Fokker-Planck evolution")?;
    let sec = &cfg.fpe;
    let (a, b) = interval(sec.interval, &m, "fpe")?;
    let initial = match &sec.initial {
        None => Initial::PointMass(m.x0),
        Some(InitialConfig::PointMass(x)) => Initial::PointMass(*x),
        Some(InitialConfig::Density(src)) => {
            let e = noisecalc::expr::Expr::parse(src).map_err(|e| Failure::config(format!("initial density `{src}`: {e}")))?;
            Initial::Density(GridDensity::from_fn(a, b, sec.n_cells, |x| e.eval(x, 0.0).unwrap_or(f64::NAN))?)
        }
    };
    let (f, g) = hk_coefficients(&m)?;
    let problem = FpeProblem::new(f, g, a, b, sec.n_cells, initial)?;
    let dt = match sec.dt {
        Some(dt) => dt,
        None => admissible_dt(&problem)?,
    };
    if !(sec.t_end >= 0.0) {
        return Err(Failure::config("fpe.t_end must be non-negative"));
    }
    let n_steps = (sec.t_end / dt).ceil() as usize;
    let every = (n_steps / sec.entropy_points.max(1)).max(1);
    let run = evolve_fpe(&problem, dt, sec.t_end, every)?;
    write_density(out, "density", cfg.outputs.format, &run.density)?;
    write_density(out, "stationary", cfg.outputs.format, &run.stationary)?;
    let entropy = format!("entropy.{}", ext(cfg.outputs.format));
    match cfg.outputs.format {
        Format::Csv => out.write(&entropy, |w| run.write_entropy_csv(w))?,
        Format::Json => {
            #[derive(Serialize)]
            struct Point {
                t: f64,
                #[serde(rename = "H")]
                h: f64,
            }
            let pts: Vec<Point> = run.entropy.iter().map(|&(t, h)| Point { t, h }).collect();
            out.write_json(&entropy, &pts)?
        }
    }
    let h = run.entropy.last().map_or(0.0, |e| e.1);
    let l1 = run.density.l1_distance(&run.stationary)?;
    Ok(format!("fpe: {} steps of {} to t = {}, H = {h}, L1 to stationary = {l1}", run.n_steps, run.dt, sec.t_end))
}

#[derive(Serialize)]
struct RestStartSummary {
    interior_fraction: f64,
    violation_fraction: f64,
    stuck_fraction: f64,
    boundary_behavior: BoundaryBehavior,
    drift_at_start: f64,
    boundary: BoundaryMode,
}

#[derive(Serialize)]
struct HittingReport {
    level: f64,
    band: f64,
    start: f64,
    n_paths: usize,
    #[serde(flatten)]
    summary: HittingSummary,
}

#[derive(Serialize)]
struct MemberReport {
    model_family: ModelFamily,
    interpretation: Interpretation,
    scheme: SolverScheme,
    rest_start: RestStartSummary,
    hitting: HittingReport,
}

#[derive(Serialize)]
struct ExperimentReport {
    experiment: String,
    seed: u64,
    rest_start_x0: f64,
    rest_start_dt: f64,
    rest_start_seeds: usize,
    hitting_dt: f64,
    hitting_horizon: f64,
    members: Vec<MemberReport>,
}

pub fn experiment(name: &str, cfg: &RunConfig, out: &mut OutDir) -> Result<String, Failure> {
    let sec = &cfg.experiment;
    let seed = cfg.run.seed;
    let trio = trio_for(name, sec)?;
    let floor = trio.ito.domain.lo;
    let rest = rest_start_diagnostics_with(&trio.with_x0(floor)?, sec.rest_start.dt, sec.rest_start.n_seeds, seed, Execution::Parallel)?;
    let h = &sec.hitting;
    if !(h.band > 0.0) {
        return Err(Failure::config("experiment.hitting.band must be positive"));
    }
    let start = h.start.unwrap_or(floor + 0.5);
    let moved = trio.with_x0(start)?;
    let mc = McConfig::new(h.n_paths, h.dt, h.horizon, SeedSpec::new(seed, 1 << 32)).with_recording(Recording::Endpoints);
    mc.validate()?;
    let mut members = Vec::with_capacity(3);
    for (interp, model) in moved.members() {
        let scheme = SolverScheme::direct_for(interp);
        let stats = hitting_time_bands_with(model, scheme, floor, &[h.band], &mc, Execution::Parallel)?.remove(0);
        let r = rest.member(interp);
        members.push(MemberReport {
            model_family: trio.family,
            interpretation: interp,
            scheme,
            rest_start: RestStartSummary {
                interior_fraction: r.interior_fraction,
                violation_fraction: r.violation_fraction,
                stuck_fraction: r.stuck_fraction,
                boundary_behavior: r.boundary_behavior,
                drift_at_start: r.drift_at_start,
                boundary: r.boundary,
            },
            hitting: HittingReport { level: floor, band: h.band, start, n_paths: h.n_paths, summary: stats.summary() },
        });
    }
    let report = ExperimentReport {
        experiment: name.to_string(),
        seed,
        rest_start_x0: floor,
        rest_start_dt: sec.rest_start.dt,
        rest_start_seeds: sec.rest_start.n_seeds,
        hitting_dt: h.dt,
        hitting_horizon: h.horizon,
        members,
    };
    out.write_json(&format!("experiment_{name}.json"), &report)?;
    let parts: Vec<String> = report
        .members
        .iter()
        .map(|m| {
            format!(
                "{}: interior {} stuck {} violations {} hit {}",
                m.interpretation.name(),
                m.rest_start.interior_fraction,
                m.rest_start.stuck_fraction,
                m.rest_start.violation_fraction,
                m.hitting.summary.fraction
            )
        })
        .collect();
    Ok(format!("experiment {name}: {}", parts.join("; ")))
}
