//! Path simulation for [`SdeModel`]s, boundary handling, hitting times and
//! exact Ornstein–Uhlenbeck based oracles.

use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::paths::{refine_bridge, std_normal, generate_brownian, SamplePath, SeedSpec, TimeGrid};
use crate::sde::{to_ito, Interpretation, SdeModel};
use crate::sum::compensated;

/// Discretization used to advance a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverScheme {
    /// Euler–Maruyama applied to [`to_ito`] of the model.
    EulerMaruyamaOnItoForm,
    /// `X⁺ = X + fΔt + g(X)ΔW`; Itô models only.
    DirectLeft,
    /// Predictor `X̂ = X + fΔt + g(X)ΔW`, then `X⁺ = X + fΔt + g((X+X̂)/2)ΔW`;
    /// Stratonovich models only.
    DirectMidpointHeun,
    /// Same predictor, then `X⁺ = X + fΔt + g(X̂)ΔW`; HK models only.
    DirectRightPredictorCorrector,
}

impl SolverScheme {
    /// Interpretation a direct scheme discretizes; `None` for the converted
    /// Euler–Maruyama scheme, which accepts any model.
    pub fn rule_interpretation(self) -> Option<Interpretation> {
        match self {
            SolverScheme::EulerMaruyamaOnItoForm => None,
            SolverScheme::DirectLeft => Some(Interpretation::Ito),
            SolverScheme::DirectMidpointHeun => Some(Interpretation::Stratonovich),
            SolverScheme::DirectRightPredictorCorrector => Some(Interpretation::HaenggiKlimontovich),
        }
    }

    /// Direct scheme matching an interpretation.
    pub fn direct_for(i: Interpretation) -> Self {
        match i {
            Interpretation::Ito => SolverScheme::DirectLeft,
            Interpretation::Stratonovich => SolverScheme::DirectMidpointHeun,
            Interpretation::HaenggiKlimontovich => SolverScheme::DirectRightPredictorCorrector,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverScheme::EulerMaruyamaOnItoForm => "euler_maruyama_on_ito_form",
            SolverScheme::DirectLeft => "direct_left",
            SolverScheme::DirectMidpointHeun => "direct_midpoint_heun",
            SolverScheme::DirectRightPredictorCorrector => "direct_right_predictor_corrector",
        }
    }
}

/// What happens when a step leaves the model's domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryMode {
    /// No domain checks; only a non-finite coefficient or state stops the
    /// path (as a violation).
    None,
    /// Stop at the first argument outside the closed domain.
    #[default]
    StopOnViolation,
    /// Fold every state back into `[lo, hi]`; intermediate stage points are
    /// folded as well, without logging.
    Reflect { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    DomainViolation,
    Reflection,
    HitLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub kind: EventKind,
    pub time: f64,
    /// For violations the offending argument, for reflections the state
    /// before folding, for hits the state at the hit.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub path: SamplePath,
    pub events: Vec<PathEvent>,
    pub terminated_early: bool,
}

impl PathResult {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn violated(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::DomainViolation)
    }
}

/// Which path values an ensemble keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    #[default]
    Full,
    /// Only the initial and the last simulated point.
    Endpoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: SeedSpec,
    #[serde(default)]
    pub boundary: BoundaryMode,
    #[serde(default)]
    pub recording: Recording,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: SeedSpec) -> Self {
        Self { n_paths, dt, horizon, seed, boundary: BoundaryMode::default(), recording: Recording::default() }
    }

    pub fn with_boundary(mut self, boundary: BoundaryMode) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(invalid("n_paths must be >= 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(invalid(format!("horizon {} must be at least dt {}", self.horizon, self.dt)));
        }
        if let BoundaryMode::Reflect { lo, hi } = self.boundary {
            if !(lo < hi) {
                return Err(invalid(format!("reflecting interval [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    /// Uniform grid on `[0, horizon]`; the step count is `horizon/dt`
    /// rounded to the nearest integer.
    pub fn grid(&self) -> Result<TimeGrid> {
        self.validate()?;
        let n = ((self.horizon / self.dt).round() as usize).max(1);
        TimeGrid::uniform(0.0, self.horizon, n)
    }

    /// Seed of ensemble member `i`.
    pub fn path_seed(&self, i: usize) -> SeedSpec {
        SeedSpec::new(self.seed.master, i as u64)
    }
}

/// Folds `x` into `[lo, hi]`, returning the folded value and fold count.
pub fn fold_into(mut x: f64, lo: f64, hi: f64) -> (f64, usize) {
    let mut folds = 0;
    if !x.is_finite() {
        return (x, 0);
    }
    let width = hi - lo;
    if width.is_finite() && ((x - lo).abs() > 4.0 * width) {
        // Far outside: reduce by whole periods of the fold first.
        let period = 2.0 * width;
        let r = (x - lo).rem_euclid(period);
        folds += ((x - lo) / width).abs().floor() as usize;
        x = lo + r;
    }
    loop {
        if x > hi {
            x = 2.0 * hi - x;
        } else if x < lo {
            x = 2.0 * lo - x;
        } else {
            return (x, folds);
        }
        folds += 1;
    }
}

enum Stage {
    Ok(f64),
    Violation(f64),
}

struct Stepper<'a> {
    model: &'a SdeModel,
    scheme: SolverScheme,
    boundary: BoundaryMode,
}

enum StepOutcome {
    Next { x: f64, folds: usize, pre_fold: f64 },
    /// `state` is the computed next state when only its admission failed.
    Violation { value: f64, state: Option<f64> },
}

impl<'a> Stepper<'a> {
    fn admit(&self, y: f64) -> Stage {
        if !y.is_finite() {
            return Stage::Violation(y);
        }
        match self.boundary {
            BoundaryMode::None => Stage::Ok(y),
            BoundaryMode::StopOnViolation => match self.model.domain.admit(y) {
                Some(v) => Stage::Ok(v),
                None => Stage::Violation(y),
            },
            BoundaryMode::Reflect { lo, hi } => {
                let (v, _) = fold_into(y, lo, hi);
                match self.model.domain.admit(v) {
                    Some(v) => Stage::Ok(v),
                    None => Stage::Violation(y),
                }
            }
        }
    }

    fn g(&self, y: f64, t: f64) -> std::result::Result<f64, f64> {
        match self.admit(y) {
            Stage::Ok(v) => {
                let g = self.model.diffusion(v, t);
                if g.is_finite() { Ok(g) } else { Err(y) }
            }
            Stage::Violation(v) => Err(v),
        }
    }

    fn step(&self, x: f64, t: f64, h: f64, dw: f64) -> StepOutcome {
        let f = self.model.drift(x, t);
        if !f.is_finite() {
            return StepOutcome::Violation { value: x, state: None };
        }
        let gx = match self.g(x, t) {
            Ok(v) => v,
            Err(v) => return StepOutcome::Violation { value: v, state: None },
        };
        let base = x + f * h;
        let next = match self.scheme {
            SolverScheme::EulerMaruyamaOnItoForm | SolverScheme::DirectLeft => base + gx * dw,
            SolverScheme::DirectMidpointHeun | SolverScheme::DirectRightPredictorCorrector => {
                let pred = base + gx * dw;
                let arg = if self.scheme == SolverScheme::DirectMidpointHeun { 0.5 * (x + pred) } else { pred };
                match self.g(arg, t) {
                    Ok(g) => base + g * dw,
                    Err(v) => return StepOutcome::Violation { value: v, state: None },
                }
            }
        };
        if !next.is_finite() {
            return StepOutcome::Violation { value: next, state: None };
        }
        match self.boundary {
            BoundaryMode::None => StepOutcome::Next { x: next, folds: 0, pre_fold: next },
            BoundaryMode::StopOnViolation => match self.model.domain.admit(next) {
                Some(v) => StepOutcome::Next { x: v, folds: 0, pre_fold: next },
                None => StepOutcome::Violation { value: next, state: Some(next) },
            },
            BoundaryMode::Reflect { lo, hi } => {
                let (v, folds) = fold_into(next, lo, hi);
                match self.model.domain.admit(v) {
                    Some(v) => StepOutcome::Next { x: v, folds, pre_fold: next },
                    None => StepOutcome::Violation { value: v, state: Some(v) },
                }
            }
        }
    }
}

fn prepare(model: &SdeModel, scheme: SolverScheme) -> Result<Option<SdeModel>> {
    match scheme.rule_interpretation() {
        None => Ok(Some(to_ito(model))),
        Some(i) if i == model.interpretation => Ok(None),
        Some(i) => Err(invalid(format!(
            "scheme {} discretizes {} noise but the model is {}",
            scheme.name(),
            i,
            model.interpretation
        ))),
    }
}

/// Level crossing with a tolerance band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRule {
    pub level: f64,
    pub band: f64,
    /// Approaching from above: hit when `X ≤ level + band`; otherwise when
    /// `X ≥ level − band`.
    pub from_above: bool,
}

impl HitRule {
    /// Direction chosen by the side of `x0`.
    pub fn new(level: f64, band: f64, x0: f64) -> Self {
        Self { level, band, from_above: x0 > level }
    }

    #[inline]
    pub fn hit(&self, x: f64) -> bool {
        if self.from_above { x <= self.level + self.band } else { x >= self.level - self.band }
    }
}

/// Per-step observer used by the driver; returns `true` to stop.
trait Observer {
    fn observe(&mut self, t: f64, x: f64) -> bool;
}

struct NoObserver;

impl Observer for NoObserver {
    #[inline]
    fn observe(&mut self, _: f64, _: f64) -> bool {
        false
    }
}

/// First hit times for a ladder of bands (descending order).
struct BandObserver {
    rules: Vec<HitRule>,
    times: Vec<Option<f64>>,
    next: usize,
}

impl Observer for BandObserver {
    fn observe(&mut self, t: f64, x: f64) -> bool {
        while self.next < self.rules.len() && self.rules[self.next].hit(x) {
            self.times[self.next] = Some(t);
            self.next += 1;
        }
        self.next == self.rules.len()
    }
}

struct Driven {
    times: Vec<f64>,
    values: Vec<f64>,
    events: Vec<PathEvent>,
    terminated_early: bool,
}

/// Core loop. `noise(j)` returns ΔW over step `j`.
fn drive<N, O>(
    model: &SdeModel,
    scheme: SolverScheme,
    grid: &TimeGrid,
    boundary: BoundaryMode,
    recording: Recording,
    mut noise: N,
    observer: &mut O,
) -> Driven
where
    N: FnMut(usize) -> f64,
    O: Observer,
{
    let stepper = Stepper { model, scheme, boundary };
    let pts = grid.points();
    let mut x = model.x0;
    let keep_all = recording == Recording::Full;
    let mut times = Vec::with_capacity(if keep_all { pts.len() } else { 2 });
    let mut values = Vec::with_capacity(times.capacity());
    times.push(pts[0]);
    values.push(x);
    let mut events = Vec::new();
    let mut terminated_early = false;
    let mut last = (pts[0], x);
    if !observer.observe(pts[0], x) {
        for j in 1..pts.len() {
            let (t, h) = (pts[j - 1], pts[j] - pts[j - 1]);
            let dw = noise(j - 1);
            match stepper.step(x, t, h, dw) {
                StepOutcome::Next { x: nx, folds, pre_fold } => {
                    for _ in 0..folds {
                        events.push(PathEvent { kind: EventKind::Reflection, time: pts[j], value: pre_fold });
                    }
                    x = nx;
                    last = (pts[j], x);
                    if keep_all {
                        times.push(pts[j]);
                        values.push(x);
                    }
                    if observer.observe(pts[j], x) {
                        break;
                    }
                }
                StepOutcome::Violation { value, state } => {
                    // A level crossed on the way out counts before the violation.
                    if state.is_some_and(|s| observer.observe(pts[j], s)) {
                        break;
                    }
                    events.push(PathEvent { kind: EventKind::DomainViolation, time: pts[j], value });
                    terminated_early = true;
                    break;
                }
            }
        }
    }
    if !keep_all && last.0 != pts[0] {
        times.push(last.0);
        values.push(last.1);
    }
    Driven { times, values, events, terminated_early }
}

fn into_result(d: Driven, grid: &TimeGrid) -> Result<PathResult> {
    let g = if d.times.len() == grid.len() { grid.clone() } else { TimeGrid::new(d.times)? };
    Ok(PathResult { path: SamplePath::from_parts_unchecked(g, d.values), events: d.events, terminated_early: d.terminated_early })
}

fn gaussian_noise(grid: &TimeGrid, seed: SeedSpec) -> impl FnMut(usize) -> f64 + '_ {
    let mut rng = seed.rng();
    let pts = grid.points();
    move |j| (pts[j + 1] - pts[j]).sqrt() * std_normal(&mut rng)
}

/// Simulates one path with [`BoundaryMode::StopOnViolation`].
///
/// Increments are drawn from the same stream, in the same order, as
/// [`generate_brownian`] on this grid.
pub fn simulate_path(model: &SdeModel, scheme: SolverScheme, grid: &TimeGrid, seed: SeedSpec) -> Result<PathResult> {
    simulate_path_with(model, scheme, grid, seed, BoundaryMode::StopOnViolation)
}

pub fn simulate_path_with(
    model: &SdeModel,
    scheme: SolverScheme,
    grid: &TimeGrid,
    seed: SeedSpec,
    boundary: BoundaryMode,
) -> Result<PathResult> {
    let converted = prepare(model, scheme)?;
    let m = converted.as_ref().unwrap_or(model);
    let d = drive(m, scheme, grid, boundary, Recording::Full, gaussian_noise(grid, seed), &mut NoObserver);
    into_result(d, grid)
}

/// Simulates on the grid of a given driving path `w`, using its increments.
pub fn simulate_with_noise(model: &SdeModel, scheme: SolverScheme, w: &SamplePath, boundary: BoundaryMode) -> Result<PathResult> {
    let converted = prepare(model, scheme)?;
    let m = converted.as_ref().unwrap_or(model);
    let v = w.values();
    let d = drive(m, scheme, w.grid(), boundary, Recording::Full, |j| v[j + 1] - v[j], &mut NoObserver);
    into_result(d, w.grid())
}

/// Equal-width histogram normalized to a density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    /// `bins` equal cells over `range` (default: sample min..max). Samples
    /// outside the range are dropped; densities integrate to the kept
    /// fraction.
    pub fn from_samples(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        if bins == 0 {
            return Err(invalid("histogram needs at least one bin"));
        }
        let (lo, hi) = match range {
            Some(r) => r,
            None => {
                let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !lo.is_finite() {
                    (0.0, 1.0)
                } else if lo == hi {
                    (lo - 0.5, hi + 0.5)
                } else {
                    (lo, hi)
                }
            }
        };
        if !(lo < hi) {
            return Err(invalid(format!("histogram range [{lo}, {hi}] is empty")));
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &s in samples {
            if s >= lo && s <= hi {
                let k = (((s - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        let n = samples.len().max(1) as f64;
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
        Ok(Self { edges, density })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_left,bin_right,density")?;
        for (k, d) in self.density.iter().enumerate() {
            writeln!(w, "{},{},{}", self.edges[k], self.edges[k + 1], d)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventCounts {
    pub violations: usize,
    pub reflections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingSummary {
    pub fraction: f64,
    pub mean_time: Option<f64>,
    pub ci95: Option<f64>,
}

/// Ensemble summary; serializes to the documented JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: SolverScheme,
    pub interpretation: Interpretation,
    /// Over paths that reached the horizon.
    pub terminal_mean: Option<f64>,
    pub terminal_var: Option<f64>,
    pub n_completed: usize,
    pub events: EventCounts,
    pub hitting: Option<HittingSummary>,
    #[serde(skip)]
    pub histogram: Histogram,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub paths: Vec<PathResult>,
    pub summary: EnsembleSummary,
}

impl EnsembleResult {
    /// Terminal values of paths that reached the horizon, in path order.
    pub fn terminal_values(&self) -> Vec<f64> {
        self.paths.iter().filter(|p| !p.terminated_early).map(|p| p.path.last()).collect()
    }
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = compensated(xs.iter().copied()) / n;
    let var = if xs.len() > 1 { compensated(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0) } else { 0.0 };
    Some((mean, var))
}

pub const HISTOGRAM_BINS: usize = 50;

/// `cfg.n_paths` independent paths; member `i` uses seed `(master, i)`.
pub fn simulate_ensemble(model: &SdeModel, scheme: SolverScheme, cfg: &McConfig) -> Result<EnsembleResult> {
    simulate_ensemble_with(model, scheme, cfg, Execution::default())
}

pub fn simulate_ensemble_with(model: &SdeModel, scheme: SolverScheme, cfg: &McConfig, exec: Execution) -> Result<EnsembleResult> {
    let grid = cfg.grid()?;
    let converted = prepare(model, scheme)?;
    let m = converted.as_ref().unwrap_or(model);
    let paths: Vec<PathResult> = map_indexed(cfg.n_paths, exec, |i| {
        let d = drive(m, scheme, &grid, cfg.boundary, cfg.recording, gaussian_noise(&grid, cfg.path_seed(i)), &mut NoObserver);
        into_result(d, &grid)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let terminal: Vec<f64> = paths.iter().filter(|p| !p.terminated_early).map(|p| p.path.last()).collect();
    let mv = mean_var(&terminal);
    let events = EventCounts {
        violations: paths.iter().map(|p| p.count(EventKind::DomainViolation)).sum(),
        reflections: paths.iter().map(|p| p.count(EventKind::Reflection)).sum(),
    };
    let summary = EnsembleSummary {
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        horizon: cfg.horizon,
        scheme,
        interpretation: model.interpretation,
        terminal_mean: mv.map(|v| v.0),
        terminal_var: mv.map(|v| v.1),
        n_completed: terminal.len(),
        events,
        hitting: None,
        histogram: Histogram::from_samples(&terminal, HISTOGRAM_BINS, None)?,
    };
    Ok(EnsembleResult { paths, summary })
}

/// One path folded into `[a, b]` after every step, using `cfg.dt`,
/// `cfg.horizon` and `cfg.seed`.
pub fn simulate_reflected(model: &SdeModel, scheme: SolverScheme, a: f64, b: f64, cfg: &McConfig) -> Result<PathResult> {
    if !(a < b) {
        return Err(invalid(format!("reflecting interval [{a}, {b}] is empty")));
    }
    if !(model.x0 >= a && model.x0 <= b) {
        return Err(Error::OutsideDomain { x: model.x0, lo: a, hi: b });
    }
    let grid = cfg.grid()?;
    simulate_path_with(model, scheme, &grid, cfg.seed, BoundaryMode::Reflect { lo: a, hi: b })
}

/// First-passage statistics for one band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingStats {
    pub level: f64,
    pub threshold: f64,
    pub n_paths: usize,
    pub n_hit: usize,
    pub fraction_hit: f64,
    /// Mean over paths that hit; censored paths are excluded.
    pub mean_hit_time: Option<f64>,
    /// `1.96·sd/√n_hit`; needs at least two hits.
    pub ci95: Option<f64>,
}

impl HittingStats {
    pub fn from_times(level: f64, threshold: f64, times: &[Option<f64>]) -> Self {
        let hits: Vec<f64> = times.iter().flatten().copied().collect();
        let n_paths = times.len();
        let mv = mean_var(&hits);
        Self {
            level,
            threshold,
            n_paths,
            n_hit: hits.len(),
            fraction_hit: if n_paths == 0 { 0.0 } else { hits.len() as f64 / n_paths as f64 },
            mean_hit_time: mv.map(|v| v.0),
            ci95: (hits.len() > 1).then(|| 1.96 * mv.unwrap().1.sqrt() / (hits.len() as f64).sqrt()),
        }
    }

    pub fn summary(&self) -> HittingSummary {
        HittingSummary { fraction: self.fraction_hit, mean_time: self.mean_hit_time, ci95: self.ci95 }
    }
}

/// First grid time at which `path` enters the band around `level`.
pub fn first_hit_time(path: &SamplePath, rule: &HitRule) -> Option<f64> {
    path.values().iter().position(|&x| rule.hit(x)).map(|i| path.times()[i])
}

/// First hit of `level` within band `eps` (direction set by the side of
/// `x0`). Paths stop at the hit; a path that leaves the domain first is
/// censored.
pub fn hitting_time(model: &SdeModel, scheme: SolverScheme, level: f64, eps: f64, cfg: &McConfig) -> Result<HittingStats> {
    Ok(hitting_time_bands(model, scheme, level, &[eps], cfg)?.remove(0))
}

/// [`hitting_time`] for several bands from one set of simulated paths.
/// Results are in the order of `bands`.
pub fn hitting_time_bands(
    model: &SdeModel,
    scheme: SolverScheme,
    level: f64,
    bands: &[f64],
    cfg: &McConfig,
) -> Result<Vec<HittingStats>> {
    hitting_time_bands_with(model, scheme, level, bands, cfg, Execution::default())
}

pub fn hitting_time_bands_with(
    model: &SdeModel,
    scheme: SolverScheme,
    level: f64,
    bands: &[f64],
    cfg: &McConfig,
    exec: Execution,
) -> Result<Vec<HittingStats>> {
    if bands.is_empty() || bands.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(invalid("hitting bands must be positive"));
    }
    let grid = cfg.grid()?;
    let converted = prepare(model, scheme)?;
    let m = converted.as_ref().unwrap_or(model);
    let mut order: Vec<usize> = (0..bands.len()).collect();
    order.sort_by(|&a, &b| bands[b].total_cmp(&bands[a]));
    let rules: Vec<HitRule> = order.iter().map(|&k| HitRule::new(level, bands[k], model.x0)).collect();
    let per_path: Vec<Vec<Option<f64>>> = map_indexed(cfg.n_paths, exec, |i| {
        let mut obs = BandObserver { rules: rules.clone(), times: vec![None; rules.len()], next: 0 };
        drive(m, scheme, &grid, cfg.boundary, Recording::Endpoints, gaussian_noise(&grid, cfg.path_seed(i)), &mut obs);
        obs.times
    });
    let mut out = vec![None; bands.len()];
    for (slot, &k) in order.iter().enumerate() {
        let times: Vec<Option<f64>> = per_path.iter().map(|t| t[slot]).collect();
        out[k] = Some(HittingStats::from_times(level, bands[k], &times));
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Exact OU transition coefficients, cached for the last step size.
struct OuTransition {
    rate: f64,
    stationary_var: f64,
    h: f64,
    decay: f64,
    sd: f64,
}

impl OuTransition {
    fn new(m: f64, gamma: f64, sigma: f64) -> Result<Self> {
        check_positive("m", m)?;
        check_positive("gamma", gamma)?;
        check_positive("sigma", sigma)?;
        Ok(Self { rate: gamma / m, stationary_var: sigma * sigma / (2.0 * gamma * m), h: f64::NAN, decay: 1.0, sd: 0.0 })
    }

    #[inline]
    fn step<R: rand::Rng + ?Sized>(&mut self, v: f64, h: f64, rng: &mut R) -> f64 {
        if h != self.h {
            self.h = h;
            self.decay = (-self.rate * h).exp();
            self.sd = (self.stationary_var * -(-2.0 * self.rate * h).exp_m1()).sqrt();
        }
        v * self.decay + self.sd * std_normal(rng)
    }
}

/// Exact Ornstein–Uhlenbeck velocity `m dV = −γV dt + σ dW` on `grid`:
/// `V_{t+h} | V_t ~ N(V_t e^{−γh/m}, σ²/(2γm)·(1 − e^{−2γh/m}))`.
pub fn exact_ou_path(m: f64, gamma: f64, sigma: f64, v0: f64, grid: &TimeGrid, seed: SeedSpec) -> Result<SamplePath> {
    let mut tr = OuTransition::new(m, gamma, sigma)?;
    if !v0.is_finite() {
        return Err(invalid("initial velocity must be finite"));
    }
    let mut rng = seed.rng();
    let pts = grid.points();
    let mut values = Vec::with_capacity(pts.len());
    let mut v = v0;
    values.push(v);
    for w in pts.windows(2) {
        v = tr.step(v, w[1] - w[0], &mut rng);
        values.push(v);
    }
    Ok(SamplePath::from_parts_unchecked(grid.clone(), values))
}

fn check_oracle_inputs(delta: usize, v0s: &[f64]) -> Result<()> {
    if !(delta == 1 || delta == 2) {
        return Err(invalid(format!("kinetic oracle supports dimension 1 or 2, got {delta}")));
    }
    if v0s.len() != delta {
        return Err(Error::DimensionMismatch { expected: delta, got: v0s.len() });
    }
    Ok(())
}

fn oracle_component_seed(seed: SeedSpec, delta: usize, i: usize) -> SeedSpec {
    seed.with_stream(seed.stream * delta as u64 + i as u64)
}

/// `½m Σᵢ Vᵢ²` for `δ = v0s.len()` independent exact OU velocities;
/// component `i` draws from stream `seed.stream·δ + i`.
pub fn exact_kinetic_oracle(delta: usize, m: f64, gamma: f64, sigma: f64, v0s: &[f64], grid: &TimeGrid, seed: SeedSpec) -> Result<SamplePath> {
    check_oracle_inputs(delta, v0s)?;
    let comps = v0s
        .iter()
        .enumerate()
        .map(|(i, &v0)| exact_ou_path(m, gamma, sigma, v0, grid, oracle_component_seed(seed, delta, i)))
        .collect::<Result<Vec<_>>>()?;
    let n = grid.len();
    let values = (0..n).map(|j| 0.5 * m * comps.iter().map(|c| c.values()[j].powi(2)).sum::<f64>()).collect();
    Ok(SamplePath::from_parts_unchecked(grid.clone(), values))
}

/// First grid times at which the path of [`exact_kinetic_oracle`] (same
/// draws) enters `[0, band]`, one entry per band. Stops at the smallest band
/// instead of storing the path.
pub fn kinetic_oracle_first_hits(
    delta: usize,
    m: f64,
    gamma: f64,
    sigma: f64,
    v0s: &[f64],
    grid: &TimeGrid,
    seed: SeedSpec,
    bands: &[f64],
) -> Result<Vec<Option<f64>>> {
    check_oracle_inputs(delta, v0s)?;
    let mut trans = (0..delta).map(|_| OuTransition::new(m, gamma, sigma)).collect::<Result<Vec<_>>>()?;
    let mut rngs: Vec<_> = (0..delta).map(|i| oracle_component_seed(seed, delta, i).rng()).collect();
    let mut v = v0s.to_vec();
    let mut order: Vec<usize> = (0..bands.len()).collect();
    order.sort_by(|&a, &b| bands[b].total_cmp(&bands[a]));
    let mut out = vec![None; bands.len()];
    let mut next = 0;
    let pts = grid.points();
    let energy = |v: &[f64]| 0.5 * m * v.iter().map(|x| x * x).sum::<f64>();
    let mut k = energy(&v);
    let mut j = 0;
    loop {
        while next < order.len() && k <= bands[order[next]] {
            out[order[next]] = Some(pts[j]);
            next += 1;
        }
        if next == order.len() || j + 1 == pts.len() {
            return Ok(out);
        }
        let h = pts[j + 1] - pts[j];
        for c in 0..delta {
            v[c] = trans[c].step(v[c], h, &mut rngs[c]);
        }
        k = energy(&v);
        j += 1;
    }
}

/// Single- or two-particle kinetic energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticFamily {
    SingleParticle,
    TwoParticle,
}

/// Dimension of the squared Bessel process behind a kinetic family.
pub fn besq_dimension(family: KineticFamily) -> usize {
    match family {
        KineticFamily::SingleParticle => 1,
        KineticFamily::TwoParticle => 2,
    }
}

/// `s(t) = σ²/(4γ)·(e^{2γt/m} − 1)`, so that `K_t = e^{−2γt/m}·Θ(s(t))` with
/// `Θ` a squared Bessel process.
pub fn besq_time_change(t: f64, m: f64, gamma: f64, sigma: f64) -> Result<f64> {
    check_positive("m", m)?;
    check_positive("gamma", gamma)?;
    check_positive("sigma", sigma)?;
    Ok(sigma * sigma / (4.0 * gamma) * (2.0 * gamma * t / m).exp_m1())
}

/// Stream bit marking the bridge refinement of a strong-error member.
const BRIDGE_STREAM: u64 = 1 << 63;

/// Reference solution for strong-error measurements.
#[derive(Clone)]
pub enum Reference {
    /// Same scheme on the finest `dt` divided by `2^levels`.
    FinestGrid { levels: u32 },
    /// Terminal value as a function of the driving Brownian path.
    Exact(Arc<dyn Fn(&SamplePath) -> f64 + Send + Sync>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongOrder {
    pub dts: Vec<f64>,
    /// Mean `|X_T − X_T^ref|` per `dt`.
    pub errors: Vec<f64>,
    pub slope: f64,
    /// Paths dropped because some resolution left the domain.
    pub dropped: usize,
}

fn dyadic_factor(coarse: f64, fine: f64) -> Result<usize> {
    let r = coarse / fine;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * r || !(k as usize).is_power_of_two() {
        return Err(invalid(format!("time steps {coarse} and {fine} are not dyadically related")));
    }
    Ok(k as usize)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean terminal error `E|X_T^{dt} − X_T^{ref}|` for each `dt`, all
/// resolutions driven by one Brownian path per member (generated at the
/// coarsest step and refined by the Brownian bridge). Uses
/// `cfg.{n_paths, horizon, seed, boundary}`; `cfg.dt` is ignored.
pub fn strong_errors(model: &SdeModel, scheme: SolverScheme, dts: &[f64], reference: &Reference, cfg: &McConfig) -> Result<(Vec<f64>, usize)> {
    if dts.is_empty() {
        return Err(invalid("no time steps given"));
    }
    let coarse = dts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    if let Reference::FinestGrid { levels } = reference {
        finest /= f64::from(1u32 << levels);
    }
    let cfg0 = McConfig { dt: coarse, ..*cfg };
    let coarse_grid = cfg0.grid()?;
    let total = dyadic_factor(coarse, finest)?;
    let factors: Vec<usize> = dts.iter().map(|&dt| dyadic_factor(dt, finest)).collect::<Result<_>>()?;
    prepare(model, scheme)?;
    let per_path: Vec<Result<Option<Vec<f64>>>> = map_indexed(cfg.n_paths, Execution::default(), |i| {
        let seed = cfg.path_seed(i);
        let w0 = generate_brownian(&coarse_grid, seed);
        let fine = if total > 1 { refine_bridge(&w0, total, seed.with_stream(BRIDGE_STREAM | seed.stream))? } else { w0 };
        let terminal = |w: &SamplePath| -> Result<Option<f64>> {
            let r = simulate_with_noise(model, scheme, w, cfg.boundary)?;
            Ok((!r.terminated_early).then(|| r.path.last()))
        };
        let reference_value = match reference {
            Reference::FinestGrid { .. } => terminal(&fine)?,
            Reference::Exact(f) => Some(f(&fine)),
        };
        let Some(rv) = reference_value else { return Ok(None) };
        let mut errs = Vec::with_capacity(factors.len());
        for &k in &factors {
            let w = if k == 1 { fine.clone() } else { fine.coarsen(k)? };
            match terminal(&w)? {
                Some(v) => errs.push((v - rv).abs()),
                None => return Ok(None),
            }
        }
        Ok(Some(errs))
    });
    let mut sums = vec![Vec::new(); dts.len()];
    let mut dropped = 0;
    for r in per_path {
        match r? {
            Some(errs) => errs.into_iter().enumerate().for_each(|(k, e)| sums[k].push(e)),
            None => dropped += 1,
        }
    }
    let n_kept = cfg.n_paths - dropped;
    if n_kept == 0 {
        return Err(invalid("every path left the domain"));
    }
    Ok((sums.into_iter().map(|s| compensated(s) / n_kept as f64).collect(), dropped))
}

/// Least-squares slope of `ln(strong error)` against `ln(dt)`; `dts` must
/// hold at least three dyadically related steps.
pub fn strong_convergence_order(model: &SdeModel, scheme: SolverScheme, dts: &[f64], reference: &Reference, cfg: &McConfig) -> Result<StrongOrder> {
    if dts.len() < 3 {
        return Err(invalid(format!("strong order needs at least 3 time steps, got {}", dts.len())));
    }
    if dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("time steps must be strictly decreasing"));
    }
    let (errors, dropped) = strong_errors(model, scheme, dts, reference, cfg)?;
    Ok(StrongOrder { dts: dts.to_vec(), slope: loglog_slope(dts, &errors), errors, dropped })
}
