//! Riemann-sum stochastic integration under the left (Itô), midpoint
//! (Stratonovich) and right (Hänggi–Klimontovich) evaluation rules, the
//! correction terms linking them, realized variation and the ε-regularized
//! backward integral.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::paths::{refine_bridge, SamplePath, SeedSpec, TimeGrid, VectorPath};
use crate::sum::{compensated, CompensatedSum};

/// Where the integrand is read inside each step `[t_{j-1}, t_j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationRule {
    /// Left endpoint: the Itô sum.
    Left,
    /// Path value at the grid point nearest the step midpoint: the
    /// Stratonovich sum. Needs an evaluation grid finer than the partition.
    Midpoint,
    /// Right endpoint: the Hänggi–Klimontovich sum.
    Right,
}

impl EvaluationRule {
    pub const ALL: [EvaluationRule; 3] =
        [EvaluationRule::Left, EvaluationRule::Midpoint, EvaluationRule::Right];

    pub fn name(self) -> &'static str {
        match self {
            EvaluationRule::Left => "left",
            EvaluationRule::Midpoint => "midpoint",
            EvaluationRule::Right => "right",
        }
    }
}

fn locate(grid: &TimeGrid, t: f64) -> Option<usize> {
    let i = grid.nearest_index(t);
    let tol = 1e-12 * t.abs().max(1.0);
    ((grid.points()[i] - t).abs() <= tol).then_some(i)
}

/// For each step of `partition`, the index into `eval` where the integrand
/// is read.
fn rule_indices(eval: &TimeGrid, partition: &TimeGrid, rule: EvaluationRule) -> Result<Vec<usize>> {
    let shared = eval.same_as(partition);
    let pts = partition.points();
    let mut anchors = Vec::with_capacity(pts.len());
    if shared {
        anchors.extend(0..pts.len());
    } else {
        for &t in pts {
            anchors.push(locate(eval, t).ok_or_else(|| {
                Error::GridMismatch(format!("evaluation grid has no point at t = {t}"))
            })?);
        }
    }
    let mut out = Vec::with_capacity(pts.len().saturating_sub(1));
    for j in 1..pts.len() {
        let k = match rule {
            EvaluationRule::Left => anchors[j - 1],
            EvaluationRule::Right => anchors[j],
            EvaluationRule::Midpoint => {
                let k = eval.nearest_index(0.5 * (pts[j - 1] + pts[j]));
                if k <= anchors[j - 1] || k >= anchors[j] {
                    return Err(Error::GridMismatch(format!(
                        "midpoint rule needs an evaluation point inside [{}, {}]",
                        pts[j - 1],
                        pts[j]
                    )));
                }
                k
            }
        };
        out.push(k);
    }
    Ok(out)
}

/// `Σ_j Φ(X at the rule point of step j) · (Y_{t_j} − Y_{t_{j-1}})`.
///
/// `eval` must contain every grid point of `integrator`; for the Left and
/// Right rules the two usually share one grid.
pub fn stochastic_sum<F>(
    phi: F,
    eval: &SamplePath,
    integrator: &SamplePath,
    rule: EvaluationRule,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let idx = rule_indices(eval.grid(), integrator.grid(), rule)?;
    let ev = eval.values();
    Ok(compensated(
        idx.iter().zip(integrator.increments()).map(|(&k, dy)| phi(ev[k]) * dy),
    ))
}

/// `Σ (ΔX)²`.
pub fn realized_variation(x: &SamplePath) -> f64 {
    compensated(x.increments().map(|d| d * d))
}

/// `Σ ΔX·ΔY` over a shared grid.
pub fn realized_cross_variation(x: &SamplePath, y: &SamplePath) -> Result<f64> {
    if !x.grid().same_as(y.grid()) {
        return Err(Error::GridMismatch("cross-variation needs a shared grid".into()));
    }
    Ok(compensated(x.increments().zip(y.increments()).map(|(a, b)| a * b)))
}

fn trapezoid(times: &[f64], integrand: impl Fn(usize) -> f64) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut prev = integrand(0);
    for i in 1..times.len() {
        let cur = integrand(i);
        acc.add(0.5 * (prev + cur) * (times[i] - times[i - 1]));
        prev = cur;
    }
    acc.value()
}

/// Trapezoid value of `∫ Φ′(X_t) g(X_t, t)² dt`, the amount by which the
/// right-endpoint integral of `Φ(X)` exceeds the left-endpoint one when `X`
/// has diffusion coefficient `g`.
pub fn hk_correction<D, G>(dphi: D, x: &SamplePath, g: G) -> f64
where
    D: Fn(f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    let (ts, xs) = (x.times(), x.values());
    trapezoid(ts, |i| {
        let gi = g(xs[i], ts[i]);
        dphi(xs[i]) * gi * gi
    })
}

/// Sums over dyadic refinements of one fixed path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rule: EvaluationRule,
    pub rows: Vec<(usize, f64)>,
    pub extrapolated: f64,
}

impl ConvergenceTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n_steps,value")?;
        for (n, v) in &self.rows {
            writeln!(w, "{n},{v}")?;
        }
        writeln!(w, "# extrapolated,{}", self.extrapolated)
    }
}

/// `path` followed by `levels` successive factor-2 bridge refinements.
/// Refinement `k` (1-based) draws from stream `seed.stream + k - 1`.
pub fn dyadic_refinements(path: &SamplePath, levels: usize, seed: SeedSpec) -> Result<Vec<SamplePath>> {
    let mut out = Vec::with_capacity(levels + 1);
    out.push(path.clone());
    for k in 0..levels {
        let next = refine_bridge(&out[k], 2, seed.with_stream(seed.stream.wrapping_add(k as u64)))?;
        out.push(next);
    }
    Ok(out)
}

/// Convergence table of `∫ Φ(X) dX` under `rule` on a Brownian skeleton `x`
/// refined `levels` times by the Brownian bridge. The midpoint rule reads
/// the integrand from the next finer level, so it uses one extra refinement.
pub fn rule_convergence<F>(
    phi: F,
    x: &SamplePath,
    levels: usize,
    rule: EvaluationRule,
    seed: SeedSpec,
) -> Result<ConvergenceTable>
where
    F: Fn(f64) -> f64,
{
    let extra = usize::from(rule == EvaluationRule::Midpoint);
    let paths = dyadic_refinements(x, levels + extra, seed)?;
    convergence_from_levels(&phi, &paths, rule)
}

/// Convergence table over already nested paths (each a refinement of the
/// previous one), e.g. re-simulated diffusions driven by shared noise.
pub fn convergence_from_levels<F>(
    phi: F,
    levels: &[SamplePath],
    rule: EvaluationRule,
) -> Result<ConvergenceTable>
where
    F: Fn(f64) -> f64,
{
    let usable = match rule {
        EvaluationRule::Midpoint => levels.len().saturating_sub(1),
        _ => levels.len(),
    };
    if usable == 0 {
        return Err(invalid("no refinement levels to tabulate"));
    }
    let mut rows = Vec::with_capacity(usable);
    for (k, path) in levels.iter().take(usable).enumerate() {
        let eval = if rule == EvaluationRule::Midpoint { &levels[k + 1] } else { path };
        let v = stochastic_sum(&phi, eval, path, rule)?;
        let n = path.grid().n_steps();
        if !v.is_finite() {
            return Err(Error::Divergence { n_steps: n });
        }
        if let Some(&(prev, _)) = rows.last() {
            if n <= prev {
                return Err(invalid("refinement levels must have increasing step counts"));
            }
        }
        rows.push((n, v));
    }
    let extrapolated = rows.last().map(|r| r.1).unwrap_or(f64::NAN);
    Ok(ConvergenceTable { rule, rows, extrapolated })
}

/// Right-endpoint (Hänggi–Klimontovich) integral `∫ Φ(X) • dX` tabulated
/// over `refinement_levels` bridge refinements of the Brownian path `x`.
pub fn hk_integral<F>(phi: F, x: &SamplePath, refinement_levels: usize, seed: SeedSpec) -> Result<ConvergenceTable>
where
    F: Fn(f64) -> f64,
{
    rule_convergence(phi, x, refinement_levels, EvaluationRule::Right, seed)
}

fn check_matrix(m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::DimensionMismatch { expected: rows, got: m.nrows() });
    }
    if m.ncols() != cols {
        return Err(Error::DimensionMismatch { expected: cols, got: m.ncols() });
    }
    Ok(())
}

/// `Σ_j Ψ(X at rule point, t_j) · (X_{t_j} − X_{t_{j-1}})` for a matrix
/// valued `Ψ: ℝᵐ × ℝ → ℝ^{d×m}`; returns the `d`-vector.
pub fn multidim_hk_sum<P>(
    psi: P,
    eval: &VectorPath,
    integrator: &VectorPath,
    rule: EvaluationRule,
) -> Result<DVector<f64>>
where
    P: Fn(&[f64], f64) -> DMatrix<f64>,
{
    let m = integrator.dim();
    if eval.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: eval.dim() });
    }
    let idx = rule_indices(eval.grid(), integrator.grid(), rule)?;
    let ts = integrator.grid().points();
    let mut acc: Vec<CompensatedSum> = Vec::new();
    let mut d = None;
    for (j, &k) in idx.iter().enumerate() {
        let mat = psi(eval.point(k), ts[j + 1]);
        let rows = *d.get_or_insert(mat.nrows());
        check_matrix(&mat, rows, m)?;
        if acc.is_empty() {
            acc = vec![CompensatedSum::new(); rows];
        }
        let (a, b) = (integrator.point(j), integrator.point(j + 1));
        for (i, slot) in acc.iter_mut().enumerate() {
            let mut s = 0.0;
            for l in 0..m {
                s += mat[(i, l)] * (b[l] - a[l]);
            }
            slot.add(s);
        }
    }
    Ok(DVector::from_iterator(acc.len(), acc.iter().map(|c| c.value())))
}

/// Trapezoid value of `Σ_l Σ_k ∫ (∂_{x_k} Ψ)_{·l} b_{lk} dt`.
///
/// `dpsi(x, t, k)` returns `∂Ψ/∂x_k` (`d × m`); `b(x, t)` is the `m × m`
/// cross-variation rate matrix, `d⟨X⁽ˡ⁾, X⁽ᵏ⁾⟩ = b_{lk} dt`.
pub fn multidim_correction<D, B>(dpsi: D, b: B, x: &VectorPath) -> Result<DVector<f64>>
where
    D: Fn(&[f64], f64, usize) -> DMatrix<f64>,
    B: Fn(&[f64], f64) -> DMatrix<f64>,
{
    let m = x.dim();
    let ts = x.grid().points();
    let mut rows = None;
    let mut integrands: Vec<DVector<f64>> = Vec::with_capacity(ts.len());
    for (i, &t) in ts.iter().enumerate() {
        let p = x.point(i);
        let bm = b(p, t);
        check_matrix(&bm, m, m)?;
        let mut v: Option<DVector<f64>> = None;
        for k in 0..m {
            let dk = dpsi(p, t, k);
            let d = *rows.get_or_insert(dk.nrows());
            check_matrix(&dk, d, m)?;
            let acc = v.get_or_insert_with(|| DVector::zeros(d));
            for l in 0..m {
                *acc += dk.column(l) * bm[(l, k)];
            }
        }
        integrands.push(v.unwrap_or_else(|| DVector::zeros(0)));
    }
    let d = rows.unwrap_or(0);
    let out = (0..d).map(|r| trapezoid(ts, |i| integrands[i][r]));
    Ok(DVector::from_iterator(d, out))
}

/// Piecewise-constant process: `levels[i]` on `(breakpoints[i], breakpoints[i+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProcess {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl StepProcess {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(invalid("step process needs at least two breakpoints"));
        }
        if levels.len() + 1 != breakpoints.len() {
            return Err(Error::DimensionMismatch { expected: breakpoints.len() - 1, got: levels.len() });
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("step process breakpoints must be strictly increasing"));
        }
        if levels.iter().chain(&breakpoints).any(|v| !v.is_finite()) {
            return Err(invalid("step process contains non-finite values"));
        }
        Ok(Self { breakpoints, levels })
    }

    /// Reads a path as the step process taking the right-endpoint value on
    /// each step.
    pub fn from_path_right(path: &SamplePath) -> Self {
        Self { breakpoints: path.times().to_vec(), levels: path.values()[1..].to_vec() }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0] || t > bp[bp.len() - 1] {
            return 0.0;
        }
        let i = bp.partition_point(|&b| b < t);
        self.levels[i - 1]
    }

    /// Discrete right-endpoint sum `Σ_i Υ_{t_i} (W_{t_i} − W_{t_{i-1}})` over
    /// the breakpoints; `w` is read by linear interpolation.
    pub fn right_sum(&self, w: &SamplePath) -> f64 {
        compensated(self.breakpoints.windows(2).zip(&self.levels).map(|(b, z)| {
            z * (w.interpolate(b[1]) - w.interpolate(b[0]))
        }))
    }
}

/// Integrand for [`backward_regularized`].
#[derive(Debug, Clone)]
pub enum BackwardIntegrand {
    Step(StepProcess),
    /// Interpreted through [`StepProcess::from_path_right`].
    Path(SamplePath),
}

/// Antiderivative of the piecewise-linear interpolant of a path, extended by
/// constants outside the grid.
struct Antiderivative<'a> {
    path: &'a SamplePath,
    cumulative: Vec<f64>,
}

impl<'a> Antiderivative<'a> {
    fn new(path: &'a SamplePath) -> Self {
        let (ts, vs) = (path.times(), path.values());
        let mut cumulative = Vec::with_capacity(ts.len());
        let mut acc = CompensatedSum::new();
        cumulative.push(0.0);
        for i in 1..ts.len() {
            acc.add(0.5 * (vs[i - 1] + vs[i]) * (ts[i] - ts[i - 1]));
            cumulative.push(acc.value());
        }
        Self { path, cumulative }
    }

    fn at(&self, s: f64) -> f64 {
        let (ts, vs) = (self.path.times(), self.path.values());
        let n = ts.len();
        if s <= ts[0] {
            return vs[0] * (s - ts[0]);
        }
        if s >= ts[n - 1] {
            return self.cumulative[n - 1] + vs[n - 1] * (s - ts[n - 1]);
        }
        let k = ts.partition_point(|&p| p <= s) - 1;
        let h = s - ts[k];
        let slope = (vs[k + 1] - vs[k]) / (ts[k + 1] - ts[k]);
        self.cumulative[k] + h * (vs[k] + 0.5 * h * slope)
    }
}

/// `∫ Υ_s (W_s − W_{s−ε}) / ε ds` over the span of the integrand.
///
/// `W` is extended by `W_{t_0}` to the left of its first grid point and read
/// by linear interpolation. The time integral is evaluated exactly for that
/// interpolant, which is the trapezoid rule on the union of the path grid,
/// the breakpoints and the breakpoints shifted by `ε`. `ε` must not exceed a
/// tenth of the integration horizon.
pub fn backward_regularized(integrand: &BackwardIntegrand, w: &SamplePath, eps: f64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("regularization width must be positive, got {eps}")));
    }
    let owned;
    let step = match integrand {
        BackwardIntegrand::Step(s) => s,
        BackwardIntegrand::Path(p) => {
            owned = StepProcess::from_path_right(p);
            &owned
        }
    };
    let bp = step.breakpoints();
    let horizon = bp[bp.len() - 1] - bp[0];
    if eps > 0.1 * horizon * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "regularization width {eps} exceeds 10% of the horizon {horizon}"
        )));
    }
    if bp[0] < w.grid().start() - 1e-12 || bp[bp.len() - 1] > w.grid().end() + 1e-12 {
        return Err(Error::GridMismatch("integrator path does not cover the integrand span".into()));
    }
    let a = Antiderivative::new(w);
    // mean of W over [s − ε, s]
    let window = |s: f64| (a.at(s) - a.at(s - eps)) / eps;
    Ok(compensated(
        bp.windows(2)
            .zip(step.levels())
            .map(|(b, z)| z * (window(b[1]) - window(b[0]))),
    ))
}
