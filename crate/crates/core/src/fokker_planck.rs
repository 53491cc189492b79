//! Stationary densities, zero-flux Fokker–Planck evolution, probability
//! flux, relative entropy and the fixed-point/mode comparison, all for
//! time-homogeneous coefficients read in the HK (right-endpoint) sense.

use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::sde::{finite_diff_gprime, Domain};
use crate::sum::compensated;

/// Smallest admissible diffusion coefficient on the interval.
pub const G_FLOOR: f64 = 1e-12;

/// Cell-averaged density on `[a, b]` with equal cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDensity {
    a: f64,
    b: f64,
    values: Vec<f64>,
    /// Set when negative cells were clipped during normalization.
    pub clipped: bool,
}

impl GridDensity {
    /// Takes cell averages as given (no normalization).
    pub fn new(a: f64, b: f64, values: Vec<f64>) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(invalid(format!("density interval [{a}, {b}] is not a finite non-empty interval")));
        }
        if values.is_empty() {
            return Err(invalid("density needs at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("density has non-finite cells"));
        }
        Ok(Self { a, b, values, clipped: false })
    }

    /// Cell averages of `f` (5-point Gauss–Legendre per cell), normalized.
    pub fn from_fn(a: f64, b: f64, n_cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut d = Self::new(a, b, vec![0.0; n_cells.max(1)])?;
        if n_cells == 0 {
            return Err(invalid("density needs at least one cell"));
        }
        let dx = d.dx();
        for (i, v) in d.values.iter_mut().enumerate() {
            let lo = a + dx * i as f64;
            *v = gauss_legendre(lo, lo + dx, &f) / dx;
        }
        d.normalize()?;
        Ok(d)
    }

    /// All mass in the cell containing `x0`.
    pub fn point_mass(a: f64, b: f64, n_cells: usize, x0: f64) -> Result<Self> {
        if !(x0 >= a && x0 <= b) {
            return Err(Error::OutsideDomain { x: x0, lo: a, hi: b });
        }
        let mut d = Self::new(a, b, vec![0.0; n_cells.max(1)])?;
        let i = (((x0 - a) / d.dx()) as usize).min(d.n_cells() - 1);
        d.values[i] = 1.0 / d.dx();
        Ok(d)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        (self.b - self.a) / self.values.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells()).map(|i| self.center(i)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        compensated(self.values.iter().copied()) * self.dx()
    }

    /// Clips cells below `−1e-12` (setting [`Self::clipped`]) and tiny
    /// negatives to zero, then rescales to unit mass.
    pub fn normalize(&mut self) -> Result<()> {
        for v in &mut self.values {
            if *v < 0.0 {
                if *v < -1e-12 {
                    self.clipped = true;
                }
                *v = 0.0;
            }
        }
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(invalid("density has no positive mass"));
        }
        for v in &mut self.values {
            *v /= m;
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.a == other.a && self.b == other.b && self.n_cells() == other.n_cells()
    }

    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.check_grid(other)?;
        Ok(compensated(self.values.iter().zip(&other.values).map(|(p, q)| (p - q).abs())) * self.dx())
    }

    /// Index of the largest cell.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    fn check_grid(&self, other: &GridDensity) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("densities live on different grids".into()))
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x_center,density")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.center(i), v)?;
        }
        Ok(())
    }
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn gl_points(lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> {
    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    GL_NODES.iter().zip(GL_WEIGHTS.iter()).map(move |(n, w)| (c + r * n, r * w))
}

fn gauss_legendre(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    gl_points(lo, hi).map(|(x, w)| w * f(x)).sum()
}

fn check_g(g: f64, x: f64) -> Result<()> {
    if !g.is_finite() || g.abs() < G_FLOOR {
        Err(Error::DegenerateDiffusion { x, value: g })
    } else {
        Ok(())
    }
}

/// Normalized `p_s ∝ e^{𝒱}`, `𝒱(x) = 2∫ₐˣ f/g² du`, as cell averages.
///
/// `𝒱` is accumulated cell by cell with 5-point Gauss–Legendre quadrature
/// and the cell averages of `e^{𝒱}` use the same rule, so smooth inputs are
/// resolved far below the cell-width scale. `𝒱` is shifted by its maximum
/// before exponentiation.
pub fn stationary_density<F, G>(f: F, g: G, a: f64, b: f64, n_cells: usize) -> Result<GridDensity>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if n_cells == 0 {
        return Err(invalid("density needs at least one cell"));
    }
    let mut out = GridDensity::new(a, b, vec![0.0; n_cells])?;
    let dx = out.dx();
    let integrand = |x: f64| -> Result<f64> {
        let gx = g(x);
        check_g(gx, x)?;
        let v = 2.0 * f(x) / (gx * gx);
        if v.is_finite() { Ok(v) } else { Err(Error::NonFinite { what: "drift", x, t: 0.0 }) }
    };
    let partial = |lo: f64, hi: f64| -> Result<f64> {
        let mut s = 0.0;
        for (x, w) in gl_points(lo, hi) {
            s += w * integrand(x)?;
        }
        Ok(s)
    };
    // 𝒱 at the quadrature nodes of every cell.
    let mut potential = Vec::with_capacity(n_cells * 5);
    let mut edge = 0.0;
    for i in 0..n_cells {
        let lo = a + dx * i as f64;
        check_g(g(lo), lo)?;
        for (x, _) in gl_points(lo, lo + dx) {
            potential.push(edge + partial(lo, x)?);
        }
        edge += partial(lo, lo + dx)?;
    }
    check_g(g(b), b)?;
    let shift = potential.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (i, v) in out.values.iter_mut().enumerate() {
        *v = GL_WEIGHTS.iter().zip(&potential[5 * i..5 * i + 5]).map(|(w, p)| 0.5 * w * (p - shift).exp()).sum();
    }
    out.normalize()?;
    Ok(out)
}

pub type Coef1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Initial {
    Density(GridDensity),
    /// Realized as a single-cell density.
    PointMass(f64),
}

/// Zero-flux FPE on `[a, b]` for time-homogeneous `f`, `g`.
#[derive(Clone)]
pub struct FpeProblem {
    f: Coef1,
    g: Coef1,
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
    pub initial: Initial,
    /// Smallest `|g|` seen on the sampling grid.
    pub g_min: f64,
}

impl FpeProblem {
    pub fn new<F, G>(f: F, g: G, a: f64, b: f64, n_cells: usize, initial: Initial) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if n_cells < 2 {
            return Err(invalid("FPE needs at least two cells"));
        }
        if let Initial::Density(d) = &initial {
            if d.interval() != (a, b) || d.n_cells() != n_cells {
                return Err(Error::GridMismatch("initial density grid differs from the problem grid".into()));
            }
        }
        let dx = (b - a) / n_cells as f64;
        let mut g_min = f64::INFINITY;
        for k in 0..=4 * n_cells {
            let x = a + 0.25 * dx * k as f64;
            let gx = g(x);
            check_g(gx, x)?;
            g_min = g_min.min(gx.abs());
        }
        Ok(Self { f: Arc::new(f), g: Arc::new(g), a, b, n_cells, initial, g_min })
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn dx(&self) -> f64 {
        (self.b - self.a) / self.n_cells as f64
    }

    pub fn initial_density(&self) -> Result<GridDensity> {
        match &self.initial {
            Initial::Density(d) => Ok(d.clone()),
            Initial::PointMass(x0) => GridDensity::point_mass(self.a, self.b, self.n_cells, *x0),
        }
    }

    pub fn stationary(&self) -> Result<GridDensity> {
        stationary_density(&*self.f, &*self.g, self.a, self.b, self.n_cells)
    }
}

/// Output of [`evolve_fpe`].
#[derive(Debug, Clone)]
pub struct FpeRun {
    pub density: GridDensity,
    pub stationary: GridDensity,
    pub snapshots: Vec<(f64, GridDensity)>,
    /// `(t, H(p_t | p_s))` at t = 0, every snapshot and the final time.
    pub entropy: Vec<(f64, f64)>,
    pub dt: f64,
    pub n_steps: usize,
}

impl FpeRun {
    pub fn write_entropy_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,H")?;
        for (t, h) in &self.entropy {
            writeln!(w, "{t},{h}")?;
        }
        Ok(())
    }
}

struct Operator {
    /// Interface coefficients `½g²_{i+½}·√(w_i w_{i+1}) / Δx²` for interior faces.
    face: Vec<f64>,
    inv_w: Vec<f64>,
    admissible_dt: f64,
}

fn build_operator(problem: &FpeProblem, w: &GridDensity) -> Result<Operator> {
    let n = problem.n_cells;
    let dx = problem.dx();
    let wv = w.values();
    if wv.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("stationary density underflows to zero; shorten the interval or reduce the drift"));
    }
    let mut face = Vec::with_capacity(n - 1);
    let mut g2max: f64 = 0.0;
    for i in 0..n - 1 {
        let x = problem.a + dx * (i + 1) as f64;
        let g = problem.diffusion(x);
        g2max = g2max.max(g * g);
        face.push(0.5 * g * g * (wv[i] * wv[i + 1]).sqrt() / (dx * dx));
    }
    for i in 0..=n {
        let g = problem.diffusion(problem.a + dx * i as f64);
        g2max = g2max.max(g * g);
    }
    let inv_w: Vec<f64> = wv.iter().map(|v| 1.0 / v).collect();
    // Keep every diagonal entry of the one-step map non-negative.
    let mut exit_rate: f64 = 0.0;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += face[i - 1] * inv_w[i];
        }
        if i < n - 1 {
            r += face[i] * inv_w[i];
        }
        exit_rate = exit_rate.max(r);
    }
    let cfl = 0.4 * dx * dx / g2max;
    let admissible_dt = cfl.min(1.0 / exit_rate);
    Ok(Operator { face, inv_w, admissible_dt })
}

/// Largest time step [`evolve_fpe`] accepts for this problem.
pub fn admissible_dt(problem: &FpeProblem) -> Result<f64> {
    Ok(build_operator(problem, &problem.stationary()?)?.admissible_dt)
}

/// Conservative explicit evolution to time `t_end` with zero flux through
/// both boundary faces.
///
/// The interface flux is `J_{i+½} = ½g²_{i+½}/Δx · √(w_i w_{i+1}) ·
/// (p_i/w_i − p_{i+1}/w_{i+1})` with `w` the discrete stationary density.
/// This is a consistent discretization of `(f + g·g′)p − ½(g²p)′ =
/// fp − ½g²p′`, keeps `w` exactly stationary and makes the relative entropy
/// to `w` non-increasing for every admissible step. `dt` above the
/// admissible value (`0.4Δx²/max g²`, tightened if needed for positivity)
/// is rejected. A snapshot is stored every `snapshot_every` steps (0: none).
pub fn evolve_fpe(problem: &FpeProblem, dt: f64, t_end: f64, snapshot_every: usize) -> Result<FpeRun> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(invalid(format!("need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}")));
    }
    let stationary = problem.stationary()?;
    let op = build_operator(problem, &stationary)?;
    if dt > op.admissible_dt {
        return Err(Error::Unstable { dt, admissible: op.admissible_dt });
    }
    let n_steps = (t_end / dt).ceil() as usize;
    let h = if n_steps == 0 { 0.0 } else { t_end / n_steps as f64 };
    let mut p = problem.initial_density()?;
    p.normalize()?;
    let n = p.n_cells();
    let mut entropy = vec![(0.0, relative_entropy(&p, &stationary)?)];
    let mut snapshots = Vec::new();
    let mut flux = vec![0.0; n - 1];
    for step in 1..=n_steps {
        let v = &mut p.values;
        for i in 0..n - 1 {
            flux[i] = op.face[i] * (v[i] * op.inv_w[i] - v[i + 1] * op.inv_w[i + 1]);
        }
        for i in 0..n {
            let inflow = if i > 0 { flux[i - 1] } else { 0.0 };
            let outflow = if i < n - 1 { flux[i] } else { 0.0 };
            v[i] += h * (inflow - outflow);
        }
        if snapshot_every > 0 && step % snapshot_every == 0 && step != n_steps {
            let t = h * step as f64;
            entropy.push((t, relative_entropy(&p, &stationary)?));
            snapshots.push((t, p.clone()));
        }
    }
    if p.values.iter().any(|&v| v < -1e-12) {
        p.clipped = true;
    }
    if n_steps > 0 {
        entropy.push((t_end, relative_entropy(&p, &stationary)?));
    }
    Ok(FpeRun { density: p, stationary, snapshots, entropy, dt: h, n_steps })
}

/// `J = (f + g·g′)p − ½ d/dx(g²p)` at the cell centers.
///
/// Cell averages are first turned into point values (`p̄ᵢ − Δx²p̄″ᵢ/24`),
/// then differentiated with five-point fourth-order stencils, centered
/// inside and one-sided in the two cells nearest each end. Grids with fewer
/// than five cells fall back to second-order differences. `g′` is taken by
/// finite differences on `[a, b]`.
pub fn probability_flux<F, G>(p: &GridDensity, f: F, g: G) -> Vec<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = p.n_cells();
    let dx = p.dx();
    let (a, b) = p.interval();
    let domain = Domain { lo: a, hi: b };
    let xs = p.centers();
    let pv = point_values(p.values());
    let q: Vec<f64> = xs.iter().zip(&pv).map(|(&x, &pi)| g(x).powi(2) * pi).collect();
    let gfun = |x: f64, _t: f64| g(x);
    (0..n)
        .map(|i| {
            let x = xs[i];
            let gp = finite_diff_gprime(&gfun, x, 0.0, None, &domain).value;
            (f(x) + g(x) * gp) * pv[i] - 0.5 * derivative_at(&q, i, dx)
        })
        .collect()
}

fn point_values(avg: &[f64]) -> Vec<f64> {
    let n = avg.len();
    if n < 3 {
        return avg.to_vec();
    }
    (0..n)
        .map(|i| {
            let c = i.clamp(1, n - 2);
            avg[i] - (avg[c + 1] - 2.0 * avg[c] + avg[c - 1]) / 24.0
        })
        .collect()
}

fn derivative_at(q: &[f64], i: usize, h: f64) -> f64 {
    let n = q.len();
    match n {
        1 => 0.0,
        2 => (q[1] - q[0]) / h,
        3 | 4 => match i {
            0 => (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * h),
            _ if i == n - 1 => (3.0 * q[n - 1] - 4.0 * q[n - 2] + q[n - 3]) / (2.0 * h),
            _ => (q[i + 1] - q[i - 1]) / (2.0 * h),
        },
        _ => {
            let s = |k: usize| q[k];
            let r = |k: usize| q[n - 1 - k];
            match i {
                0 => (-25.0 * s(0) + 48.0 * s(1) - 36.0 * s(2) + 16.0 * s(3) - 3.0 * s(4)) / (12.0 * h),
                1 => (-3.0 * s(0) - 10.0 * s(1) + 18.0 * s(2) - 6.0 * s(3) + s(4)) / (12.0 * h),
                _ if i == n - 1 => -(-25.0 * r(0) + 48.0 * r(1) - 36.0 * r(2) + 16.0 * r(3) - 3.0 * r(4)) / (12.0 * h),
                _ if i == n - 2 => -(-3.0 * r(0) - 10.0 * r(1) + 18.0 * r(2) - 6.0 * r(3) + r(4)) / (12.0 * h),
                _ => (q[i - 2] - 8.0 * q[i - 1] + 8.0 * q[i + 1] - q[i + 2]) / (12.0 * h),
            }
        }
    }
}

/// `Σ pᵢ ln(pᵢ/qᵢ) Δx` with `0·ln 0 = 0`; `+∞` when some `qᵢ = 0 < pᵢ`.
pub fn relative_entropy(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_grid(q)?;
    let mut terms = Vec::with_capacity(p.n_cells());
    for (&pi, &qi) in p.values().iter().zip(q.values()) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        terms.push(pi * (pi / qi).ln());
    }
    Ok(compensated(terms) * p.dx())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub x: f64,
    pub stability: Stability,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub kind: CriticalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeMatch {
    pub fixed_point: f64,
    pub critical_point: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct FixedPointReport {
    pub fixed_points: Vec<FixedPoint>,
    pub critical_points: Vec<CriticalPoint>,
    pub matches: Vec<ModeMatch>,
    /// Cell width used for matching; zero before [`compare_modes`].
    pub tolerance: f64,
}

impl FixedPointReport {
    pub fn stable(&self) -> Vec<f64> {
        self.with_stability(Stability::Stable)
    }

    pub fn unstable(&self) -> Vec<f64> {
        self.with_stability(Stability::Unstable)
    }

    fn with_stability(&self, s: Stability) -> Vec<f64> {
        self.fixed_points.iter().filter(|p| p.stability == s).map(|p| p.x).collect()
    }

    pub fn maxima(&self) -> Vec<f64> {
        self.critical_points.iter().filter(|c| c.kind == CriticalKind::Max).map(|c| c.x).collect()
    }

    pub fn minima(&self) -> Vec<f64> {
        self.critical_points.iter().filter(|c| c.kind == CriticalKind::Min).map(|c| c.x).collect()
    }

    /// Every non-degenerate fixed point and every density critical point
    /// takes part in a match.
    pub fn all_matched(&self) -> bool {
        let fixed = self.fixed_points.iter().filter(|p| p.stability != Stability::Degenerate).count();
        self.matches.len() == fixed && self.matches.len() == self.critical_points.len()
    }
}

/// Degeneracy threshold on `|f′(x*)|`.
pub const DEGENERATE_SLOPE: f64 = 1e-8;

/// Roots of `f` on `[a, b]` from a sign-change scan over `n_scan` points
/// refined by bisection to `1e-10`, classified by the sign of `f′`.
pub fn analyze_fixed_points<F, D>(f: F, fprime: D, a: f64, b: f64, n_scan: usize) -> Result<FixedPointReport>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(a < b) || n_scan < 2 {
        return Err(invalid("fixed-point scan needs a < b and at least two scan points"));
    }
    let h = (b - a) / (n_scan - 1) as f64;
    let xs: Vec<f64> = (0..n_scan).map(|k| if k == n_scan - 1 { b } else { a + h * k as f64 }).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if let Some(k) = fs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "drift", x: xs[k], t: 0.0 });
    }
    let mut roots = Vec::new();
    for k in 0..n_scan {
        if fs[k] == 0.0 {
            roots.push(xs[k]);
        } else if k + 1 < n_scan && fs[k + 1] != 0.0 && fs[k].signum() != fs[k + 1].signum() {
            let (mut lo, mut hi, mut flo) = (xs[k], xs[k + 1], fs[k]);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    let fixed_points = roots
        .into_iter()
        .map(|x| {
            let slope = fprime(x);
            let stability = if !(slope.abs() >= DEGENERATE_SLOPE) {
                Stability::Degenerate
            } else if slope < 0.0 {
                Stability::Stable
            } else {
                Stability::Unstable
            };
            FixedPoint { x, stability, slope }
        })
        .collect();
    Ok(FixedPointReport { fixed_points, ..Default::default() })
}

/// Interior critical points of a density from sign changes of its discrete
/// derivative; a maximum or minimum is placed at the cell center where the
/// slope changes sign.
pub fn density_critical_points(p: &GridDensity) -> Vec<CriticalPoint> {
    let v = p.values();
    let mut out = Vec::new();
    let mut last: Option<(f64, usize)> = None;
    for i in 0..v.len().saturating_sub(1) {
        let d = v[i + 1] - v[i];
        if d == 0.0 {
            continue;
        }
        if let Some((s, at)) = last {
            if s != d.signum() {
                let kind = if s > 0.0 { CriticalKind::Max } else { CriticalKind::Min };
                // The extremum sits between the two non-flat slopes.
                let centre = 0.5 * (p.center(at + 1) + p.center(i));
                out.push(CriticalPoint { x: centre, kind });
            }
        }
        last = Some((d.signum(), i));
    }
    out
}

/// Adds the density critical points of `p_s` to `report` and pairs stable
/// fixed points with maxima and unstable ones with minima within one cell
/// width. Degenerate fixed points are not matched.
pub fn compare_modes(report: &FixedPointReport, p_s: &GridDensity) -> FixedPointReport {
    let tol = p_s.dx() * (1.0 + 1e-9);
    let critical_points = density_critical_points(p_s);
    let mut used = vec![false; critical_points.len()];
    let mut matches = Vec::new();
    for fp in &report.fixed_points {
        let want = match fp.stability {
            Stability::Stable => CriticalKind::Max,
            Stability::Unstable => CriticalKind::Min,
            Stability::Degenerate => continue,
        };
        let best = critical_points
            .iter()
            .enumerate()
            .filter(|(k, c)| !used[*k] && c.kind == want)
            .map(|(k, c)| (k, (c.x - fp.x).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, dist)) = best {
            if dist <= tol {
                used[k] = true;
                matches.push(ModeMatch { fixed_point: fp.x, critical_point: critical_points[k].x, distance: dist });
            }
        }
    }
    FixedPointReport { fixed_points: report.fixed_points.clone(), critical_points, matches, tolerance: p_s.dx() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stationary() {
        let p = stationary_density(|_| 0.0, |_| 1.0, 0.0, 1.0, 16).unwrap();
        assert!(p.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn degenerate_diffusion_rejected_with_location() {
        let err = stationary_density(|_| 0.0, |x: f64| x, -1.0, 1.0, 16).unwrap_err();
        match err {
            Error::DegenerateDiffusion { x, .. } => assert!(x.abs() < 1e-9),
            e => panic!("unexpected error {e:?}"),
        }
        assert!(matches!(stationary_density(|_| 0.0, |_| 0.0, 0.0, 1.0, 4), Err(Error::DegenerateDiffusion { .. })));
    }

    #[test]
    fn double_well_modes() {
        let p = stationary_density(|x| x - x * x * x, |_| 1.0, -2.0, 2.0, 256).unwrap();
        let crit = density_critical_points(&p);
        let maxima: Vec<f64> = crit.iter().filter(|c| c.kind == CriticalKind::Max).map(|c| c.x).collect();
        let minima: Vec<f64> = crit.iter().filter(|c| c.kind == CriticalKind::Min).map(|c| c.x).collect();
        assert_eq!(maxima.len(), 2);
        assert!((maxima[0] + 1.0).abs() <= p.dx() && (maxima[1] - 1.0).abs() <= p.dx());
        assert_eq!(minima.len(), 1);
        assert!(minima[0].abs() <= p.dx());
    }

    #[test]
    fn evolve_preserves_uniform() {
        let init = GridDensity::from_fn(0.0, 1.0, 32, |_| 1.0).unwrap();
        let prob = FpeProblem::new(|_| 0.0, |_| 1.0, 0.0, 1.0, 32, Initial::Density(init)).unwrap();
        let run = evolve_fpe(&prob, 1e-4, 0.5, 0).unwrap();
        assert!(run.density.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn cfl_violation_reports_admissible_step() {
        let prob = FpeProblem::new(|x| -x, |_| 2f64.sqrt(), -3.0, 3.0, 64, Initial::PointMass(0.5)).unwrap();
        let adm = admissible_dt(&prob).unwrap();
        match evolve_fpe(&prob, 2.0 * adm, 1.0, 0) {
            Err(Error::Unstable { admissible, .. }) => assert_eq!(admissible, adm),
            other => panic!("expected instability, got {other:?}"),
        }
        assert!(evolve_fpe(&prob, adm, 0.1, 0).is_ok());
    }

    #[test]
    fn flux_cases() {
        let p = GridDensity::from_fn(0.0, 1.0, 20, |_| 1.0).unwrap();
        assert!(probability_flux(&p, |_| 0.0, |_| 1.0).iter().all(|j| j.abs() < 1e-13));
        let j = probability_flux(&p, |_| 0.3, |_| 1.0);
        assert!(j.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn entropy_basics() {
        let p = GridDensity::from_fn(0.0, 1.0, 10, |x| 1.0 + x).unwrap();
        let q = GridDensity::from_fn(0.0, 1.0, 10, |_| 1.0).unwrap();
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        assert!(relative_entropy(&p, &q).unwrap() > 0.0);
        let mut z = q.values().to_vec();
        z[3] = 0.0;
        let z = GridDensity::new(0.0, 1.0, z).unwrap();
        assert_eq!(relative_entropy(&p, &z).unwrap(), f64::INFINITY);
        assert!(relative_entropy(&z, &q).unwrap().is_finite());
    }

    #[test]
    fn fixed_points_of_cubic() {
        let r = analyze_fixed_points(|x| x - x * x * x, |x| 1.0 - 3.0 * x * x, -2.0, 2.0, 101).unwrap();
        let xs: Vec<(f64, Stability)> = r.fixed_points.iter().map(|p| (p.x, p.stability)).collect();
        assert_eq!(xs.len(), 3);
        assert!((xs[0].0 + 1.0).abs() < 1e-9 && xs[0].1 == Stability::Stable);
        assert!(xs[1].0.abs() < 1e-9 && xs[1].1 == Stability::Unstable);
        assert!((xs[2].0 - 1.0).abs() < 1e-9 && xs[2].1 == Stability::Stable);
        let p = stationary_density(|x| x - x * x * x, |_| 1.0, -2.0, 2.0, 256).unwrap();
        assert!(compare_modes(&r, &p).all_matched());
    }

    #[test]
    fn degenerate_fixed_point() {
        let r = analyze_fixed_points(|x| -x * x * x, |x| -3.0 * x * x, -1.0, 1.0, 100).unwrap();
        assert_eq!(r.fixed_points.len(), 1);
        assert_eq!(r.fixed_points[0].stability, Stability::Degenerate);
    }

    #[test]
    fn point_mass_cell() {
        let d = GridDensity::point_mass(0.0, 1.0, 10, 0.55).unwrap();
        assert_eq!(d.argmax(), 5);
        assert!((d.mass() - 1.0).abs() < 1e-15);
        assert!(GridDensity::point_mass(0.0, 1.0, 10, 2.0).is_err());
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x_center,density\n0.05,0\n"));
    }
}
