//! Time grids, sample paths and seedable Brownian path generation.

use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Strictly increasing, non-negative time points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Arc<[f64]>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("time grid needs at least one point"));
        }
        if !points.iter().all(|t| t.is_finite()) {
            return Err(invalid("time grid contains non-finite points"));
        }
        if points[0] < 0.0 {
            return Err(invalid(format!("time grid starts at negative time {}", points[0])));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "time grid is not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { points: points.into() })
    }

    /// `n` equal steps on `[t0, t1]`.
    pub fn uniform(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("uniform grid needs at least one step"));
        }
        if !(t1 > t0) {
            return Err(invalid(format!("empty interval [{t0}, {t1}]")));
        }
        let h = (t1 - t0) / n as f64;
        let mut pts: Vec<f64> = (0..=n).map(|i| t0 + h * i as f64).collect();
        pts[n] = t1;
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Largest consecutive spacing (zero for a single-point grid).
    pub fn diameter(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || self.points[..] == other.points[..]
    }

    /// Every `factor`-th point; the grid must have a multiple of `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps().is_multiple_of(factor) {
            return Err(invalid(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.n_steps()
            )));
        }
        Self::new(self.points.iter().step_by(factor).copied().collect())
    }

    /// Index of the grid point closest to `t` (ties go to the earlier point).
    pub fn nearest_index(&self, t: f64) -> usize {
        let pts = &self.points;
        let i = pts.partition_point(|&p| p < t);
        if i == 0 {
            0
        } else if i == pts.len() {
            pts.len() - 1
        } else if (t - pts[i - 1]) <= (pts[i] - t) {
            i - 1
        } else {
            i
        }
    }
}

/// Discrete skeleton of a scalar process.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("path value at t = {} is not finite", grid.points()[i])));
        }
        Ok(Self { grid, values })
    }

    /// Path from a closure evaluated at the grid points.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub(crate) fn from_parts_unchecked(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(Self { grid, values })
    }

    /// Value at time `t` by linear interpolation; constant outside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let pts = self.grid.points();
        if t <= pts[0] {
            return self.values[0];
        }
        let n = pts.len();
        if t >= pts[n - 1] {
            return self.values[n - 1];
        }
        let i = pts.partition_point(|&p| p <= t);
        let (t0, t1) = (pts[i - 1], pts[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times().iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Discrete skeleton of an `m`-dimensional process.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPath {
    grid: TimeGrid,
    dim: usize,
    /// Row-major: `values[i * dim + k]` is component `k` at grid point `i`.
    values: Vec<f64>,
}

impl VectorPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("vector path needs at least one component"));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch { expected: grid.len() * dim, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("vector path contains non-finite values"));
        }
        Ok(Self { grid, dim, values })
    }

    /// Stacks scalar paths sharing one grid as components.
    pub fn from_components(components: &[SamplePath]) -> Result<Self> {
        let first = components.first().ok_or_else(|| invalid("no components given"))?;
        let grid = first.grid().clone();
        for c in components {
            if !c.grid().same_as(&grid) {
                return Err(Error::GridMismatch("components live on different grids".into()));
            }
        }
        let dim = components.len();
        let mut values = Vec::with_capacity(grid.len() * dim);
        for i in 0..grid.len() {
            values.extend(components.iter().map(|c| c.values()[i]));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component(&self, k: usize) -> SamplePath {
        let values = (0..self.len()).map(|i| self.values[i * self.dim + k]).collect();
        SamplePath { grid: self.grid.clone(), values }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for k in 1..=self.dim {
            write!(w, ",x{k}")?;
        }
        writeln!(w)?;
        for (i, t) in self.grid.points().iter().enumerate() {
            write!(w, "{t}")?;
            for v in self.point(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Identifies one reproducible random stream.
///
/// The generator is ChaCha8 keyed by `master` (expanded through
/// `SeedableRng::seed_from_u64`) with its 64-bit stream id set to `stream`.
/// Streams are independent and need no coordination, so ensembles produce
/// the same draws however their members are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub const fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

#[inline]
pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Brownian motion started at zero, sampled on `grid`.
pub fn generate_brownian(grid: &TimeGrid, seed: SeedSpec) -> SamplePath {
    let mut rng = seed.rng();
    let pts = grid.points();
    let mut values = Vec::with_capacity(pts.len());
    let mut w = 0.0;
    values.push(w);
    for win in pts.windows(2) {
        w += (win[1] - win[0]).sqrt() * std_normal(&mut rng);
        values.push(w);
    }
    SamplePath::from_parts_unchecked(grid.clone(), values)
}

/// `m` independent Brownian components; component `k` uses stream
/// `seed.stream * m + k`.
pub fn generate_brownian_vector(grid: &TimeGrid, m: usize, seed: SeedSpec) -> Result<VectorPath> {
    if m < 1 {
        return Err(invalid("vector Brownian motion needs m >= 1"));
    }
    let comps: Vec<SamplePath> = (0..m)
        .map(|k| generate_brownian(grid, seed.with_stream(seed.stream * m as u64 + k as u64)))
        .collect();
    VectorPath::from_components(&comps)
}

/// Splits every step into `factor` equal substeps and fills the new points
/// from the Brownian bridge between the retained endpoints.
pub fn refine_bridge(path: &SamplePath, factor: usize, seed: SeedSpec) -> Result<SamplePath> {
    if factor < 2 {
        return Err(invalid(format!("refinement factor must be >= 2, got {factor}")));
    }
    let mut rng = seed.rng();
    let pts = path.times();
    let vals = path.values();
    let n_out = (pts.len() - 1) * factor + 1;
    let mut times = Vec::with_capacity(n_out);
    let mut values = Vec::with_capacity(n_out);
    times.push(pts[0]);
    values.push(vals[0]);
    for j in 1..pts.len() {
        let (t0, t1) = (pts[j - 1], pts[j]);
        let w1 = vals[j];
        let h = (t1 - t0) / factor as f64;
        let (mut tl, mut wl) = (t0, vals[j - 1]);
        for k in 1..factor {
            let s = t0 + h * k as f64;
            let (mean, var) = bridge_moments(tl, wl, t1, w1, s);
            let w = mean + var.sqrt() * std_normal(&mut rng);
            times.push(s);
            values.push(w);
            tl = s;
            wl = w;
        }
        times.push(t1);
        values.push(w1);
    }
    Ok(SamplePath::from_parts_unchecked(TimeGrid::new(times)?, values))
}

/// Conditional mean and variance of `W_s` given `W_{t0} = w0`, `W_{t1} = w1`.
pub fn bridge_moments(t0: f64, w0: f64, t1: f64, w1: f64, s: f64) -> (f64, f64) {
    let span = t1 - t0;
    let mean = w0 + (s - t0) / span * (w1 - w0);
    let var = (s - t0) * (t1 - s) / span;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_monotone_grid() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.7, 0.5]).is_err());
        assert!(TimeGrid::new(vec![-0.1, 0.5]).is_err());
    }

    #[test]
    fn uniform_grid_geometry() {
        let g = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert!((g.diameter() - 0.25).abs() < 1e-15);
        assert_eq!(g.nearest_index(0.3), 1);
        assert_eq!(g.nearest_index(0.375), 1);
        assert_eq!(g.nearest_index(2.0), 4);
    }

    #[test]
    fn brownian_starts_at_zero_and_is_deterministic() {
        let g = TimeGrid::uniform(0.0, 1.0, 100).unwrap();
        let a = generate_brownian(&g, SeedSpec::new(3, 7));
        let b = generate_brownian(&g, SeedSpec::new(3, 7));
        let c = generate_brownian(&g, SeedSpec::new(3, 8));
        assert_eq!(a.first(), 0.0);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn bridge_midpoint_mean_is_linear_interpolation() {
        let (mean, var) = bridge_moments(0.0, 0.0, 1.0, 2.0, 0.5);
        assert_eq!(mean, 1.0);
        assert_eq!(var, 0.25);
    }

    #[test]
    fn refinement_pins_original_values() {
        let g = TimeGrid::uniform(0.0, 1.0, 16).unwrap();
        let w = generate_brownian(&g, SeedSpec::new(1, 0));
        let r = refine_bridge(&w, 4, SeedSpec::new(1, 1)).unwrap();
        assert_eq!(r.len(), 65);
        let back = r.coarsen(4).unwrap();
        assert_eq!(back.values(), w.values());
        assert!(back.grid().same_as(w.grid()));
        assert!(refine_bridge(&w, 1, SeedSpec::new(1, 1)).is_err());
    }

    #[test]
    fn vector_with_one_component_matches_scalar() {
        let g = TimeGrid::uniform(0.0, 1.0, 32).unwrap();
        let seed = SeedSpec::new(9, 5);
        let v = generate_brownian_vector(&g, 1, seed).unwrap();
        let s = generate_brownian(&g, seed);
        assert_eq!(v.component(0).values(), s.values());
        let v2 = generate_brownian_vector(&g, 2, seed).unwrap();
        assert_eq!(v2.point(0), &[0.0, 0.0]);
        assert!(generate_brownian_vector(&g, 0, seed).is_err());
    }

    #[test]
    fn csv_headers() {
        let g = TimeGrid::new(vec![0.0, 0.1]).unwrap();
        let p = SamplePath::new(g.clone(), vec![0.0, 0.30000000000000004]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,value\n0,0\n0.1,0.30000000000000004\n");
        let v = VectorPath::new(g, 2, vec![0.0, 0.0, 1.0, -1.5]).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x1,x2\n0,0,0\n0.1,1,-1.5\n");
    }

    #[test]
    fn interpolation_is_linear_and_clamped() {
        let g = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let p = SamplePath::new(g, vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(p.interpolate(0.5), 1.0);
        assert_eq!(p.interpolate(1.5), 1.0);
        assert_eq!(p.interpolate(-1.0), 0.0);
        assert_eq!(p.interpolate(3.0), 0.0);
    }
}
