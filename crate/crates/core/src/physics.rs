//! Kinetic-energy model families (one Langevin particle, two particles,
//! relativistic Brownian motion) and the rest-start diagnostics that tell
//! the three interpretations apart.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fokker_planck::Coef1;
use crate::parallel::Execution;
use crate::paths::{generate_brownian_vector, SamplePath, SeedSpec, TimeGrid};
use crate::sde::{Domain, Interpretation, SdeModel};
use crate::solvers::{simulate_ensemble_with, BoundaryMode, EventKind, McConfig, Recording, SolverScheme};

/// Parameters of `m dV = −γV dt + σ dW`. `u0` is the second particle's
/// initial velocity and is ignored by single-particle models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinParams {
    pub m: f64,
    pub gamma: f64,
    pub sigma: f64,
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub u0: f64,
}

impl Default for LangevinParams {
    fn default() -> Self {
        Self { m: 1.0, gamma: 1.0, sigma: 1.0, v0: 0.0, u0: 0.0 }
    }
}

impl LangevinParams {
    pub fn new(m: f64, gamma: f64, sigma: f64, v0: f64) -> Result<Self> {
        let p = Self { m, gamma, sigma, v0, u0: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// Single-particle parameters with initial kinetic energy `k0`
    /// (velocity `+√(2k0/m)`).
    pub fn with_kinetic_energy(m: f64, gamma: f64, sigma: f64, k0: f64) -> Result<Self> {
        if !(k0 >= 0.0) {
            return Err(invalid(format!("initial kinetic energy must be >= 0, got {k0}")));
        }
        Self::new(m, gamma, sigma, (2.0 * k0 / m).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("gamma", self.gamma), ("sigma", self.sigma)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.v0.is_finite() || !self.u0.is_finite() {
            return Err(invalid("initial velocities must be finite"));
        }
        Ok(())
    }

    pub fn k0_single(&self) -> f64 {
        0.5 * self.m * self.v0 * self.v0
    }

    pub fn k0_pair(&self) -> f64 {
        0.5 * self.m * (self.u0 * self.u0 + self.v0 * self.v0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Langevin1,
    Langevin2,
    Relativistic,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Langevin1 => "langevin1",
            ModelFamily::Langevin2 => "langevin2",
            ModelFamily::Relativistic => "relativistic",
        }
    }
}

/// The same physical system written under each interpretation.
#[derive(Debug, Clone)]
pub struct ModelTrio {
    pub family: ModelFamily,
    pub ito: SdeModel,
    pub strat: SdeModel,
    pub hk: SdeModel,
}

impl ModelTrio {
    pub fn get(&self, i: Interpretation) -> &SdeModel {
        match i {
            Interpretation::Ito => &self.ito,
            Interpretation::Stratonovich => &self.strat,
            Interpretation::HaenggiKlimontovich => &self.hk,
        }
    }

    pub fn members(&self) -> [(Interpretation, &SdeModel); 3] {
        [
            (Interpretation::Ito, &self.ito),
            (Interpretation::Stratonovich, &self.strat),
            (Interpretation::HaenggiKlimontovich, &self.hk),
        ]
    }

    /// Same trio started at `x0`.
    pub fn with_x0(&self, x0: f64) -> Result<Self> {
        Ok(Self {
            family: self.family,
            ito: self.ito.clone().with_x0(x0)?,
            strat: self.strat.clone().with_x0(x0)?,
            hk: self.hk.clone().with_x0(x0)?,
        })
    }
}

fn energy_trio(family: ModelFamily, p: &LangevinParams, ito_offset: f64, x0: f64) -> Result<ModelTrio> {
    p.validate()?;
    let LangevinParams { m, gamma, sigma, .. } = *p;
    let c = 2.0 * sigma * sigma / m;
    let half = sigma * sigma / (2.0 * m);
    let mk = |offset: f64, i: Interpretation| {
        SdeModel::new(
            move |k, _| offset - 2.0 * gamma * k / m,
            move |k: f64, _| (c * k).sqrt(),
            i,
            Domain::positive(),
            x0,
        )
        .map(|s| s.with_dgdx(move |k: f64, _| (0.25 * c / k).sqrt()).with_assumptions("square-root diffusion; not Lipschitz at 0"))
    };
    Ok(ModelTrio {
        family,
        ito: mk(ito_offset, Interpretation::Ito)?,
        strat: mk(ito_offset - half, Interpretation::Stratonovich)?,
        hk: mk(ito_offset - 2.0 * half, Interpretation::HaenggiKlimontovich)?,
    })
}

/// Kinetic energy `K = ½mV²` of one particle: `g(K) = √(2σ²K/m)`, drifts
/// `σ²/(2m) − 2γK/m` (Itô), `−2γK/m` (Stratonovich),
/// `−σ²/(2m) − 2γK/m` (HK).
pub fn kinetic_models(p: &LangevinParams) -> Result<ModelTrio> {
    energy_trio(ModelFamily::Langevin1, p, p.sigma * p.sigma / (2.0 * p.m), p.k0_single())
}

/// Total kinetic energy of two independent particles: same `g`, drifts
/// `σ²/m − 2γK/m` (Itô), `σ²/(2m) − 2γK/m` (Stratonovich), `−2γK/m` (HK).
pub fn two_particle_models(p: &LangevinParams) -> Result<ModelTrio> {
    energy_trio(ModelFamily::Langevin2, p, p.sigma * p.sigma / p.m, p.k0_pair())
}

/// Relativistic Brownian particle with energy-dependent friction `α̂` and
/// noise amplitude `D̂` (natural units, c = 1).
#[derive(Clone)]
pub struct RelativisticParams {
    pub mass: f64,
    pub alpha: Coef1,
    pub d: Coef1,
    /// Analytic `D̂′`; a central difference is used when absent.
    pub d_prime: Option<Coef1>,
    pub p0: f64,
}

impl std::fmt::Debug for RelativisticParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RelativisticParams").field("mass", &self.mass).field("p0", &self.p0).finish_non_exhaustive()
    }
}

impl RelativisticParams {
    /// Constant `α̂` and `D̂`.
    pub fn constant(mass: f64, alpha: f64, d: f64, p0: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(d > 0.0) {
            return Err(invalid("friction and noise amplitude must be positive"));
        }
        let p = Self { mass, alpha: Arc::new(move |_| alpha), d: Arc::new(move |_| d), d_prime: Some(Arc::new(|_| 0.0)), p0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(invalid(format!("rest mass must be positive, got {}", self.mass)));
        }
        if !self.p0.is_finite() {
            return Err(invalid("initial momentum must be finite"));
        }
        Ok(())
    }

    /// Initial energy `√(M² + p0²)`.
    pub fn e0(&self) -> f64 {
        energy(self.mass, self.p0)
    }

    fn d_prime_at(&self, e: f64) -> f64 {
        match &self.d_prime {
            Some(dp) => dp(e),
            None => {
                let h = 1e-6_f64.max(1e-6 * e.abs());
                ((self.d)(e + h) - (self.d)(e - h)) / (2.0 * h)
            }
        }
    }
}

/// `E = √(M² + p²)`.
pub fn energy(mass: f64, momentum: f64) -> f64 {
    mass.hypot(momentum)
}

/// `|p| = √(E² − M²)`; an error below the rest energy.
pub fn momentum_from_energy(mass: f64, e: f64) -> Result<f64> {
    if e < mass {
        return Err(Error::OutsideDomain { x: e, lo: mass, hi: f64::INFINITY });
    }
    Ok(((e - mass) * (e + mass)).sqrt())
}

/// `1/√(1 − v²)` for `|v| < 1`.
pub fn lorentz_factor(v: f64) -> Result<f64> {
    if !(v.abs() < 1.0) {
        return Err(invalid(format!("speed {v} is not below the speed of light")));
    }
    Ok(1.0 / (1.0 - v * v).sqrt())
}

/// Velocity `p/E`.
pub fn velocity(mass: f64, momentum: f64) -> f64 {
    momentum / energy(mass, momentum)
}

/// Energy `P⁰` of the relativistic particle on `(M, ∞)`, with
/// `g = √(2D̂(1 − r²))`, `r = M/P⁰`, and drifts
/// `−α̂P⁰(1 − r²) + (D̂/P⁰)r²` (Itô), `(D̂′/2 − α̂P⁰)(1 − r²)`
/// (Stratonovich), `(D̂′ − α̂P⁰)(1 − r²) − (D̂/P⁰)r²` (HK).
pub fn relativistic_models(p: &RelativisticParams) -> Result<ModelTrio> {
    p.validate()?;
    let mass = p.mass;
    let domain = Domain::new(mass, f64::INFINITY)?;
    let x0 = p.e0();
    let d = p.d.clone();
    let g = move |e: f64, _t: f64| (2.0 * d(e) * (1.0 - (mass / e).powi(2))).sqrt();
    let (d, pp) = (p.d.clone(), p.clone());
    let dgdx = move |e: f64, _t: f64| {
        let r2 = (mass / e).powi(2);
        let g2 = 2.0 * d(e) * (1.0 - r2);
        (pp.d_prime_at(e) * (1.0 - r2) + 2.0 * d(e) * r2 / e) / g2.sqrt()
    };
    let build = |drift: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>, i| -> Result<SdeModel> {
        Ok(SdeModel::from_coefs(drift, Arc::new(g.clone()), i, domain, x0)?
            .with_dgdx(dgdx.clone())
            .with_assumptions("diffusion vanishes at the rest energy"))
    };
    let (a, d, pp) = (p.alpha.clone(), p.d.clone(), p.clone());
    let ito = Arc::new(move |e: f64, _t: f64| {
        let r2 = (mass / e).powi(2);
        -a(e) * e * (1.0 - r2) + d(e) / e * r2
    });
    let (a, pp2) = (p.alpha.clone(), p.clone());
    let strat = Arc::new(move |e: f64, _t: f64| {
        let r2 = (mass / e).powi(2);
        (0.5 * pp2.d_prime_at(e) - a(e) * e) * (1.0 - r2)
    });
    let (a, d2) = (p.alpha.clone(), p.d.clone());
    let hk = Arc::new(move |e: f64, _t: f64| {
        let r2 = (mass / e).powi(2);
        (pp.d_prime_at(e) - a(e) * e) * (1.0 - r2) - d2(e) / e * r2
    });
    Ok(ModelTrio {
        family: ModelFamily::Relativistic,
        ito: build(ito, Interpretation::Ito)?,
        strat: build(strat, Interpretation::Stratonovich)?,
        hk: build(hk, Interpretation::HaenggiKlimontovich)?,
    })
}

/// Velocities and drivers of two independent Langevin particles simulated by
/// Euler–Maruyama on `grid`.
#[derive(Debug, Clone)]
pub struct TwoParticlePaths {
    pub u: SamplePath,
    pub v: SamplePath,
    pub b: SamplePath,
    pub w: SamplePath,
}

/// `dU = −(γ/m)U dt + (σ/m) dB`, `dV = −(γ/m)V dt + (σ/m) dW` with `(B, W)`
/// from [`generate_brownian_vector`] with two components.
pub fn two_particle_velocities(p: &LangevinParams, grid: &TimeGrid, seed: SeedSpec) -> Result<TwoParticlePaths> {
    p.validate()?;
    let bw = generate_brownian_vector(grid, 2, seed)?;
    let (b, w) = (bw.component(0), bw.component(1));
    let em = |x0: f64, drv: &SamplePath| -> Result<SamplePath> {
        let ts = drv.times();
        let mut x = x0;
        let mut vals = Vec::with_capacity(ts.len());
        vals.push(x);
        for (j, dw) in drv.increments().enumerate() {
            x += -p.gamma / p.m * x * (ts[j + 1] - ts[j]) + p.sigma / p.m * dw;
            vals.push(x);
        }
        SamplePath::new(grid.clone(), vals)
    };
    Ok(TwoParticlePaths { u: em(p.u0, &b)?, v: em(p.v0, &w)?, b, w })
}

/// `W̃_t = Σ (U dB + V dW)/√(U² + V²)` as cumulative left-endpoint sums.
/// At `(U, V) = (0, 0)` the integrand is taken as `(1, 0)`.
pub fn levy_composite_brownian(u: &SamplePath, v: &SamplePath, b: &SamplePath, w: &SamplePath) -> Result<SamplePath> {
    let g = u.grid();
    for other in [v, b, w] {
        if !g.same_as(other.grid()) && g.points() != other.grid().points() {
            return Err(Error::GridMismatch("composite Brownian motion needs one shared grid".into()));
        }
    }
    let (uv, vv) = (u.values(), v.values());
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(uv.len());
    out.push(0.0);
    for (j, (db, dw)) in b.increments().zip(w.increments()).enumerate() {
        let r = uv[j].hypot(vv[j]);
        let (cu, cv) = if r == 0.0 { (1.0, 0.0) } else { (uv[j] / r, vv[j] / r) };
        acc += cu * db + cv * dw;
        out.push(acc);
    }
    SamplePath::new(g.clone(), out)
}

/// How the deterministic dynamics treats the boundary a member starts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryBehavior {
    /// Drift points into the domain: the boundary is reflecting/entrance.
    PushesInward,
    /// Zero drift with zero noise: the start is absorbing.
    Absorbing,
    /// Drift points out of the domain: the first step leaves it.
    PushesOutward,
    /// The start is not on a boundary with vanishing noise.
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestStartMember {
    pub interpretation: Interpretation,
    pub scheme: SolverScheme,
    pub boundary_behavior: BoundaryBehavior,
    /// Drift at the starting point.
    pub drift_at_start: f64,
    /// `x0 + f(x0)·dt`, the whole first step when `g(x0) = 0`.
    pub first_step_deterministic: f64,
    pub boundary: BoundaryMode,
    pub interior_fraction: f64,
    pub violation_fraction: f64,
    pub stuck_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestStartReport {
    pub family: ModelFamily,
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_seeds: usize,
    pub members: Vec<RestStartMember>,
}

impl RestStartReport {
    pub fn member(&self, i: Interpretation) -> &RestStartMember {
        self.members.iter().find(|m| m.interpretation == i).expect("every interpretation is reported")
    }
}

/// Horizon of the rest-start runs.
pub const REST_START_HORIZON: f64 = 1.0;
/// A path is stuck when it never moves further than this from its start.
pub const STUCK_TOLERANCE: f64 = 1e-12;

fn classify(model: &SdeModel) -> BoundaryBehavior {
    let x0 = model.x0;
    let on_lo = x0 == model.domain.lo;
    let on_hi = x0 == model.domain.hi;
    if !(on_lo || on_hi) || model.diffusion(x0, 0.0) != 0.0 {
        return BoundaryBehavior::Interior;
    }
    let f = model.drift(x0, 0.0);
    let inward = if on_lo { f } else { -f };
    if inward > 0.0 {
        BoundaryBehavior::PushesInward
    } else if inward == 0.0 {
        BoundaryBehavior::Absorbing
    } else {
        BoundaryBehavior::PushesOutward
    }
}

/// Runs every member of `trio` from its (boundary) start with the direct
/// scheme of its own interpretation for `n_seeds` paths up to t = 1.
///
/// A member whose drift pushes into the domain is run with folding at the
/// domain ends (the boundary is reflecting for it); the others stop at the
/// first domain violation. Seeds are `(master, i)`.
pub fn rest_start_diagnostics(trio: &ModelTrio, dt: f64, n_seeds: usize, master: u64) -> Result<RestStartReport> {
    rest_start_diagnostics_with(trio, dt, n_seeds, master, Execution::default())
}

pub fn rest_start_diagnostics_with(trio: &ModelTrio, dt: f64, n_seeds: usize, master: u64, exec: Execution) -> Result<RestStartReport> {
    let mut members = Vec::with_capacity(3);
    for (interp, model) in trio.members() {
        let scheme = SolverScheme::direct_for(interp);
        let behavior = classify(model);
        let boundary = match behavior {
            BoundaryBehavior::PushesInward => BoundaryMode::Reflect { lo: model.domain.lo, hi: model.domain.hi },
            _ => BoundaryMode::StopOnViolation,
        };
        let cfg = McConfig::new(n_seeds, dt, REST_START_HORIZON, SeedSpec::new(master, 0))
            .with_boundary(boundary)
            .with_recording(Recording::Full);
        let ens = simulate_ensemble_with(model, scheme, &cfg, exec)?;
        let n = n_seeds as f64;
        let x0 = model.x0;
        let mut interior = 0usize;
        let mut violated = 0usize;
        let mut stuck = 0usize;
        for p in &ens.paths {
            if p.events.iter().any(|e| e.kind == EventKind::DomainViolation) {
                violated += 1;
            }
            if p.terminated_early {
                continue;
            }
            if model.domain.contains_open(p.path.last()) {
                interior += 1;
            }
            if p.path.values().iter().all(|v| (v - x0).abs() <= STUCK_TOLERANCE) {
                stuck += 1;
            }
        }
        let f0 = model.drift(x0, 0.0);
        members.push(RestStartMember {
            interpretation: interp,
            scheme,
            boundary_behavior: behavior,
            drift_at_start: f0,
            first_step_deterministic: x0 + f0 * dt,
            boundary,
            interior_fraction: interior as f64 / n,
            violation_fraction: violated as f64 / n,
            stuck_fraction: stuck as f64 / n,
        });
    }
    Ok(RestStartReport { family: trio.family, x0: trio.ito.x0, dt, horizon: REST_START_HORIZON, n_seeds, members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{from_ito, to_ito};

    #[test]
    fn kinetic_drift_triple() {
        let t = kinetic_models(&LangevinParams::default()).unwrap();
        assert_eq!([t.ito.drift(1.0, 0.0), t.strat.drift(1.0, 0.0), t.hk.drift(1.0, 0.0)], [-1.5, -2.0, -2.5]);
        for k in [0.01, 0.5, 1.0, 4.0] {
            assert!((to_ito(&t.strat).drift(k, 0.0) - t.ito.drift(k, 0.0)).abs() < 1e-10);
            assert!((to_ito(&t.hk).drift(k, 0.0) - t.ito.drift(k, 0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn two_particle_values() {
        let p = LangevinParams { m: 2.0, ..Default::default() };
        let t = two_particle_models(&p).unwrap();
        assert!((t.ito.drift(1.0, 0.0) + 0.5).abs() < 1e-15);
        let z = [t.ito.drift(0.0, 0.0), t.strat.drift(0.0, 0.0), t.hk.drift(0.0, 0.0)];
        assert_eq!(z, [0.5, 0.25, 0.0]);
        assert_eq!(t.hk.diffusion(0.0, 0.0), 0.0);
        let hk = from_ito(&t.ito, Interpretation::HaenggiKlimontovich).unwrap();
        assert!((hk.drift(0.7, 0.0) - t.hk.drift(0.7, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn relativistic_at_rest_energy() {
        let t = relativistic_models(&RelativisticParams::constant(1.0, 1.0, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(t.ito.x0, 1.0);
        assert_eq!([t.ito.drift(1.0, 0.0), t.strat.drift(1.0, 0.0), t.hk.drift(1.0, 0.0)], [1.0, 0.0, -1.0]);
        assert_eq!(t.ito.diffusion(1.0, 0.0), 0.0);
        for e in [1.5, 3.0, 10.0] {
            let r2 = 1.0 / (e * e);
            assert!((t.hk.drift(e, 0.0) - t.strat.drift(e, 0.0) + r2 / e).abs() < 1e-14);
        }
        let e = 100.0;
        for m in [&t.ito, &t.strat, &t.hk] {
            assert!((m.drift(e, 0.0) / -e - 1.0).abs() < 0.01);
        }
        assert!(t.ito.clone().with_x0(0.5).is_err());
    }

    #[test]
    fn lorentz_helpers() {
        assert_eq!(energy(3.0, 4.0), 5.0);
        assert_eq!(momentum_from_energy(3.0, 5.0).unwrap(), 4.0);
        assert!(momentum_from_energy(3.0, 2.0).is_err());
        let v = velocity(1.0, 2.0);
        assert!((lorentz_factor(v).unwrap() - energy(1.0, 2.0)).abs() < 1e-12);
        assert!(lorentz_factor(1.0).is_err());
    }

    #[test]
    fn composite_with_still_second_particle() {
        let g = TimeGrid::uniform(0.0, 1.0, 100).unwrap();
        let bw = generate_brownian_vector(&g, 2, SeedSpec::new(3, 0)).unwrap();
        let (b, w) = (bw.component(0), bw.component(1));
        let u = SamplePath::from_fn(g.clone(), |t| (6.0 * t).sin() + 0.05).unwrap();
        let v = SamplePath::from_fn(g.clone(), |_| 0.0).unwrap();
        let wt = levy_composite_brownian(&u, &v, &b, &w).unwrap();
        assert_eq!(wt.first(), 0.0);
        let db: Vec<f64> = b.increments().collect();
        for (j, d) in wt.increments().enumerate() {
            assert!((d - u.values()[j].signum() * db[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn rest_start_small() {
        let t = kinetic_models(&LangevinParams::default()).unwrap();
        let r = rest_start_diagnostics(&t, 1e-2, 50, 7).unwrap();
        assert_eq!(r.member(Interpretation::Ito).interior_fraction, 1.0);
        assert_eq!(r.member(Interpretation::Stratonovich).stuck_fraction, 1.0);
        assert_eq!(r.member(Interpretation::HaenggiKlimontovich).violation_fraction, 1.0);
        assert!(r.member(Interpretation::HaenggiKlimontovich).first_step_deterministic < 0.0);
        assert_eq!(r.member(Interpretation::HaenggiKlimontovich).boundary_behavior, BoundaryBehavior::PushesOutward);
    }
}
