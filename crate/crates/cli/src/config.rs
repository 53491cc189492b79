//! JSON run configuration and model construction.

use std::path::PathBuf;
use std::sync::Arc;

use noisecalc::expr::Expr;
use noisecalc::integrals::EvaluationRule;
use noisecalc::physics::{kinetic_models, relativistic_models, two_particle_models, LangevinParams, ModelTrio, RelativisticParams};
use noisecalc::sde::{Domain, Interpretation, SdeModel};
use noisecalc::solvers::{BoundaryMode, SolverScheme};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Option<ModelConfig>,
    pub run: RunSection,
    pub outputs: Outputs,
    pub integrate: IntegrateSection,
    pub convert: ConvertSection,
    pub simulate: SimulateSection,
    pub stationary: StationarySection,
    pub fpe: FpeSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Langevin1 {
        interpretation: Interpretation,
        #[serde(default)]
        params: LangevinParams,
    },
    Langevin2 {
        interpretation: Interpretation,
        #[serde(default)]
        params: LangevinParams,
    },
    Relativistic {
        interpretation: Interpretation,
        #[serde(default)]
        params: RelativisticConfig,
    },
    Custom {
        f: String,
        g: String,
        interpretation: Interpretation,
        #[serde(default)]
        domain: DomainConfig,
        #[serde(default)]
        x0: f64,
    },
}

/// `null` (or a missing end) means unbounded.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

/// `alpha` and `d` are expressions in the energy `x`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelativisticConfig {
    pub mass: f64,
    pub alpha: String,
    pub d: String,
    pub p0: f64,
}

impl Default for RelativisticConfig {
    fn default() -> Self {
        Self { mass: 1.0, alpha: "1".into(), d: "1".into(), p0: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub scheme: SolverScheme,
    pub boundary: BoundaryMode,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_paths: 1000,
            dt: 1e-3,
            horizon: 1.0,
            seed: 0,
            scheme: SolverScheme::EulerMaruyamaOnItoForm,
            boundary: BoundaryMode::StopOnViolation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { dir: PathBuf::from("."), format: Format::Csv }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrateSection {
    /// Integrand `Φ(x)`.
    pub phi: String,
    pub rules: Vec<EvaluationRule>,
    /// Steps of the base Brownian path.
    pub steps: usize,
    pub levels: usize,
    pub horizon: f64,
}

impl Default for IntegrateSection {
    fn default() -> Self {
        Self { phi: "x".into(), rules: EvaluationRule::ALL.to_vec(), steps: 1024, levels: 6, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvertSection {
    /// Sampled interval; defaults to the model domain when it is bounded.
    pub range: Option<[f64; 2]>,
    pub samples: usize,
    pub t: f64,
}

impl Default for ConvertSection {
    fn default() -> Self {
        Self { range: None, samples: 101, t: 0.0 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub hitting: Option<HitConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitConfig {
    pub level: f64,
    pub band: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationarySection {
    pub interval: Option<[f64; 2]>,
    pub n_cells: usize,
}

impl Default for StationarySection {
    fn default() -> Self {
        Self { interval: None, n_cells: 256 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    PointMass(f64),
    /// Unnormalized density expression in `x`.
    Density(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpeSection {
    pub interval: Option<[f64; 2]>,
    pub n_cells: usize,
    /// Defaults to a point mass at the model's `x0`.
    pub initial: Option<InitialConfig>,
    pub t_end: f64,
    /// Defaults to the admissible step.
    pub dt: Option<f64>,
    /// Entropy samples along the run.
    pub entropy_points: usize,
}

impl Default for FpeSection {
    fn default() -> Self {
        Self { interval: None, n_cells: 256, initial: None, t_end: 10.0, dt: None, entropy_points: 100 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ExperimentSection {
    pub params: LangevinParams,
    pub relativistic: RelativisticConfig,
    pub rest_start: RestStartSection,
    pub hitting: HittingSection,
}


#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestStartSection {
    pub dt: f64,
    pub n_seeds: usize,
}

impl Default for RestStartSection {
    fn default() -> Self {
        Self { dt: 1e-3, n_seeds: 1000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HittingSection {
    /// Starting energy; defaults to 0.5 above the rest value.
    pub start: Option<f64>,
    pub band: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for HittingSection {
    fn default() -> Self {
        Self { start: None, band: 1e-4, n_paths: 1000, dt: 1e-3, horizon: 20.0 }
    }
}

fn parse_expr(src: &str, what: &str) -> Result<Expr, Failure> {
    Expr::parse(src).map_err(|e| Failure::config(format!("{what} `{src}`: {e}")))
}

/// A model ready for the solvers, with whether its coefficients depend on time.
pub struct BuiltModel {
    pub model: SdeModel,
    pub time_homogeneous: bool,
}

fn relativistic_params(c: &RelativisticConfig) -> Result<RelativisticParams, Failure> {
    let alpha = parse_expr(&c.alpha, "friction")?;
    let d = parse_expr(&c.d, "noise amplitude")?;
    if alpha.depends_on_t() || d.depends_on_t() {
        return Err(Failure::config("relativistic friction and noise amplitude are functions of the energy `x` only"));
    }
    let d_prime = match d.derivative() {
        Ok(dp) => Some(Arc::new(move |e: f64| dp.eval(e, 0.0).unwrap_or(f64::NAN)) as Arc<dyn Fn(f64) -> f64 + Send + Sync>),
        Err(e) => {
            eprintln!("warning: {e}; using finite differences for the noise-amplitude derivative");
            None
        }
    };
    let p = RelativisticParams {
        mass: c.mass,
        alpha: Arc::new(move |e| alpha.eval(e, 0.0).unwrap_or(f64::NAN)),
        d: Arc::new(move |e| d.eval(e, 0.0).unwrap_or(f64::NAN)),
        d_prime,
        p0: c.p0,
    };
    p.validate().map_err(Failure::from)?;
    Ok(p)
}

pub fn trio_for(family: &str, exp: &ExperimentSection) -> Result<ModelTrio, Failure> {
    match family {
        "langevin1" => Ok(kinetic_models(&exp.params)?),
        "langevin2" => Ok(two_particle_models(&exp.params)?),
        "relativistic" => Ok(relativistic_models(&relativistic_params(&exp.relativistic)?)?),
        other => Err(Failure::config(format!("unknown experiment `{other}`"))),
    }
}

pub fn build_model(cfg: &ModelConfig) -> Result<BuiltModel, Failure> {
    let (trio, interp) = match cfg {
        ModelConfig::Langevin1 { interpretation, params } => (kinetic_models(params)?, *interpretation),
        ModelConfig::Langevin2 { interpretation, params } => (two_particle_models(params)?, *interpretation),
        ModelConfig::Relativistic { interpretation, params } => (relativistic_models(&relativistic_params(params)?)?, *interpretation),
        ModelConfig::Custom { f, g, interpretation, domain, x0 } => {
            let fe = parse_expr(f, "drift")?;
            let ge = parse_expr(g, "diffusion")?;
            let time_homogeneous = !fe.depends_on_t() && !ge.depends_on_t();
            let dom = Domain::new(domain.lo.unwrap_or(f64::NEG_INFINITY), domain.hi.unwrap_or(f64::INFINITY))?;
            let dg = match ge.derivative() {
                Ok(d) => Some(d),
                Err(e) => {
                    eprintln!("warning: {e}; falling back to finite differences for the diffusion derivative");
                    None
                }
            };
            let g_eval = ge.clone();
            let mut model = SdeModel::new(
                move |x, t| fe.eval(x, t).unwrap_or(f64::NAN),
                move |x, t| g_eval.eval(x, t).unwrap_or(f64::NAN),
                *interpretation,
                dom,
                *x0,
            )?
            .with_assumptions(format!("custom: f = {f}, g = {g}"));
            if let Some(d) = dg {
                model = model.with_dgdx(move |x, t| d.eval(x, t).unwrap_or(f64::NAN));
            }
            return Ok(BuiltModel { model, time_homogeneous });
        }
    };
    Ok(BuiltModel { model: trio.get(interp).clone(), time_homogeneous: true })
}
