//! ODE systems, their statistical models and priors, and experimental designs.

mod compartmental;
mod design;
mod fhn;
mod forcing;
mod jakstat;
mod placenta;
mod prior;

pub use compartmental::{exact_compartmental, Compartmental, CompartmentalOptions};
pub use design::{CoordKind, Coordinate, Design, SEPARATION_TOL};
pub use fhn::{FhnOptions, FitzHughNagumo};
pub use forcing::{forcing_kappa, Forcing};
pub use jakstat::{JakStat, JakStatOptions};
pub use placenta::{Placenta, PlacentaOptions};
pub use prior::Dist;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{KernelKind, KernelSpec};
use crate::rng::StreamRng;
use crate::solver::{sample_path, DelaySpec, GridPrecompute, ObsPrecompute, PathDraw, TimeGrid};
use crate::stats::normal_log_pdf;
use rand::Rng;
use rand_distr::StandardNormal;

/// Right-hand side `u̇ = f(u, t, θ, x)` of an initial value problem, with an
/// optional lagged component for delay problems.
pub trait OdeSystem: Send + Sync {
    fn dim(&self) -> usize;

    fn span(&self) -> (f64, f64);

    /// Writes `f(u, t, θ, x)` into `out`. `lagged` carries `u_c(t - ω)` for
    /// the delayed component when the path is sampled with a delay.
    fn rhs(&self, t: f64, u: &[f64], lagged: Option<f64>, theta: &[f64], x: &[f64], out: &mut [f64]);
}

/// One draw of the unknowns ψ = (θ, γ) plus any latent quantities that
/// drive the solver.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamDraw {
    /// Physical parameters of interest.
    pub theta: Vec<f64>,
    /// Nuisance parameters of the noise law.
    pub gamma: Vec<f64>,
    /// Unknown initial-state entries, when the model has any.
    pub u0: Option<Vec<f64>>,
    pub omega: Option<f64>,
    /// Per-unit physical parameters under a hierarchical prior.
    pub unit_theta: Option<Vec<Vec<f64>>>,
    /// Hierarchical spread parameters.
    pub spread: Option<Vec<f64>>,
}

/// A single run of the system: treatment, initial state, observation times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub x: Vec<f64>,
    pub u0: Vec<f64>,
    pub times: Vec<f64>,
}

/// Observation `y_k` reads channel `channel` of `G(u(t), θ)` at
/// `units[unit].times[time]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsSlot {
    pub unit: usize,
    pub time: usize,
    pub channel: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub units: Vec<Unit>,
    pub slots: Vec<ObsSlot>,
}

impl Experiment {
    pub fn time_sets(&self) -> Vec<Vec<f64>> {
        self.units.iter().map(|u| u.times.clone()).collect()
    }
}

/// Solver inputs for one unit under one parameter draw.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitInputs {
    pub theta: Vec<f64>,
    pub u0: Vec<f64>,
    pub delay: Option<DelaySpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// α = factor · N.
    PerPoint(f64),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// λ = factor · h.
    GridMultiple(f64),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub kernel: KernelKind,
    pub n: usize,
    pub alpha: AlphaRule,
    pub lambda: LambdaRule,
}

impl SolverSettings {
    pub fn alpha_value(&self) -> f64 {
        match self.alpha {
            AlphaRule::PerPoint(k) => k * self.n as f64,
            AlphaRule::Fixed(a) => a,
        }
    }

    pub fn lambda_value(&self, spacing: f64) -> f64 {
        match self.lambda {
            LambdaRule::GridMultiple(k) => k * spacing,
            LambdaRule::Fixed(l) => l,
        }
    }

    /// Equally spaced grid over `span` and the kernel it implies.
    pub fn grid_and_kernel(&self, span: (f64, f64)) -> Result<(TimeGrid, KernelSpec)> {
        let grid = TimeGrid::uniform(span.0, span.1, self.n)?;
        let kernel = KernelSpec::new(self.kernel, self.lambda_value(grid.spacing()), self.alpha_value())?;
        Ok((grid, kernel))
    }
}

/// A registered statistical model built on an ODE system.
pub trait ExperimentModel: Send + Sync + fmt::Debug {
    fn id(&self) -> &'static str;

    fn system(&self) -> &dyn OdeSystem;

    /// Names of the parameters of interest, in `ParamDraw::theta` order.
    fn theta_names(&self) -> Vec<&'static str>;

    fn solver_defaults(&self) -> SolverSettings;

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamDraw;

    /// Reference design: uniform observation times, or the documented
    /// baseline for the model.
    fn baseline_design(&self) -> Design;

    /// Maps a design onto units and observation slots.
    fn experiment(&self, design: &Design) -> Result<Experiment>;

    fn unit_inputs(&self, draw: &ParamDraw, unit_index: usize, unit: &Unit) -> UnitInputs;

    /// Channel `channel` of `G(u, θ)`.
    fn obs_mean(&self, channel: usize, u: &[f64], draw: &ParamDraw) -> f64;

    /// Noise variance for an observation with mean `mean` given nuisance `gamma`.
    fn obs_variance(&self, channel: usize, mean: f64, gamma: &[f64]) -> f64;
}

/// Registry ids.
pub const MODEL_IDS: [&str; 4] = ["compartmental", "fitzhugh_nagumo", "jakstat", "placenta"];

/// Model selection from configuration, keyed by `id`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ModelConfig {
    Compartmental(#[serde(default)] CompartmentalOptions),
    FitzhughNagumo(#[serde(default)] FhnOptions),
    Jakstat(#[serde(default)] JakStatOptions),
    Placenta(#[serde(default)] PlacentaOptions),
}

impl ModelConfig {
    pub fn default_for(id: &str) -> Result<Self> {
        Ok(match id {
            "compartmental" => ModelConfig::Compartmental(Default::default()),
            "fitzhugh_nagumo" => ModelConfig::FitzhughNagumo(Default::default()),
            "jakstat" => ModelConfig::Jakstat(Default::default()),
            "placenta" => ModelConfig::Placenta(Default::default()),
            other => return Err(Error::invalid(format!("unknown model id {other:?}"))),
        })
    }

    pub fn build(&self) -> Result<Arc<dyn ExperimentModel>> {
        Ok(match self {
            ModelConfig::Compartmental(o) => Arc::new(Compartmental::new(o.clone())?),
            ModelConfig::FitzhughNagumo(o) => Arc::new(FitzHughNagumo::new(o.clone())?),
            ModelConfig::Jakstat(o) => Arc::new(JakStat::new(o.clone())?),
            ModelConfig::Placenta(o) => Arc::new(Placenta::new(o.clone())?),
        })
    }
}

/// Means and variances of every observation slot for one draw and its paths.
#[derive(Clone, Debug)]
pub struct ObsMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Evaluates `G` and the noise variance at every slot.
pub fn obs_moments(
    model: &dyn ExperimentModel,
    draw: &ParamDraw,
    exp: &Experiment,
    paths: &[PathDraw],
) -> Result<ObsMoments> {
    if paths.len() != exp.units.len() {
        return Err(Error::invalid(format!(
            "{} paths supplied for {} units",
            paths.len(),
            exp.units.len()
        )));
    }
    let mut mean = Vec::with_capacity(exp.slots.len());
    let mut variance = Vec::with_capacity(exp.slots.len());
    for (k, slot) in exp.slots.iter().enumerate() {
        let m = model.obs_mean(slot.channel, paths[slot.unit].at_obs(slot.time), draw);
        let v = model.obs_variance(slot.channel, m, &draw.gamma);
        if !(m.is_finite() && v.is_finite() && v >= 0.0) {
            return Err(Error::NonFiniteObservation { slot: k, unit: slot.unit, channel: slot.channel });
        }
        mean.push(m);
        variance.push(v);
    }
    Ok(ObsMoments { mean, variance })
}

/// One solver path per unit of `exp` for parameter draw `draw`. `obs[j]`
/// must be built for `exp.units[j].times`.
pub fn sample_paths(
    model: &dyn ExperimentModel,
    grid: &GridPrecompute,
    obs: &[Arc<ObsPrecompute>],
    draw: &ParamDraw,
    exp: &Experiment,
    rng: &mut StreamRng,
) -> Result<Vec<PathDraw>> {
    if obs.len() != exp.units.len() {
        return Err(Error::invalid("one observation precompute per unit is required"));
    }
    exp.units
        .iter()
        .zip(obs)
        .enumerate()
        .map(|(j, (unit, o))| {
            let inp = model.unit_inputs(draw, j, unit);
            sample_path(grid, o, model.system(), &inp.theta, &unit.x, &inp.u0, inp.delay, rng)
        })
        .collect()
}

/// Draws `y` from the noise law centred at `G(u(t_jl), θ)`.
pub fn simulate_response(
    model: &dyn ExperimentModel,
    draw: &ParamDraw,
    exp: &Experiment,
    paths: &[PathDraw],
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let mom = obs_moments(model, draw, exp, paths)?;
    Ok(mom
        .mean
        .iter()
        .zip(&mom.variance)
        .map(|(m, v)| {
            let z: f64 = rng.sample(StandardNormal);
            m + v.sqrt() * z
        })
        .collect())
}

/// `log π(y | ψ, d)`; `-inf` when a zero-variance slot has a nonzero residual.
pub fn log_likelihood(
    model: &dyn ExperimentModel,
    y: &[f64],
    draw: &ParamDraw,
    exp: &Experiment,
    paths: &[PathDraw],
) -> Result<f64> {
    let mom = obs_moments(model, draw, exp, paths)?;
    if y.len() != mom.mean.len() {
        return Err(Error::invalid(format!("y has {} entries, expected {}", y.len(), mom.mean.len())));
    }
    Ok(y.iter()
        .zip(mom.mean.iter().zip(&mom.variance))
        .map(|(&yi, (&m, &v))| normal_log_pdf(yi, m, v))
        .sum())
}

/// Checks that the right-hand side is finite at the initial state of the
/// baseline design for a handful of prior draws.
pub fn smoke_check(model: &dyn ExperimentModel, draws: usize, rng: &mut StreamRng) -> Result<()> {
    let exp = model.experiment(&model.baseline_design())?;
    let sys = model.system();
    let (t0, _) = sys.span();
    let mut out = vec![0.0; sys.dim()];
    for _ in 0..draws {
        let draw = model.sample_prior(rng);
        for (j, unit) in exp.units.iter().enumerate() {
            let inp = model.unit_inputs(&draw, j, unit);
            let lag = inp.delay.map(|d| d.prehistory);
            sys.rhs(t0, &inp.u0, lag, &inp.theta, &unit.x, &mut out);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { step: 0, theta: inp.theta });
            }
        }
    }
    Ok(())
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
