//! Tiny models whose observation means depend on θ directly, so estimator
//! tests have closed-form or enumerable oracles.

use std::sync::Arc;

use bode_core::kernel::KernelKind;
use bode_core::models::*;
use bode_core::rng::StreamRng;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub enum ToyPrior {
    Uniform(f64, f64),
    Normal(f64, f64),
    /// Uniform over a finite support.
    Discrete(Vec<f64>),
    Point(f64),
}

impl ToyPrior {
    fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            ToyPrior::Uniform(a, b) => a + (b - a) * rng.random::<f64>(),
            ToyPrior::Normal(m, s) => m + s * rng.sample::<f64, _>(StandardNormal),
            ToyPrior::Discrete(v) => v[rng.random_range(0..v.len())],
            ToyPrior::Point(v) => *v,
        }
    }
}

/// Scalar θ observed through `n_obs` channels. Channel `k` has mean
/// `θ·(1 + k/2)` and variance `γ·(1 + k)`.
#[derive(Clone, Debug)]
pub struct Toy {
    pub theta: ToyPrior,
    pub gamma: ToyPrior,
    pub n_obs: usize,
}

impl Toy {
    pub fn new(theta: ToyPrior, gamma: ToyPrior, n_obs: usize) -> Arc<dyn ExperimentModel> {
        Arc::new(Toy { theta, gamma, n_obs })
    }

    pub fn settings() -> SolverSettings {
        SolverSettings {
            kernel: KernelKind::SquaredExponential,
            n: 11,
            alpha: AlphaRule::PerPoint(1.0),
            lambda: LambdaRule::GridMultiple(4.0),
        }
    }

    pub fn mean(channel: usize, theta: f64) -> f64 {
        theta * (1.0 + 0.5 * channel as f64)
    }

    pub fn variance(channel: usize, gamma: f64) -> f64 {
        gamma * (1.0 + channel as f64)
    }
}

impl OdeSystem for Toy {
    fn dim(&self) -> usize {
        1
    }

    fn span(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn rhs(&self, _t: f64, _u: &[f64], _lag: Option<f64>, _th: &[f64], _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

impl ExperimentModel for Toy {
    fn id(&self) -> &'static str {
        "toy"
    }

    fn system(&self) -> &dyn OdeSystem {
        self
    }

    fn theta_names(&self) -> Vec<&'static str> {
        vec!["theta"]
    }

    fn solver_defaults(&self) -> SolverSettings {
        Toy::settings()
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamDraw {
        let theta = vec![self.theta.sample(rng)];
        let gamma = vec![self.gamma.sample(rng)];
        ParamDraw { theta, gamma, ..Default::default() }
    }

    fn baseline_design(&self) -> Design {
        let c = Coordinate { name: "t1".into(), kind: CoordKind::Time { set: 0, index: 0 }, lower: 0.0, upper: 1.0 };
        Design::new(vec![c], vec![0.5], 0.0).unwrap()
    }

    fn experiment(&self, design: &Design) -> bode_core::error::Result<Experiment> {
        let times = design.time_set(0);
        let slots = (0..self.n_obs).map(|channel| ObsSlot { unit: 0, time: 0, channel }).collect();
        Ok(Experiment { units: vec![Unit { x: vec![], u0: vec![0.0], times }], slots })
    }

    fn unit_inputs(&self, draw: &ParamDraw, _j: usize, _unit: &Unit) -> UnitInputs {
        UnitInputs { theta: draw.theta.clone(), u0: vec![0.0], delay: None }
    }

    fn obs_mean(&self, channel: usize, _u: &[f64], draw: &ParamDraw) -> f64 {
        Toy::mean(channel, draw.theta[0])
    }

    fn obs_variance(&self, channel: usize, _mean: f64, gamma: &[f64]) -> f64 {
        Toy::variance(channel, gamma[0])
    }
}

/// Observation moments of the toy at `(θ, γ)`.
pub fn toy_moments(n_obs: usize, theta: f64, gamma: f64) -> ObsMoments {
    ObsMoments {
        mean: (0..n_obs).map(|k| Toy::mean(k, theta)).collect(),
        variance: (0..n_obs).map(|k| Toy::variance(k, gamma)).collect(),
    }
}

pub fn toy_draw(theta: f64, gamma: f64) -> ParamDraw {
    ParamDraw { theta: vec![theta], gamma: vec![gamma], ..Default::default() }
}
