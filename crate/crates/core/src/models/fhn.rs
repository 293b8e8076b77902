use serde::{Deserialize, Serialize};

use super::design::time_coords;
use super::prior::validate_all;
use super::*;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhnOptions {
    pub theta_prior: [Dist; 3],
    /// Prior of the noise standard deviation.
    pub sigma_prior: Dist,
    pub u0: [f64; 2],
    pub n_times: usize,
    pub min_separation: f64,
    pub horizon: f64,
}

impl Default for FhnOptions {
    fn default() -> Self {
        FhnOptions {
            theta_prior: [
                Dist::Uniform { lower: 0.0, upper: 1.0 },
                Dist::Uniform { lower: 0.0, upper: 1.0 },
                Dist::Uniform { lower: 1.0, upper: 5.0 },
            ],
            sigma_prior: Dist::Uniform { lower: 0.5, upper: 1.0 },
            u0: [-1.0, 1.0],
            n_times: 21,
            min_separation: 0.25,
            horizon: 20.0,
        }
    }
}

/// FitzHugh–Nagumo neuron model, voltage observed with normal noise.
#[derive(Clone, Debug)]
pub struct FitzHughNagumo {
    opts: FhnOptions,
}

impl FitzHughNagumo {
    pub fn new(opts: FhnOptions) -> Result<Self> {
        validate_all(&opts.theta_prior)?;
        opts.sigma_prior.validate()?;
        if opts.theta_prior[2].support().0 <= 0.0 {
            return Err(Error::invalid("fitzhugh_nagumo: theta3 prior must be positive"));
        }
        if opts.n_times == 0 || !(opts.horizon > 0.0) {
            return Err(Error::invalid("fitzhugh_nagumo: n_times and horizon must be positive"));
        }
        Ok(FitzHughNagumo { opts })
    }
}

impl OdeSystem for FitzHughNagumo {
    fn dim(&self) -> usize {
        2
    }

    fn span(&self) -> (f64, f64) {
        (0.0, self.opts.horizon)
    }

    fn rhs(&self, _t: f64, u: &[f64], _lag: Option<f64>, th: &[f64], _x: &[f64], out: &mut [f64]) {
        out[0] = th[2] * (u[0] - u[0].powi(3) / 3.0 + u[1]);
        out[1] = -(u[0] - th[0] + th[1] * u[1]) / th[2];
    }
}

impl ExperimentModel for FitzHughNagumo {
    fn id(&self) -> &'static str {
        "fitzhugh_nagumo"
    }

    fn system(&self) -> &dyn OdeSystem {
        self
    }

    fn theta_names(&self) -> Vec<&'static str> {
        vec!["theta1", "theta2", "theta3"]
    }

    fn solver_defaults(&self) -> SolverSettings {
        SolverSettings {
            kernel: KernelKind::Uniform,
            n: 200,
            alpha: AlphaRule::PerPoint(1.0),
            lambda: LambdaRule::GridMultiple(4.0),
        }
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamDraw {
        let theta = self.opts.theta_prior.iter().map(|d| d.sample(rng)).collect();
        let gamma = vec![self.opts.sigma_prior.sample(rng)];
        ParamDraw { theta, gamma, ..Default::default() }
    }

    fn baseline_design(&self) -> Design {
        let n = self.opts.n_times;
        Design {
            coords: time_coords(0, n, 0.0, self.opts.horizon, "t"),
            values: linspace(0.0, self.opts.horizon, n),
            min_separation: self.opts.min_separation,
        }
    }

    fn experiment(&self, design: &Design) -> Result<Experiment> {
        let times = design.time_set(0);
        if times.len() != self.opts.n_times {
            return Err(Error::invalid(format!("expected {} times, got {}", self.opts.n_times, times.len())));
        }
        let slots = (0..times.len()).map(|time| ObsSlot { unit: 0, time, channel: 0 }).collect();
        Ok(Experiment { units: vec![Unit { x: vec![], u0: self.opts.u0.to_vec(), times }], slots })
    }

    fn unit_inputs(&self, draw: &ParamDraw, _j: usize, unit: &Unit) -> UnitInputs {
        UnitInputs { theta: draw.theta.clone(), u0: unit.u0.clone(), delay: None }
    }

    fn obs_mean(&self, _channel: usize, u: &[f64], _draw: &ParamDraw) -> f64 {
        u[0]
    }

    fn obs_variance(&self, _channel: usize, _mean: f64, gamma: &[f64]) -> f64 {
        gamma[0] * gamma[0]
    }
}
