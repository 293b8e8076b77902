use serde::{Deserialize, Serialize};

use super::design::time_coords;
use super::prior::validate_all;
use super::*;

/// One-compartment pharmacokinetic model with first-order absorption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompartmentalOptions {
    pub dose: f64,
    pub sigma2: f64,
    pub tau2: f64,
    /// Prior means of `log θ`.
    pub log_mean: [f64; 3],
    /// Prior variance of each `log θ_l`; zero gives a point mass.
    pub log_variance: f64,
    pub n_times: usize,
    pub min_separation: f64,
    pub horizon: f64,
}

impl Default for CompartmentalOptions {
    fn default() -> Self {
        CompartmentalOptions {
            dose: 400.0,
            sigma2: 0.1,
            tau2: 0.01,
            log_mean: [0.1f64.ln(), 0.0, 20.0f64.ln()],
            log_variance: 0.05,
            n_times: 15,
            min_separation: 0.25,
            horizon: 24.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Compartmental {
    opts: CompartmentalOptions,
    priors: [Dist; 3],
}

impl Compartmental {
    pub fn new(opts: CompartmentalOptions) -> Result<Self> {
        if !(opts.dose.is_finite() && opts.sigma2 >= 0.0 && opts.tau2 >= 0.0 && opts.horizon > 0.0) {
            return Err(Error::invalid("compartmental: dose, variances and horizon must be valid"));
        }
        if opts.n_times == 0 {
            return Err(Error::invalid("compartmental: n_times must be positive"));
        }
        let priors = opts.log_mean.map(|mu| Dist::LogNormal { mu, variance: opts.log_variance });
        validate_all(&priors)?;
        Ok(Compartmental { opts, priors })
    }

    pub fn options(&self) -> &CompartmentalOptions {
        &self.opts
    }
}

/// Closed-form solution `(u₁(t), u₂(t))`.
pub fn exact_compartmental(theta: [f64; 3], dose: f64, t: f64) -> Result<(f64, f64)> {
    let [t1, t2, t3] = theta;
    if t1 == t2 {
        return Err(Error::invalid("exact solution needs θ1 != θ2"));
    }
    if t < 0.0 {
        return Err(Error::invalid(format!("time must be >= 0, got {t}")));
    }
    let u1 = dose * (-t1 * t).exp();
    let u2 = dose * t2 / (t3 * (t2 - t1)) * ((-t1 * t).exp() - (-t2 * t).exp());
    Ok((u1, u2))
}

impl OdeSystem for Compartmental {
    fn dim(&self) -> usize {
        2
    }

    fn span(&self) -> (f64, f64) {
        (0.0, self.opts.horizon)
    }

    fn rhs(&self, _t: f64, u: &[f64], _lag: Option<f64>, th: &[f64], _x: &[f64], out: &mut [f64]) {
        out[0] = -th[0] * u[0];
        out[1] = th[1] / th[2] * u[0] - th[1] * u[1];
    }
}

impl ExperimentModel for Compartmental {
    fn id(&self) -> &'static str {
        "compartmental"
    }

    fn system(&self) -> &dyn OdeSystem {
        self
    }

    fn theta_names(&self) -> Vec<&'static str> {
        vec!["theta1", "theta2", "theta3"]
    }

    fn solver_defaults(&self) -> SolverSettings {
        SolverSettings {
            kernel: KernelKind::SquaredExponential,
            n: 501,
            alpha: AlphaRule::PerPoint(1.0),
            lambda: LambdaRule::GridMultiple(4.0),
        }
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamDraw {
        ParamDraw { theta: self.priors.iter().map(|d| d.sample(rng)).collect(), ..Default::default() }
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
        Ok(Experiment { units: vec![Unit { x: vec![], u0: vec![self.opts.dose, 0.0], times }], slots })
    }

    fn unit_inputs(&self, draw: &ParamDraw, _j: usize, unit: &Unit) -> UnitInputs {
        UnitInputs { theta: draw.theta.clone(), u0: unit.u0.clone(), delay: None }
    }

    fn obs_mean(&self, _channel: usize, u: &[f64], _draw: &ParamDraw) -> f64 {
        u[1]
    }

    fn obs_variance(&self, _channel: usize, mean: f64, _gamma: &[f64]) -> f64 {
        self.opts.sigma2 + self.opts.tau2 * mean * mean
    }
}
