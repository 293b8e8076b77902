use serde::{Deserialize, Serialize};

use super::design::time_coords;
use super::prior::validate_all;
use super::*;

fn ln(median: f64, sd: f64) -> Dist {
    Dist::LogNormal { mu: median.ln(), variance: sd * sd }
}

/// JAK-STAT signalling pathway with delayed nuclear export.
///
/// The default priors are surrogates: independent log-normals centred on
/// values that give a well-behaved pulse response under the synthetic
/// forcing table. Supply measured priors and κ table through the options
/// for real studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JakStatOptions {
    pub theta_prior: [Dist; 6],
    pub u01_prior: Dist,
    pub omega_prior: Dist,
    /// Priors of the four noise standard deviations.
    pub sigma_prior: [Dist; 4],
    pub forcing: Forcing,
    pub n_times: usize,
    pub min_separation: f64,
    pub horizon: f64,
    /// Lower bound for the single ratio observation time. The ratio
    /// `u₃/(u₂+u₃)` is 0/0 at `t = 0`.
    pub tstar_lower: f64,
    pub baseline_times: Vec<f64>,
    pub baseline_tstar: f64,
}

impl Default for JakStatOptions {
    fn default() -> Self {
        JakStatOptions {
            theta_prior: [
                ln(0.1, 0.1),
                ln(0.005, 0.1),
                ln(0.1, 0.1),
                ln(0.1, 0.1),
                ln(1.0 / 300.0, 0.1),
                ln(1.0 / 300.0, 0.1),
            ],
            u01_prior: ln(300.0, 0.05),
            omega_prior: ln(6.0, 0.1),
            sigma_prior: [
                Dist::Uniform { lower: 0.0, upper: 0.1 },
                Dist::Uniform { lower: 0.0, upper: 0.1 },
                Dist::Uniform { lower: 0.0, upper: 20.0 },
                Dist::Uniform { lower: 0.0, upper: 0.1 },
            ],
            forcing: Forcing::synthetic((0.0, 60.0)),
            n_times: 16,
            min_separation: 1.0,
            horizon: 60.0,
            tstar_lower: 1.0,
            baseline_times: vec![
                0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 25.0, 30.0, 40.0, 50.0, 60.0,
            ],
            baseline_tstar: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JakStat {
    opts: JakStatOptions,
}

impl JakStat {
    pub fn new(opts: JakStatOptions) -> Result<Self> {
        validate_all(&opts.theta_prior)?;
        validate_all(&opts.sigma_prior)?;
        opts.u01_prior.validate()?;
        opts.omega_prior.validate()?;
        if opts.omega_prior.support().0 < 0.0 {
            return Err(Error::invalid("jakstat: delay prior must be nonnegative"));
        }
        if opts.n_times == 0 || opts.baseline_times.len() != opts.n_times {
            return Err(Error::invalid("jakstat: baseline_times must have n_times entries"));
        }
        if !(opts.tstar_lower > 0.0 && opts.tstar_lower < opts.horizon) {
            return Err(Error::invalid("jakstat: tstar_lower must lie in (0, horizon)"));
        }
        opts.forcing.eval(0.0)?;
        opts.forcing.eval(opts.horizon)?;
        Ok(JakStat { opts })
    }
}

impl OdeSystem for JakStat {
    fn dim(&self) -> usize {
        4
    }

    fn span(&self) -> (f64, f64) {
        (0.0, self.opts.horizon)
    }

    fn rhs(&self, t: f64, u: &[f64], lag: Option<f64>, th: &[f64], _x: &[f64], out: &mut [f64]) {
        let kappa = self.opts.forcing.eval(t).unwrap_or(f64::NAN);
        let lag = lag.unwrap_or(u[3]);
        let act = th[0] * u[0] * kappa;
        let dim = th[1] * u[1] * u[1];
        out[0] = -act + 2.0 * th[3] * lag;
        out[1] = act - dim;
        out[2] = -th[2] * u[2] + 0.5 * dim;
        out[3] = th[2] * u[2] - th[3] * lag;
    }
}

impl ExperimentModel for JakStat {
    fn id(&self) -> &'static str {
        "jakstat"
    }

    fn system(&self) -> &dyn OdeSystem {
        self
    }

    fn theta_names(&self) -> Vec<&'static str> {
        vec!["theta1", "theta2", "theta3", "theta4", "theta5", "theta6"]
    }

    fn solver_defaults(&self) -> SolverSettings {
        SolverSettings {
            kernel: KernelKind::Uniform,
            n: 500,
            alpha: AlphaRule::Fixed(8000.0),
            lambda: LambdaRule::Fixed(0.085),
        }
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamDraw {
        let theta = self.opts.theta_prior.iter().map(|d| d.sample(rng)).collect();
        let u01 = self.opts.u01_prior.sample(rng);
        let omega = self.opts.omega_prior.sample(rng);
        let gamma = self.opts.sigma_prior.iter().map(|d| d.sample(rng)).collect();
        ParamDraw { theta, gamma, u0: Some(vec![u01]), omega: Some(omega), ..Default::default() }
    }

    fn baseline_design(&self) -> Design {
        let o = &self.opts;
        let mut coords = time_coords(0, o.n_times, 0.0, o.horizon, "t");
        coords.extend(time_coords(1, 1, o.tstar_lower, o.horizon, "tstar"));
        coords.last_mut().expect("one coordinate").name = "tstar".into();
        let mut values = o.baseline_times.clone();
        values.push(o.baseline_tstar);
        Design { coords, values, min_separation: o.min_separation }
    }

    fn experiment(&self, design: &Design) -> Result<Experiment> {
        let mut times = design.time_set(0);
        let n = times.len();
        if n != self.opts.n_times {
            return Err(Error::invalid(format!("expected {} times, got {n}", self.opts.n_times)));
        }
        let tstar = design.time_set(1);
        if tstar.len() != 1 {
            return Err(Error::invalid("jakstat design needs exactly one ratio time"));
        }
        times.push(tstar[0]);
        times.push(0.0);
        let mut slots: Vec<ObsSlot> = (0..n)
            .flat_map(|time| [0, 1].map(|channel| ObsSlot { unit: 0, time, channel }))
            .collect();
        slots.push(ObsSlot { unit: 0, time: n + 1, channel: 2 });
        slots.push(ObsSlot { unit: 0, time: n, channel: 3 });
        Ok(Experiment { units: vec![Unit { x: vec![], u0: vec![0.0; 4], times }], slots })
    }

    fn unit_inputs(&self, draw: &ParamDraw, _j: usize, _unit: &Unit) -> UnitInputs {
        let u01 = draw.u0.as_ref().map_or(f64::NAN, |u| u[0]);
        let omega = draw.omega.unwrap_or(0.0);
        UnitInputs {
            theta: draw.theta.clone(),
            u0: vec![u01, 0.0, 0.0, 0.0],
            delay: Some(DelaySpec { component: 3, omega, prehistory: 0.0 }),
        }
    }

    fn obs_mean(&self, channel: usize, u: &[f64], draw: &ParamDraw) -> f64 {
        let th = &draw.theta;
        match channel {
            0 => th[4] * (u[1] + 2.0 * u[2]),
            1 => th[5] * (u[0] + u[1] + 2.0 * u[2]),
            2 => u[0],
            _ => u[2] / (u[1] + u[2]),
        }
    }

    fn obs_variance(&self, channel: usize, _mean: f64, gamma: &[f64]) -> f64 {
        gamma[channel] * gamma[channel]
    }
}
