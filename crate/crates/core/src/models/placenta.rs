use serde::{Deserialize, Serialize};

use super::design::time_coords;
use super::prior::validate_all;
use super::*;

/// Treatment and initial condition rows `(x₂, u₀₂)` of the biologists'
/// proposed seven-placenta design.
pub const PROPOSED_ROWS: [(f64, f64); 7] = [
    (0.0, 0.0),
    (250.0, 0.0),
    (250.0, 250.0),
    (250.0, 1000.0),
    (1000.0, 0.0),
    (1000.0, 250.0),
    (1000.0, 1000.0),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacentaOptions {
    /// Number of placentas M.
    pub units: usize,
    /// Ties the two reaction rates (θ₄ = θ₃ at both levels).
    pub symmetric: bool,
    pub theta_prior: [Dist; 4],
    /// Prior of each multiplicative spread `c_d`.
    pub spread_prior: Dist,
    /// Prior of the response variance σ².
    pub variance_prior: Dist,
    pub x1: f64,
    pub u01: f64,
    pub n_times: usize,
    pub min_separation: f64,
    pub horizon: f64,
    pub treatment_bounds: (f64, f64),
    pub initial_bounds: (f64, f64),
    /// Observation times of the baseline design. The proposed design's
    /// times are not tabulated, so evenly spaced times are used.
    pub baseline_times: Vec<f64>,
}

impl Default for PlacentaOptions {
    fn default() -> Self {
        let wide = Dist::Triangular { lower: 80.0, upper: 120.0 };
        PlacentaOptions {
            units: 7,
            symmetric: false,
            theta_prior: [wide, Dist::Triangular { lower: 0.02, upper: 0.08 }, wide, wide],
            spread_prior: Dist::Uniform { lower: 0.0, upper: 0.05 },
            variance_prior: Dist::Uniform { lower: 0.0, upper: 1.0 },
            x1: 7.5,
            u01: 0.0,
            n_times: 8,
            min_separation: 5.0,
            horizon: 600.0,
            treatment_bounds: (0.0, 1000.0),
            initial_bounds: (0.0, 1000.0),
            baseline_times: (1..=8).map(|i| 75.0 * i as f64).collect(),
        }
    }
}

/// Serine transport across placental vesicles, with a multiplicative
/// hierarchical prior over per-placenta rates.
#[derive(Clone, Debug)]
pub struct Placenta {
    opts: PlacentaOptions,
}

impl Placenta {
    pub fn new(opts: PlacentaOptions) -> Result<Self> {
        validate_all(&opts.theta_prior)?;
        opts.spread_prior.validate()?;
        opts.variance_prior.validate()?;
        if opts.units == 0 || opts.n_times == 0 {
            return Err(Error::invalid("placenta: units and n_times must be positive"));
        }
        if opts.baseline_times.len() != opts.n_times {
            return Err(Error::invalid("placenta: baseline_times must have n_times entries"));
        }
        let (lo, hi) = opts.spread_prior.support();
        if lo < 0.0 || hi >= 1.0 {
            return Err(Error::invalid("placenta: spreads must lie in [0, 1)"));
        }
        for (name, (a, b)) in [("treatment", opts.treatment_bounds), ("initial", opts.initial_bounds)] {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(Error::invalid(format!("placenta: bad {name} bounds")));
            }
        }
        Ok(Placenta { opts })
    }

    pub fn options(&self) -> &PlacentaOptions {
        &self.opts
    }

    /// Rows of the proposed design used for `M` placentas, spread evenly
    /// over the seven tabulated rows.
    pub fn proposed_rows(m: usize) -> Vec<(f64, f64)> {
        match m {
            0 => vec![],
            1 => vec![PROPOSED_ROWS[0]],
            _ => (0..m)
                .map(|i| PROPOSED_ROWS[((i * 6) as f64 / (m - 1) as f64).round() as usize % 7])
                .collect(),
        }
    }
}

impl OdeSystem for Placenta {
    fn dim(&self) -> usize {
        2
    }

    fn span(&self) -> (f64, f64) {
        (0.0, self.opts.horizon)
    }

    fn rhs(&self, _t: f64, u: &[f64], _lag: Option<f64>, th: &[f64], x: &[f64], out: &mut [f64]) {
        let (xs, us) = (x[0] + x[1], u[0] + u[1]);
        let ustar = (2.0 * xs * us + (1.0 + th[1]) * (th[3] * xs + th[2] * us) + 2.0 * th[2] * th[3]) / th[0];
        out[0] = (x[0] * (u[1] + th[1] * th[3]) - u[0] * (x[1] + th[1] * th[2])) / ustar;
        out[1] = (x[1] * (u[0] + th[1] * th[3]) - u[1] * (x[0] + th[1] * th[2])) / ustar;
    }
}

impl ExperimentModel for Placenta {
    fn id(&self) -> &'static str {
        "placenta"
    }

    fn system(&self) -> &dyn OdeSystem {
        self
    }

    fn theta_names(&self) -> Vec<&'static str> {
        vec!["theta1", "theta2", "theta3", "theta4"]
    }

    fn solver_defaults(&self) -> SolverSettings {
        SolverSettings {
            kernel: KernelKind::SquaredExponential,
            n: 601,
            alpha: AlphaRule::PerPoint(10.0),
            lambda: LambdaRule::GridMultiple(4.0),
        }
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamDraw {
        let mut theta: Vec<f64> = self.opts.theta_prior.iter().map(|d| d.sample(rng)).collect();
        let spread: Vec<f64> = (0..4).map(|_| self.opts.spread_prior.sample(rng)).collect();
        if self.opts.symmetric {
            theta[3] = theta[2];
        }
        let unit_theta = (0..self.opts.units)
            .map(|_| {
                let mut t: Vec<f64> = theta
                    .iter()
                    .zip(&spread)
                    .map(|(&p, &c)| Dist::Uniform { lower: p * (1.0 - c), upper: p * (1.0 + c) }.sample(rng))
                    .collect();
                if self.opts.symmetric {
                    t[3] = t[2];
                }
                t
            })
            .collect();
        let gamma = vec![self.opts.variance_prior.sample(rng)];
        ParamDraw { theta, gamma, unit_theta: Some(unit_theta), spread: Some(spread), ..Default::default() }
    }

    fn baseline_design(&self) -> Design {
        let o = &self.opts;
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for (j, (x2, u02)) in Placenta::proposed_rows(o.units).into_iter().enumerate() {
            coords.push(Coordinate {
                name: format!("x2_{}", j + 1),
                kind: CoordKind::Treatment { unit: j, index: 1 },
                lower: o.treatment_bounds.0,
                upper: o.treatment_bounds.1,
            });
            values.push(x2.clamp(o.treatment_bounds.0, o.treatment_bounds.1));
            coords.push(Coordinate {
                name: format!("u02_{}", j + 1),
                kind: CoordKind::Initial { unit: j, component: 1 },
                lower: o.initial_bounds.0,
                upper: o.initial_bounds.1,
            });
            values.push(u02.clamp(o.initial_bounds.0, o.initial_bounds.1));
        }
        coords.extend(time_coords(0, o.n_times, 0.0, o.horizon, "t"));
        values.extend(&o.baseline_times);
        Design { coords, values, min_separation: o.min_separation }
    }

    fn experiment(&self, design: &Design) -> Result<Experiment> {
        let o = &self.opts;
        let times = design.time_set(0);
        if times.len() != o.n_times {
            return Err(Error::invalid(format!("expected {} times, got {}", o.n_times, times.len())));
        }
        let mut units = Vec::with_capacity(o.units);
        let mut slots = Vec::with_capacity(o.units * times.len());
        for j in 0..o.units {
            let x2 = design
                .value_of(CoordKind::Treatment { unit: j, index: 1 })
                .ok_or_else(|| Error::invalid(format!("design has no treatment for placenta {}", j + 1)))?;
            let u02 = design
                .value_of(CoordKind::Initial { unit: j, component: 1 })
                .ok_or_else(|| Error::invalid(format!("design has no initial value for placenta {}", j + 1)))?;
            units.push(Unit { x: vec![o.x1, x2], u0: vec![o.u01, u02], times: times.clone() });
            slots.extend((0..times.len()).map(|time| ObsSlot { unit: j, time, channel: 0 }));
        }
        Ok(Experiment { units, slots })
    }

    fn unit_inputs(&self, draw: &ParamDraw, j: usize, unit: &Unit) -> UnitInputs {
        let theta = draw
            .unit_theta
            .as_ref()
            .and_then(|u| u.get(j))
            .cloned()
            .unwrap_or_else(|| draw.theta.clone());
        UnitInputs { theta, u0: unit.u0.clone(), delay: None }
    }

    fn obs_mean(&self, _channel: usize, u: &[f64], _draw: &ParamDraw) -> f64 {
        u[0]
    }

    fn obs_variance(&self, _channel: usize, _mean: f64, gamma: &[f64]) -> f64 {
        gamma[0]
    }
}
