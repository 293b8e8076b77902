use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noiseless GP interpolant through a `(time, value)` table: constant mean
/// equal to the table average, squared-exponential correlation with length
/// scale twice the median gap, no nugget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ForcingTable", into = "ForcingTable")]
pub struct Forcing {
    times: Vec<f64>,
    values: Vec<f64>,
    domain: (f64, f64),
    length: f64,
    mean: f64,
    coef: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForcingTable {
    times: Vec<f64>,
    values: Vec<f64>,
    domain: (f64, f64),
}

impl TryFrom<ForcingTable> for Forcing {
    type Error = Error;

    fn try_from(t: ForcingTable) -> Result<Self> {
        Forcing::new(t.times, t.values, t.domain)
    }
}

impl From<Forcing> for ForcingTable {
    fn from(f: Forcing) -> Self {
        ForcingTable { times: f.times, values: f.values, domain: f.domain }
    }
}

/// The synthetic default pulse used when no measured table is supplied:
/// `κ(t) = (t/5)·exp(1 − t/5)` sampled at sixteen times on `[0, 60]`.
pub fn synthetic_pulse() -> (Vec<f64>, Vec<f64>) {
    let times = vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 25.0, 30.0, 40.0, 50.0, 60.0];
    let values = times.iter().map(|t: &f64| (t / 5.0) * (1.0 - t / 5.0).exp()).collect();
    (times, values)
}

impl Forcing {
    pub fn new(times: Vec<f64>, values: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::invalid("forcing table needs matching, nonempty time and value columns"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("forcing table has non-finite entries"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("forcing table times must be strictly increasing"));
        }
        if !(domain.0 < domain.1) {
            return Err(Error::invalid("forcing domain must be a nonempty interval"));
        }
        let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let length = if gaps.is_empty() {
            domain.1 - domain.0
        } else {
            gaps.sort_by(f64::total_cmp);
            let m = gaps.len();
            let med = if m % 2 == 1 { gaps[m / 2] } else { 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]) };
            2.0 * med
        };
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let n = times.len();
        let k = DMatrix::from_fn(n, n, |i, j| corr(times[i], times[j], length));
        let r = DVector::from_iterator(n, values.iter().map(|v| v - mean));
        let coef = match k.clone().cholesky() {
            Some(c) => c.solve(&r),
            None => k
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::invalid("forcing table correlation matrix is singular"))?,
        };
        Ok(Forcing { times, values, domain, length, mean, coef: coef.iter().copied().collect() })
    }

    pub fn synthetic(domain: (f64, f64)) -> Self {
        let (t, v) = synthetic_pulse();
        Forcing::new(t, v, domain).expect("synthetic table is valid")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn length_scale(&self) -> f64 {
        self.length
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= self.domain.0 && t <= self.domain.1) {
            return Err(Error::ForcingDomain { t, lo: self.domain.0, hi: self.domain.1 });
        }
        Ok(self.mean + self.times.iter().zip(&self.coef).map(|(&s, c)| c * corr(t, s, self.length)).sum::<f64>())
    }
}

fn corr(a: f64, b: f64, l: f64) -> f64 {
    let d = (a - b) / l;
    (-0.5 * d * d).exp()
}

/// κ(t) from a `(time, value)` table on the JAK-STAT window `[0, 60]`.
pub fn forcing_kappa(table: &[(f64, f64)], t: f64) -> Result<f64> {
    let (times, values) = table.iter().copied().unzip();
    Forcing::new(times, values, (0.0, 60.0))?.eval(t)
}
