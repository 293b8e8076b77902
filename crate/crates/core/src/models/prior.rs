use rand::Rng;
use rand_distr::{Distribution, Normal, Triangular, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Univariate prior laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dist {
    /// `log X ~ N(mu, variance)`; zero variance is a point mass at `exp(mu)`.
    LogNormal { mu: f64, variance: f64 },
    Uniform { lower: f64, upper: f64 },
    /// Symmetric triangular law on `[lower, upper]`.
    Triangular { lower: f64, upper: f64 },
    Fixed { value: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::LogNormal { mu, variance } => mu.is_finite() && variance.is_finite() && variance >= 0.0,
            Dist::Uniform { lower, upper } | Dist::Triangular { lower, upper } => {
                lower.is_finite() && upper.is_finite() && lower <= upper
            }
            Dist::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid prior {self:?}")))
        }
    }

    /// Closed support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Dist::LogNormal { mu, variance } if variance == 0.0 => (mu.exp(), mu.exp()),
            Dist::LogNormal { .. } => (0.0, f64::INFINITY),
            Dist::Uniform { lower, upper } | Dist::Triangular { lower, upper } => (lower, upper),
            Dist::Fixed { value } => (value, value),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::LogNormal { mu, variance } => {
                if variance == 0.0 {
                    mu.exp()
                } else {
                    Normal::new(mu, variance.sqrt()).expect("validated").sample(rng).exp()
                }
            }
            Dist::Uniform { lower, upper } => {
                if lower == upper {
                    lower
                } else {
                    Uniform::new_inclusive(lower, upper).expect("validated").sample(rng)
                }
            }
            Dist::Triangular { lower, upper } => {
                if lower == upper {
                    lower
                } else {
                    let mode = 0.5 * (lower + upper);
                    Triangular::new(lower, upper, mode).expect("validated").sample(rng)
                }
            }
            Dist::Fixed { value } => value,
        }
    }
}

pub(crate) fn validate_all(dists: &[Dist]) -> Result<()> {
    dists.iter().try_for_each(Dist::validate)
}
