//! Solver kernels and their convolution integrals.
//!
//! For a kernel `R(t, z) = r(t - z)` the derivative process has covariance
//! `S(t1, t2) = α⁻¹ ∫ R(t1, z) R(t2, z) dz`, the state is its integral from
//! the lower limit `a`, and
//!
//! ```text
//! Q(t1, t2) = ∫_a^{t1} R(s, t2) ds
//! W(t1, t2) = α⁻¹ ∫ Q(t1, z) R(t2, z) dz     cov(u(t1), u̇(t2))
//! V(t1, t2) = α⁻¹ ∫ Q(t1, z) Q(t2, z) dz     cov(u(t1), u(t2))
//! ```
//!
//! Writing `k = r ⋆ r` for the kernel autocorrelation, `K1` for its odd
//! antiderivative and `K2` for the even antiderivative of `K1`, everything
//! reduces to closed forms:
//!
//! ```text
//! S = α⁻¹ k(t1 - t2)
//! W = α⁻¹ [K1(t1 - t2) - K1(a - t2)]
//! V = α⁻¹ [K2(t1 - a) - K2(0) - K2(t1 - t2) + K2(a - t2)]
//! ```

use serde::{Deserialize, Serialize};
use libm::erf;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    SquaredExponential,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Length scale, in time units.
    pub lambda: f64,
    /// Prior precision scale.
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelIntegrals {
    pub q: f64,
    pub s: f64,
    pub w: f64,
    pub v: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lambda: f64, alpha: f64) -> Result<Self> {
        let spec = KernelSpec { kind, lambda, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(format!("kernel lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("kernel alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// `r(x)` with `R(t1, t2) = r(t1 - t2)`.
    fn profile(&self, x: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            KernelKind::SquaredExponential => (-x * x / (2.0 * l * l)).exp(),
            KernelKind::Uniform => {
                if x.abs() < l {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Antiderivative of `r`, zero at the origin.
    fn profile_integral(&self, x: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            KernelKind::SquaredExponential => l * (PI / 2.0).sqrt() * erf(x / (SQRT_2 * l)),
            KernelKind::Uniform => x.clamp(-l, l),
        }
    }

    /// Autocorrelation `k(x) = ∫ r(x + z) r(z) dz`.
    fn autocorr(&self, x: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            KernelKind::SquaredExponential => l * PI.sqrt() * (-x * x / (4.0 * l * l)).exp(),
            KernelKind::Uniform => (2.0 * l - x.abs()).max(0.0),
        }
    }

    /// Odd antiderivative of `k`.
    fn autocorr_1(&self, x: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            KernelKind::SquaredExponential => PI * l * l * erf(x / (2.0 * l)),
            KernelKind::Uniform => {
                let m = 2.0 * l;
                if x >= m {
                    2.0 * l * l
                } else if x <= -m {
                    -2.0 * l * l
                } else {
                    m * x - 0.5 * x * x.abs()
                }
            }
        }
    }

    /// Even antiderivative of `autocorr_1`.
    fn autocorr_2(&self, x: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            KernelKind::SquaredExponential => {
                let c = 2.0 * l;
                PI * l * l * (x * erf(x / c) + c / PI.sqrt() * (-(x / c) * (x / c)).exp())
            }
            KernelKind::Uniform => {
                let ax = x.abs();
                if ax >= 2.0 * l {
                    2.0 * l * l * ax - 4.0 * l * l * l / 3.0
                } else {
                    l * ax * ax - ax * ax * ax / 6.0
                }
            }
        }
    }

    pub fn q(&self, t1: f64, t2: f64, a: f64) -> f64 {
        self.profile_integral(t1 - t2) - self.profile_integral(a - t2)
    }

    pub fn s(&self, t1: f64, t2: f64) -> f64 {
        self.autocorr(t1 - t2) / self.alpha
    }

    pub fn w(&self, t1: f64, t2: f64, a: f64) -> f64 {
        (self.autocorr_1(t1 - t2) - self.autocorr_1(a - t2)) / self.alpha
    }

    pub fn v(&self, t1: f64, t2: f64, a: f64) -> f64 {
        let k2 = |x| self.autocorr_2(x);
        (k2(t1 - a) - k2(0.0) - k2(t1 - t2) + k2(a - t2)) / self.alpha
    }
}

pub fn kernel_r(spec: &KernelSpec, t1: f64, t2: f64) -> f64 {
    spec.profile(t1 - t2)
}

pub fn kernel_integrals(spec: &KernelSpec, t1: f64, t2: f64, a_lower: f64) -> KernelIntegrals {
    KernelIntegrals {
        q: spec.q(t1, t2, a_lower),
        s: spec.s(t1, t2),
        w: spec.w(t1, t2, a_lower),
        v: spec.v(t1, t2, a_lower),
    }
}
