//! Direct quadrature of the kernel convolution integrals from their
//! definitions. Infinite ranges are truncated 12 length scales beyond the
//! hull of the arguments for the squared-exponential kernel; the uniform
//! kernel is integrated over its exact support with every discontinuity
//! passed as a breakpoint.

use super::quadrature::integrate;

#[derive(Clone, Copy, Debug)]
pub struct OracleKernel {
    pub uniform: bool,
    pub lambda: f64,
    pub alpha: f64,
}

const TOL: f64 = 1e-13;

impl OracleKernel {
    pub fn r(&self, t: f64, z: f64) -> f64 {
        if self.uniform {
            if z > t - self.lambda && z < t + self.lambda {
                1.0
            } else {
                0.0
            }
        } else {
            let d = t - z;
            (-d * d / (2.0 * self.lambda * self.lambda)).exp()
        }
    }

    fn reach(&self) -> f64 {
        if self.uniform {
            self.lambda
        } else {
            12.0 * self.lambda
        }
    }

    fn range(&self, pts: &[f64]) -> (f64, f64) {
        let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - self.reach(), hi + self.reach())
    }

    fn breaks(&self, pts: &[f64]) -> Vec<f64> {
        let l = self.lambda;
        pts.iter().flat_map(|&p| [p - l, p, p + l]).collect()
    }

    /// Q(t, z) = ∫_a^t R(s, z) ds.
    pub fn q(&self, t: f64, z: f64, a: f64) -> f64 {
        integrate(|s| self.r(s, z), a, t, &self.breaks(&[z]), TOL)
    }

    pub fn s(&self, t1: f64, t2: f64) -> f64 {
        let (lo, hi) = self.range(&[t1, t2]);
        integrate(|z| self.r(t1, z) * self.r(t2, z), lo, hi, &self.breaks(&[t1, t2]), TOL) / self.alpha
    }

    pub fn w(&self, t1: f64, t2: f64, a: f64) -> f64 {
        let (lo, hi) = self.range(&[a, t1, t2]);
        let f = |z: f64| {
            let r = self.r(t2, z);
            if r == 0.0 {
                0.0
            } else {
                self.q(t1, z, a) * r
            }
        };
        integrate(f, lo, hi, &self.breaks(&[a, t1, t2]), TOL) / self.alpha
    }

    pub fn v(&self, t1: f64, t2: f64, a: f64) -> f64 {
        let (lo, hi) = self.range(&[a, t1, t2]);
        let f = |z: f64| self.q(t1, z, a) * self.q(t2, z, a);
        integrate(f, lo, hi, &self.breaks(&[a, t1, t2]), TOL) / self.alpha
    }
}
