//! One-dimensional GP emulator of a noisy loss slice.
//!
//! Inputs are scaled to `[0, 1]` over their range and outputs standardized
//! before fitting; the fitted model is a constant mean (the sample mean) plus
//! a squared-exponential GP with a white-noise term.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 4;
/// Smallest noise variance, relative to the variance of the training values.
pub const NOISE_FLOOR: f64 = 1e-8;
const GRID_POINTS: usize = 1000;
const LOG_BOUNDS: [(f64, f64); 3] = [(-9.2, 9.2), (-6.9, 4.6), (-18.4, 4.6)];

/// Kernel hyperparameters in the original units of the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

#[derive(Clone, Debug)]
pub struct EmulatorFit {
    x: Vec<f64>,
    z: Vec<f64>,
    hyper: Hyper,
    mean: f64,
    /// `K⁻¹(z − mean)`.
    weights: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// True when every marginal-likelihood start failed.
    pub fallback: bool,
}

fn se(a: f64, b: f64, signal: f64, length: f64) -> f64 {
    let r = (a - b) / length;
    signal * (-0.5 * r * r).exp()
}

fn gram(x: &[f64], h: &Hyper) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        se(x[i], x[j], h.signal_variance, h.length_scale) + if i == j { h.noise_variance } else { 0.0 }
    })
}

struct Scaled {
    x: Vec<f64>,
    z: Vec<f64>,
    xr: f64,
    zs: f64,
}

impl Scaled {
    fn new(x: &[f64], z: &[f64]) -> Self {
        let x0 = x.iter().copied().fold(f64::INFINITY, f64::min);
        let x1 = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xr = x1 - x0;
        let zm = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - zm) * (v - zm)).sum::<f64>() / z.len() as f64;
        let zs = if var > 0.0 { var.sqrt() } else { 1.0 };
        Scaled {
            x: x.iter().map(|v| (v - x0) / xr).collect(),
            z: z.iter().map(|v| (v - zm) / zs).collect(),
            xr,
            zs,
        }
    }

    fn hyper(&self, log: &[f64]) -> Hyper {
        Hyper {
            signal_variance: log[0].exp() * self.zs * self.zs,
            length_scale: log[1].exp() * self.xr,
            noise_variance: log[2].exp().max(NOISE_FLOOR) * self.zs * self.zs,
        }
    }
}

struct NegLogLik<'a>(&'a Scaled);

impl CostFunction for NegLogLik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        if p.iter().zip(LOG_BOUNDS).any(|(v, (lo, hi))| !(lo..=hi).contains(v)) {
            return Ok(f64::MAX);
        }
        let h = Hyper {
            signal_variance: p[0].exp(),
            length_scale: p[1].exp(),
            noise_variance: p[2].exp().max(NOISE_FLOOR),
        };
        let Some(chol) = Cholesky::new(gram(&self.0.x, &h)) else {
            return Ok(f64::MAX);
        };
        let z = DVector::from_column_slice(&self.0.z);
        let a = chol.solve(&z);
        let logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        let v = 0.5 * z.dot(&a) + logdet;
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

fn starts() -> [[f64; 3]; 5] {
    let l = |v: f64| v.ln();
    [
        [0.0, l(0.1), l(0.1)],
        [0.0, l(0.3), l(0.1)],
        [0.0, l(1.0), l(0.01)],
        [l(0.3), l(0.05), l(0.3)],
        [l(3.0), l(2.0), l(0.01)],
    ]
}

fn ml_ii(s: &Scaled) -> Option<Vec<f64>> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x0 in starts() {
        let simplex: Vec<Vec<f64>> = std::iter::once(x0.to_vec())
            .chain((0..3).map(|k| {
                let mut v = x0.to_vec();
                v[k] += 0.7;
                v
            }))
            .collect();
        let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(1e-7) else { continue };
        let Ok(res) = Executor::new(NegLogLik(s), solver).configure(|st| st.max_iters(400)).run() else {
            continue;
        };
        let st = res.state();
        let (Some(p), c) = (st.get_best_param(), st.get_best_cost()) else { continue };
        if c < f64::MAX && best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((p.clone(), c));
        }
    }
    best.map(|b| b.0)
}

fn distinct(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn sorted_points(points: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if points.iter().any(|(d, z)| !(d.is_finite() && z.is_finite())) {
        return Err(Error::invalid("emulator training points must be finite"));
    }
    let mut p = points.to_vec();
    // Sorting makes the fit independent of input order.
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (x, z): (Vec<f64>, Vec<f64>) = p.into_iter().unzip();
    if distinct(&x) < MIN_POINTS {
        return Err(Error::invalid(format!("emulator needs at least {MIN_POINTS} distinct inputs")));
    }
    Ok((x, z))
}

impl EmulatorFit {
    /// Fits by maximizing the marginal likelihood over five starts, falling
    /// back to length scale range/10 and noise at 10% of the value variance.
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        let (x, z) = sorted_points(points)?;
        let s = Scaled::new(&x, &z);
        let (hyper, fallback) = match ml_ii(&s) {
            Some(p) => (s.hyper(&p), false),
            None => (s.hyper(&[0.0, 0.1f64.ln(), 0.1f64.ln()]), true),
        };
        let mut fit = Self::build(x, z, hyper)?;
        fit.fallback = fallback;
        Ok(fit)
    }

    /// Fits with fixed hyperparameters.
    pub fn fit_with(points: &[(f64, f64)], hyper: Hyper) -> Result<Self> {
        if !(hyper.signal_variance > 0.0 && hyper.length_scale > 0.0 && hyper.noise_variance >= 0.0) {
            return Err(Error::invalid("emulator hyperparameters must be positive"));
        }
        let (x, z) = sorted_points(points)?;
        Self::build(x, z, hyper)
    }

    fn build(x: Vec<f64>, z: Vec<f64>, hyper: Hyper) -> Result<Self> {
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let chol = Cholesky::new(gram(&x, &hyper)).ok_or(Error::Factorization {
            step: 0,
            context: "emulator covariance",
            jitter: hyper.noise_variance,
        })?;
        let r = DVector::from_iterator(z.len(), z.iter().map(|v| v - mean));
        let weights = chol.solve(&r);
        Ok(EmulatorFit { x, z, hyper, mean, weights, chol, fallback: false })
    }

    pub fn hyper(&self) -> Hyper {
        self.hyper
    }

    pub fn inputs(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    fn kvec(&self, d: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|&xi| se(d, xi, self.hyper.signal_variance, self.hyper.length_scale)),
        )
    }

    pub fn mean(&self, d: f64) -> f64 {
        self.mean + self.kvec(d).dot(&self.weights)
    }

    /// Predictive mean and variance of the latent loss at `d`.
    pub fn predict(&self, d: f64) -> (f64, f64) {
        let k = self.kvec(d);
        let v = self.chol.l().solve_lower_triangular(&k).expect("nonsingular factor");
        let var = (self.hyper.signal_variance - v.norm_squared()).max(0.0);
        (self.mean + k.dot(&self.weights), var)
    }

    /// Predictive variance of a new noisy evaluation at `d`.
    pub fn predictive_variance(&self, d: f64) -> f64 {
        self.predict(d).1 + self.hyper.noise_variance
    }

    /// `(d, mean, sd)` on `n` evenly spaced points over the training hull.
    pub fn curve(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let (a, b) = (self.x[0], self.x[self.x.len() - 1]);
        (0..n)
            .map(|i| {
                let d = if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
                let (m, v) = self.predict(d);
                (d, m, v.sqrt())
            })
            .collect()
    }

    /// Minimizes the predictive mean over a union of closed intervals: a
    /// 1000-point grid over the set, then golden-section refinement in the
    /// winning cell.
    pub fn minimize_mean(&self, feasible: &[(f64, f64)]) -> Result<f64> {
        let grid = feasible_grid(feasible, GRID_POINTS)?;
        let (mut best, mut best_val) = (grid[0].0, f64::INFINITY);
        let mut cell = (grid[0].0, grid[0].0);
        for (k, &(d, iv)) in grid.iter().enumerate() {
            let m = self.mean(d);
            if m < best_val {
                best_val = m;
                best = d;
                let prev = if k > 0 && grid[k - 1].1 == iv { grid[k - 1].0 } else { d };
                let next = grid.get(k + 1).filter(|g| g.1 == iv).map_or(d, |g| g.0);
                cell = (prev, next);
            }
        }
        if cell.1 > cell.0 {
            let solver = GoldenSectionSearch::new(cell.0, cell.1)
                .and_then(|s| s.with_tolerance(1e-6))
                .map_err(|e| Error::invalid(e.to_string()))?;
            let run = Executor::new(MeanAt(self), solver).configure(|st| st.param(best).max_iters(200)).run();
            if let Ok(r) = run {
                if let Some(&d) = r.state().get_best_param() {
                    let d = d.clamp(cell.0, cell.1);
                    if self.mean(d) < best_val {
                        best = d;
                    }
                }
            }
        }
        Ok(best)
    }
}

struct MeanAt<'a>(&'a EmulatorFit);

impl CostFunction for MeanAt<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, d: &f64) -> std::result::Result<f64, ArgminError> {
        Ok(self.0.mean(*d))
    }
}

/// Normalizes a union of closed intervals: drops empty ones, sorts and
/// merges overlaps.
pub fn normalize_intervals(intervals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = intervals.iter().copied().filter(|(a, b)| a <= b).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// About `n` points covering every interval, spread by length, tagged with
/// the index of their interval. Every interval contributes its endpoints.
pub fn feasible_grid(feasible: &[(f64, f64)], n: usize) -> Result<Vec<(f64, usize)>> {
    let iv = normalize_intervals(feasible);
    if iv.is_empty() {
        return Err(Error::invalid("empty feasible set"));
    }
    let total: f64 = iv.iter().map(|(a, b)| b - a).sum();
    let mut out = Vec::with_capacity(n + 2 * iv.len());
    for (k, &(a, b)) in iv.iter().enumerate() {
        if b == a || total == 0.0 {
            out.push((a, k));
            continue;
        }
        let m = ((n as f64 * (b - a) / total).round() as usize).max(2);
        out.extend((0..m).map(|i| (a + (b - a) * i as f64 / (m - 1) as f64, k)));
    }
    Ok(out)
}
