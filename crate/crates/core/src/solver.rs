//! Sampling-based probabilistic ODE solver.
//!
//! The solver is split into a parameter-free initial phase
//! ([`GridPrecompute`], [`ObsPrecompute`]) and a cheap per-draw main phase
//! ([`sample_path`]). The initial phase grows the Cholesky factor of
//! `S(τ, τ) + Λ` one row per grid step, so the whole precompute costs
//! `O(N³)`; the main phase is `O(N² S)` per path.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::models::OdeSystem;

/// First jitter level, relative to the kernel diagonal `S(t, t)`.
pub const JITTER_START: f64 = 1e-10;
/// Last jitter level tried before reporting a factorization failure.
pub const JITTER_MAX: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("time grid needs N >= 2 points, got {n}")));
        }
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::invalid(format!("time grid needs T0 < T1, got [{t0}, {t1}]")));
        }
        let h = (t1 - t0) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
        points[n - 1] = t1;
        Ok(TimeGrid { points })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("time grid needs at least two points"));
        }
        if points.iter().any(|t| !t.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("time grid must be finite and nondecreasing"));
        }
        Ok(TimeGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Mean spacing; the exact spacing for uniform grids.
    pub fn spacing(&self) -> f64 {
        (self.end() - self.start()) / (self.len() - 1) as f64
    }

    /// Index of the grid point nearest to `t` among the first `upto + 1`
    /// points. Ties go to the lower index.
    pub fn nearest_index(&self, t: f64, upto: usize) -> usize {
        let pts = &self.points[..=upto];
        let k = pts.partition_point(|&p| p < t);
        if k == 0 {
            return 0;
        }
        if k > upto {
            return upto;
        }
        if (t - pts[k - 1]).abs() <= (pts[k] - t).abs() {
            k - 1
        } else {
            k
        }
    }
}

/// History for a delayed component: `u_c(t) = prehistory` for `t <= T0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelaySpec {
    pub component: usize,
    pub omega: f64,
    pub prehistory: f64,
}

impl DelaySpec {
    pub fn new(component: usize, omega: f64) -> Result<Self> {
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::invalid(format!("delay must be >= 0, got {omega}")));
        }
        Ok(DelaySpec { component, omega, prehistory: 0.0 })
    }
}

/// Lower-triangular factor stored as packed rows.
#[derive(Clone, Debug)]
struct PackedCholesky {
    n: usize,
    data: Vec<f64>,
}

impl PackedCholesky {
    fn with_capacity(n: usize) -> Self {
        PackedCholesky { n: 0, data: Vec::with_capacity(n * (n + 1) / 2) }
    }

    fn row(&self, i: usize) -> &[f64] {
        let off = i * (i + 1) / 2;
        &self.data[off..off + i + 1]
    }

    /// Solves `L y = b` using the leading `b.len()` rows.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for (i, &bi) in b.iter().enumerate() {
            let row = self.row(i);
            let dot: f64 = row[..i].iter().zip(&y).map(|(l, v)| l * v).sum();
            y.push((bi - dot) / row[i]);
        }
        y
    }

    /// Solves `Lᵀ x = y` in place, column-oriented so each step reads one row.
    fn backward(&self, mut y: Vec<f64>) -> Vec<f64> {
        for j in (0..y.len()).rev() {
            let row = self.row(j);
            let xj = y[j] / row[j];
            y[j] = xj;
            for (yi, l) in y[..j].iter_mut().zip(&row[..j]) {
                *yi -= l * xj;
            }
        }
        y
    }

    fn push_row(&mut self, offdiag: &[f64], pivot: f64) {
        debug_assert_eq!(offdiag.len(), self.n);
        self.data.extend_from_slice(offdiag);
        self.data.push(pivot);
        self.n += 1;
    }
}

/// Parameter-free quantities of the initial phase for one (grid, kernel).
#[derive(Clone, Debug)]
pub struct GridPrecompute {
    grid: TimeGrid,
    kernel: KernelSpec,
    jitter: f64,
    /// `a_r` for r = 1..N-1, packed; `a_r` has length r.
    weights: Vec<f64>,
    /// `C_r`, clamped at zero.
    variances: Vec<f64>,
    /// Diagonal of `Λ_N`; the first entry is zero.
    lambda_diag: Vec<f64>,
    factor: PackedCholesky,
}

impl GridPrecompute {
    pub fn new(grid: TimeGrid, kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        let mut rel = JITTER_START;
        loop {
            match Self::build(&grid, &kernel, rel) {
                Ok(pre) => return Ok(pre),
                Err(step) if rel < JITTER_MAX * 0.5 => {
                    let _ = step;
                    rel *= 10.0;
                }
                Err(step) => {
                    return Err(Error::Factorization {
                        step,
                        context: "initial phase",
                        jitter: rel,
                    })
                }
            }
        }
    }

    fn build(grid: &TimeGrid, kernel: &KernelSpec, rel_jitter: f64) -> std::result::Result<Self, usize> {
        let tau = grid.points();
        let n = tau.len();
        let a0 = tau[0];
        let diag_s = kernel.s(a0, a0);
        let jitter = rel_jitter * diag_s;

        let mut factor = PackedCholesky::with_capacity(n);
        let mut weights = Vec::with_capacity(n * (n - 1) / 2);
        let mut variances = Vec::with_capacity(n - 1);
        let mut lambda_diag = Vec::with_capacity(n);

        lambda_diag.push(0.0);
        let p0 = diag_s + jitter;
        if !(p0 > 0.0) {
            return Err(1);
        }
        factor.push_row(&[], p0.sqrt());

        for r in 1..n {
            let t = tau[r];
            let w: Vec<f64> = tau[..r].iter().map(|&q| kernel.w(t, q, a0)).collect();
            let sv: Vec<f64> = tau[..r].iter().map(|&q| kernel.s(t, q)).collect();

            let yw = factor.forward(&w);
            let c = kernel.v(t, t, a0) - yw.iter().map(|v| v * v).sum::<f64>();
            variances.push(c.max(0.0));
            weights.extend(factor.backward(yw));

            let ys = factor.forward(&sv);
            let ss: f64 = ys.iter().map(|v| v * v).sum();
            let cdot = (kernel.s(t, t) - ss).max(0.0);
            lambda_diag.push(cdot);

            let pivot2 = kernel.s(t, t) + cdot + jitter - ss;
            if !(pivot2 > 0.0 && pivot2.is_finite()) {
                return Err(r);
            }
            factor.push_row(&ys, pivot2.sqrt());
        }

        Ok(GridPrecompute {
            grid: grid.clone(),
            kernel: *kernel,
            jitter: rel_jitter,
            weights,
            variances,
            lambda_diag,
            factor,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Relative jitter level that was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `a_r` for `r` in `1..N` (1-based, as in the update recursion).
    pub fn a(&self, r: usize) -> &[f64] {
        assert!(r >= 1 && r < self.grid.len(), "a_r defined for r in 1..N");
        let off = (r - 1) * r / 2;
        &self.weights[off..off + r]
    }

    /// `C_r` for `r` in `1..N`.
    pub fn c(&self, r: usize) -> f64 {
        self.variances[r - 1]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn lambda_diag(&self) -> &[f64] {
        &self.lambda_diag
    }

    /// Dense `B_N = (S(τ, τ) + Λ_N)⁻¹`. Only for inspection; the sampler
    /// works through the factor.
    pub fn b_n(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut b = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.factor.backward(self.factor.forward(&e));
            for (i, v) in col.into_iter().enumerate() {
                b[(i, j)] = v;
            }
        }
        b
    }

    /// Builds `D_j` and `E_j` for one set of observation times.
    pub fn observations(&self, times: &[f64]) -> Result<ObsPrecompute> {
        let tau = self.grid.points();
        let (lo, hi) = (self.grid.start(), self.grid.end());
        if let Some(&bad) = times.iter().find(|&&t| !(t >= lo && t <= hi)) {
            return Err(Error::invalid(format!(
                "observation time {bad} outside solver span [{lo}, {hi}]"
            )));
        }
        let a0 = lo;
        let n = tau.len();
        let m = times.len();
        let mut d = DMatrix::zeros(m, n);
        let mut y_rows: Vec<Vec<f64>> = Vec::with_capacity(m);
        for (l, &t) in times.iter().enumerate() {
            let w: Vec<f64> = tau.iter().map(|&q| self.kernel.w(t, q, a0)).collect();
            let y = self.factor.forward(&w);
            let row = self.factor.backward(y.clone());
            for (k, v) in row.into_iter().enumerate() {
                d[(l, k)] = v;
            }
            y_rows.push(y);
        }
        let mut e = DMatrix::zeros(m, m);
        for l in 0..m {
            for k in 0..=l {
                let dot: f64 = y_rows[l].iter().zip(&y_rows[k]).map(|(p, q)| p * q).sum();
                let v = self.kernel.v(times[l], times[k], a0) - dot;
                e[(l, k)] = v;
                e[(k, l)] = v;
            }
        }
        let e_factor = psd_sqrt(&e)?;
        Ok(ObsPrecompute { times: times.to_vec(), d, e, e_factor })
    }
}

/// Symmetric square root `F` with `F Fᵀ = E`, clamping tiny negative
/// eigenvalues from round-off.
fn psd_sqrt(e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = e.nrows();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let scale = (0..m).map(|i| e[(i, i)].abs()).fold(0.0, f64::max);
    let tol = JITTER_MAX * scale.max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(e.clone());
    if let Some(i) = eig.eigenvalues.iter().position(|&ev| ev < -tol || !ev.is_finite()) {
        return Err(Error::Factorization {
            step: i,
            context: "observation covariance E_j",
            jitter: JITTER_MAX,
        });
    }
    let mut f = eig.eigenvectors.clone();
    for (j, ev) in eig.eigenvalues.iter().enumerate() {
        let s = ev.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

/// `D_j`, `E_j` for one observation-time vector.
#[derive(Clone, Debug)]
pub struct ObsPrecompute {
    times: Vec<f64>,
    d: DMatrix<f64>,
    e: DMatrix<f64>,
    e_factor: DMatrix<f64>,
}

impl ObsPrecompute {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }
}

/// Initial phase for a grid plus the observation sets of one design.
#[derive(Clone, Debug)]
pub struct SolverPrecompute {
    pub grid: Arc<GridPrecompute>,
    pub obs: Vec<Arc<ObsPrecompute>>,
}

pub fn precompute(grid: TimeGrid, kernel: KernelSpec, obs_sets: &[Vec<f64>]) -> Result<SolverPrecompute> {
    let g = GridPrecompute::new(grid, kernel)?;
    let obs = obs_sets
        .iter()
        .map(|t| g.observations(t).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolverPrecompute { grid: Arc::new(g), obs })
}

/// One stochastic solution path.
#[derive(Clone, Debug)]
pub struct PathDraw {
    dim: usize,
    states: Vec<f64>,
    gradients: Vec<f64>,
    observed: Vec<f64>,
}

impl PathDraw {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sampled state at grid index `r` (0-based).
    pub fn state(&self, r: usize) -> &[f64] {
        &self.states[r * self.dim..(r + 1) * self.dim]
    }

    /// Gradient `f_{r+1}` at grid index `r` (0-based).
    pub fn gradient(&self, r: usize) -> &[f64] {
        &self.gradients[r * self.dim..(r + 1) * self.dim]
    }

    /// Sampled state at the `l`-th observation time.
    pub fn at_obs(&self, l: usize) -> &[f64] {
        &self.observed[l * self.dim..(l + 1) * self.dim]
    }

    pub fn n_obs(&self) -> usize {
        self.observed.len() / self.dim.max(1)
    }

    pub fn into_observed(self) -> Vec<f64> {
        self.observed
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Main phase: draws one path for parameters `theta`, treatment `x`, and
/// initial state `u0`, then the states at the observation times of `obs`.
#[allow(clippy::too_many_arguments)]
pub fn sample_path<R: Rng + ?Sized>(
    pre: &GridPrecompute,
    obs: &ObsPrecompute,
    system: &dyn OdeSystem,
    theta: &[f64],
    x: &[f64],
    u0: &[f64],
    delay: Option<DelaySpec>,
    rng: &mut R,
) -> Result<PathDraw> {
    let s = system.dim();
    if u0.len() != s {
        return Err(Error::invalid(format!("initial state has {} entries, system has {s}", u0.len())));
    }
    if obs.d.ncols() != pre.grid.len() {
        return Err(Error::invalid("observation precompute built on a different grid"));
    }
    if let Some(d) = delay {
        if d.component >= s {
            return Err(Error::invalid(format!("delayed component {} out of range", d.component)));
        }
    }
    let tau = pre.grid.points();
    let n = tau.len();
    let t0 = tau[0];
    let mut states = vec![0.0; n * s];
    let mut grads = vec![0.0; n * s];
    states[..s].copy_from_slice(u0);

    let lagged_at = |states: &[f64], r: usize| -> Option<f64> {
        delay.map(|d| {
            let target = tau[r] - d.omega;
            if target <= t0 {
                d.prehistory
            } else {
                states[pre.grid.nearest_index(target, r) * s + d.component]
            }
        })
    };

    let eval = |states: &[f64], grads: &mut [f64], r: usize| -> Result<()> {
        let lag = lagged_at(states, r);
        let (u, out) = (&states[r * s..(r + 1) * s], &mut grads[r * s..(r + 1) * s]);
        system.rhs(tau[r], u, lag, theta, x, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteGradient { step: r, theta: theta.to_vec() })
        }
    };

    eval(&states, &mut grads, 0)?;
    let mut mean = vec![0.0; s];
    for r in 1..n {
        mean.copy_from_slice(u0);
        for (q, &aq) in pre.a(r).iter().enumerate() {
            let g = &grads[q * s..(q + 1) * s];
            for (m, gv) in mean.iter_mut().zip(g) {
                *m += aq * gv;
            }
        }
        let sd = pre.c(r).sqrt();
        for (k, m) in mean.iter().enumerate() {
            states[r * s + k] = m + sd * normal(rng);
        }
        eval(&states, &mut grads, r)?;
    }

    let m = obs.times.len();
    let mut observed = vec![0.0; m * s];
    let mut z = vec![0.0; m];
    for k in 0..s {
        z.iter_mut().for_each(|v| *v = normal(rng));
        for l in 0..m {
            let drow = obs.d.row(l);
            let drift: f64 = (0..n).map(|q| drow[q] * grads[q * s + k]).sum();
            let noise: f64 = (0..m).map(|p| obs.e_factor[(l, p)] * z[p]).sum();
            observed[l * s + k] = u0[k] + drift + noise;
        }
    }

    Ok(PathDraw { dim: s, states, gradients: grads, observed })
}
