//! Nested Monte Carlo estimates of expected loss.
//!
//! An expected-loss evaluation draws an outer joint sample `(ψᵢ, yᵢ)` and an
//! inner prior sample `ψ̃ⱼ` (one bank per candidate model), each with its own
//! solver path, then maps every outer index to a loss through
//! self-normalized importance weights `wⱼ ∝ π(yᵢ | ψ̃ⱼ)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{
    obs_moments, sample_paths, simulate_response, Design, Experiment, ExperimentModel, ObsMoments, ParamDraw,
    SolverSettings,
};
use crate::rng::Seed;
use crate::solver::{GridPrecompute, ObsPrecompute};
use crate::stats::{log_sum_exp, mean, normal_log_pdf, normalized_weights, std_error};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error of the posterior mean.
    Sel,
    /// Absolute error of the posterior median.
    Ael,
    /// Self-information.
    Sil,
    /// Zero-one model selection loss.
    Msl,
    /// Test stub: every loss sample equals the constant.
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Outer sample size B.
    #[serde(default = "default_outer")]
    pub outer: usize,
    /// Inner sample size; defaults to the outer size.
    #[serde(default)]
    pub inner: Option<usize>,
    /// Prior model probabilities for model selection; uniform by default.
    #[serde(default)]
    pub model_priors: Option<Vec<f64>>,
}

fn default_outer() -> usize {
    1000
}

impl LossSpec {
    pub fn new(kind: LossKind, outer: usize) -> Self {
        LossSpec { kind, outer, inner: None, model_priors: None }
    }

    pub fn inner_for(&self, outer: usize) -> usize {
        self.inner.unwrap_or(outer)
    }

    pub fn validate(&self, n_models: usize) -> Result<()> {
        if self.outer == 0 || self.inner == Some(0) {
            return Err(Error::invalid("loss sample sizes must be at least 1"));
        }
        if let LossKind::Constant(c) = self.kind {
            if !c.is_finite() {
                return Err(Error::invalid("constant loss must be finite"));
            }
        }
        if self.kind == LossKind::Msl && n_models < 2 {
            return Err(Error::invalid("model selection needs at least two candidate models"));
        }
        if self.kind != LossKind::Msl && n_models != 1 {
            return Err(Error::invalid("only model selection takes several candidate models"));
        }
        if let Some(p) = &self.model_priors {
            if p.len() != n_models || p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::invalid("model priors must be nonnegative, one per model"));
            }
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("model priors must sum to 1"));
            }
        }
        Ok(())
    }

    pub fn priors(&self, n_models: usize) -> Vec<f64> {
        self.model_priors.clone().unwrap_or_else(|| vec![1.0 / n_models as f64; n_models])
    }
}

/// Observation moments prepared for fast repeated log-density evaluation.
#[derive(Clone, Debug)]
pub struct PreparedMoments {
    mean: Vec<f64>,
    half_prec: Vec<f64>,
    log_norm: f64,
    point_mass: Vec<usize>,
}

impl PreparedMoments {
    pub fn new(m: &ObsMoments) -> Self {
        let mut half_prec = Vec::with_capacity(m.mean.len());
        let mut log_norm = 0.0;
        let mut point_mass = Vec::new();
        for (k, &v) in m.variance.iter().enumerate() {
            if v > 0.0 {
                half_prec.push(0.5 / v);
                log_norm -= 0.5 * (2.0 * std::f64::consts::PI * v).ln();
            } else {
                half_prec.push(0.0);
                point_mass.push(k);
            }
        }
        PreparedMoments { mean: m.mean.clone(), half_prec, log_norm, point_mass }
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        if self.point_mass.iter().any(|&k| y[k] != self.mean[k]) {
            return f64::NEG_INFINITY;
        }
        let q: f64 = y
            .iter()
            .zip(&self.mean)
            .zip(&self.half_prec)
            .map(|((yi, m), h)| {
                let r = yi - m;
                r * r * h
            })
            .sum();
        self.log_norm - q
    }
}

#[derive(Clone, Debug)]
pub struct OuterSample {
    pub model: usize,
    pub draw: ParamDraw,
    pub y: Vec<f64>,
    pub moments: ObsMoments,
}

#[derive(Clone, Debug)]
pub struct InnerSample {
    pub draw: ParamDraw,
    pub moments: ObsMoments,
}

/// Outer joint samples and per-model inner prior samples with everything the
/// estimators need. Log-likelihood rows are computed on demand so banks with
/// B = B̃ = 20000 stay within memory.
pub struct SampleBank {
    models: Vec<Arc<dyn ExperimentModel>>,
    priors: Vec<f64>,
    channels: Vec<usize>,
    outer: Vec<OuterSample>,
    inner: Vec<Vec<InnerSample>>,
    prepared: Vec<Vec<PreparedMoments>>,
    /// Per model and θ component, inner indices sorted by value.
    order: Vec<Vec<Vec<usize>>>,
}

impl SampleBank {
    /// Assembles a bank from explicit samples. `channels[k]` is the channel of
    /// observation slot `k`.
    pub fn from_parts(
        models: Vec<Arc<dyn ExperimentModel>>,
        priors: Vec<f64>,
        channels: Vec<usize>,
        outer: Vec<OuterSample>,
        inner: Vec<Vec<InnerSample>>,
    ) -> Result<Self> {
        if models.is_empty() || inner.len() != models.len() || priors.len() != models.len() {
            return Err(Error::invalid("one inner bank and prior probability per model is required"));
        }
        if inner.iter().any(|b| b.is_empty()) || outer.is_empty() {
            return Err(Error::invalid("sample banks must be nonempty"));
        }
        let n = channels.len();
        let bad = outer.iter().any(|o| o.y.len() != n || o.moments.mean.len() != n || o.model >= models.len())
            || inner.iter().flatten().any(|s| s.moments.mean.len() != n);
        if bad {
            return Err(Error::invalid("sample dimensions do not match the observation slots"));
        }
        let prepared = inner
            .iter()
            .map(|b| b.iter().map(|s| PreparedMoments::new(&s.moments)).collect())
            .collect();
        let order = inner
            .iter()
            .map(|b| {
                let p = b[0].draw.theta.len();
                (0..p)
                    .map(|l| {
                        let mut idx: Vec<usize> = (0..b.len()).collect();
                        idx.sort_by(|&a, &c| b[a].draw.theta[l].total_cmp(&b[c].draw.theta[l]).then(a.cmp(&c)));
                        idx
                    })
                    .collect()
            })
            .collect();
        Ok(SampleBank { models, priors, channels, outer, inner, prepared, order })
    }

    pub fn outer(&self) -> &[OuterSample] {
        &self.outer
    }

    pub fn inner(&self, model: usize) -> &[InnerSample] {
        &self.inner[model]
    }

    pub fn outer_len(&self) -> usize {
        self.outer.len()
    }

    pub fn inner_len(&self, model: usize) -> usize {
        self.inner[model].len()
    }

    /// Row `log π(yᵢ | ψ̃ⱼ)` over the inner bank of `model`.
    pub fn log_lik_row(&self, i: usize, model: usize) -> Vec<f64> {
        let y = &self.outer[i].y;
        self.prepared[model].iter().map(|p| p.log_density(y)).collect()
    }

    /// Dense `B × B̃` log-likelihood matrix for model 0, row-major. Meant for
    /// audits and tests on small banks.
    pub fn log_lik_matrix(&self) -> Vec<f64> {
        (0..self.outer.len()).flat_map(|i| self.log_lik_row(i, 0)).collect()
    }

    /// Normalized importance weights of outer sample `i` over model 0.
    pub fn weights(&self, i: usize) -> Result<Vec<f64>> {
        normalized_weights(&self.log_lik_row(i, 0)).ok_or(Error::WeightUnderflow { sample: i })
    }
}

/// Self-normalized importance estimate of `E(θ | yᵢ)`.
pub fn posterior_mean_hat(bank: &SampleBank, i: usize) -> Result<Vec<f64>> {
    let w = bank.weights(i)?;
    Ok(weighted_mean(&w, bank.inner(0)))
}

fn weighted_mean(w: &[f64], inner: &[InnerSample]) -> Vec<f64> {
    let p = inner[0].draw.theta.len();
    let mut out = vec![0.0; p];
    for (wj, s) in w.iter().zip(inner) {
        if *wj > 0.0 {
            for (o, t) in out.iter_mut().zip(&s.draw.theta) {
                *o += wj * t;
            }
        }
    }
    out
}

/// Component-wise weighted median of the inner θ sample.
///
/// Values are ordered and weights accumulated in that order; `z` is the last
/// order statistic with cumulative weight at most ½. When the cumulative
/// weight hits ½ exactly the midpoint of order statistics `z` and `z+1` is
/// returned, otherwise order statistic `z+1`.
pub fn posterior_median_hat(bank: &SampleBank, i: usize) -> Result<Vec<f64>> {
    let w = bank.weights(i)?;
    weighted_median(&w, bank.inner(0), &bank.order[0], i)
}

const HALF_TOL: f64 = 1e-12;

fn weighted_median(w: &[f64], inner: &[InnerSample], order: &[Vec<usize>], i: usize) -> Result<Vec<f64>> {
    order
        .iter()
        .enumerate()
        .map(|(l, idx)| {
            let mut cum = 0.0;
            let mut z = 0;
            while z < idx.len() && cum + w[idx[z]] <= 0.5 + HALF_TOL {
                cum += w[idx[z]];
                z += 1;
            }
            if z >= idx.len() {
                return Err(Error::WeightUnderflow { sample: i });
            }
            let next = inner[idx[z]].draw.theta[l];
            if z > 0 && (cum - 0.5).abs() <= HALF_TOL {
                Ok(0.5 * (inner[idx[z - 1]].draw.theta[l] + next))
            } else {
                Ok(next)
            }
        })
        .collect()
}

/// `log Î₂ − log Î₁` for outer sample `i`, with Î₁ averaging the likelihood at
/// the outer draw's own solution over the inner nuisance sample.
pub fn sil_hat(bank: &SampleBank, i: usize) -> Result<f64> {
    let row = bank.log_lik_row(i, 0);
    let b = row.len() as f64;
    let log_i2 = log_sum_exp(&row) - b.ln();
    let o = &bank.outer[i];
    let model = &bank.models[0];
    let own: Vec<f64> = bank
        .inner(0)
        .iter()
        .map(|s| {
            o.y.iter()
                .zip(&o.moments.mean)
                .zip(&bank.channels)
                .map(|((&y, &m), &c)| normal_log_pdf(y, m, model.obs_variance(c, m, &s.draw.gamma)))
                .sum::<f64>()
        })
        .collect();
    let log_i1 = log_sum_exp(&own) - b.ln();
    if !(log_i1.is_finite() && log_i2.is_finite()) {
        return Err(Error::WeightUnderflow { sample: i });
    }
    Ok(log_i2 - log_i1)
}

/// Log evidence `log π̂(yᵢ | m)` for every candidate model.
pub fn log_evidences(bank: &SampleBank, i: usize) -> Vec<f64> {
    (0..bank.models.len())
        .map(|m| {
            let row = bank.log_lik_row(i, m);
            log_sum_exp(&row) - (row.len() as f64).ln()
        })
        .collect()
}

/// Index of the model with the largest posterior probability; ties go to the
/// lower index.
pub fn select_model(log_evidence: &[f64], priors: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (m, (&e, &p)) in log_evidence.iter().zip(priors).enumerate() {
        let score = e + p.ln();
        if score == f64::NEG_INFINITY || score.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((m, score));
        }
    }
    best.map(|b| b.0)
}

/// Zero-one model selection loss for outer sample `i`.
pub fn msl_hat(bank: &SampleBank, i: usize) -> Result<f64> {
    let ev = log_evidences(bank, i);
    let m = select_model(&ev, &bank.priors).ok_or(Error::WeightUnderflow { sample: i })?;
    Ok(if m == bank.outer[i].model { 0.0 } else { 1.0 })
}

fn loss_at(kind: LossKind, bank: &SampleBank, i: usize) -> Result<f64> {
    let o = &bank.outer[i];
    match kind {
        LossKind::Sel => {
            let e = posterior_mean_hat(bank, i)?;
            Ok(o.draw.theta.iter().zip(&e).map(|(t, m)| (t - m) * (t - m)).sum())
        }
        LossKind::Ael => {
            let m = posterior_median_hat(bank, i)?;
            Ok(o.draw.theta.iter().zip(&m).map(|(t, m)| (t - m).abs()).sum())
        }
        LossKind::Sil => sil_hat(bank, i),
        LossKind::Msl => msl_hat(bank, i),
        LossKind::Constant(c) => Ok(c),
    }
}

/// Loss for every outer sample of `bank`.
pub fn bank_losses(kind: LossKind, bank: &SampleBank, exec: Exec) -> Result<Vec<f64>> {
    exec.try_map(bank.outer_len(), |i| loss_at(kind, bank, i))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl LossEstimate {
    pub fn from_samples(s: &[f64]) -> Self {
        LossEstimate { estimate: mean(s), std_error: std_error(s), samples: s.len() }
    }
}

/// One row of the optional bank audit export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub sample: usize,
    pub model: usize,
    pub loss: f64,
    pub max_weight: f64,
    pub effective_size: f64,
}

pub fn audit_rows(bank: &SampleBank, losses: &[f64]) -> Vec<AuditRow> {
    losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| {
            let (max_weight, effective_size) = match bank.weights(i) {
                Ok(w) => (
                    w.iter().copied().fold(0.0, f64::max),
                    1.0 / w.iter().map(|v| v * v).sum::<f64>(),
                ),
                Err(_) => (f64::NAN, 0.0),
            };
            AuditRow { sample: i, model: bank.outer[i].model, loss, max_weight, effective_size }
        })
        .collect()
}

fn time_key(times: &[f64]) -> Vec<u64> {
    times.iter().map(|t| t.to_bits()).collect()
}

/// Everything needed to evaluate expected loss at arbitrary designs: the
/// candidate models, the loss, the θ-independent solver precompute, and a
/// cache of observation precomputes keyed by observation times.
pub struct Evaluator {
    models: Vec<Arc<dyn ExperimentModel>>,
    spec: LossSpec,
    grid: Arc<GridPrecompute>,
    cache: Mutex<HashMap<Vec<u64>, Arc<ObsPrecompute>>>,
    exec: Exec,
}

const OBS_CACHE_LIMIT: usize = 4096;

impl Evaluator {
    pub fn new(
        models: Vec<Arc<dyn ExperimentModel>>,
        spec: LossSpec,
        settings: SolverSettings,
        exec: Exec,
    ) -> Result<Self> {
        spec.validate(models.len())?;
        let span = models[0].system().span();
        if models.iter().any(|m| m.system().span() != span) {
            return Err(Error::invalid("candidate models must share a time span"));
        }
        let (grid, kernel) = settings.grid_and_kernel(span)?;
        let grid = Arc::new(GridPrecompute::new(grid, kernel)?);
        Ok(Evaluator { models, spec, grid, cache: Mutex::new(HashMap::new()), exec })
    }

    pub fn model(&self) -> &Arc<dyn ExperimentModel> {
        &self.models[0]
    }

    pub fn models(&self) -> &[Arc<dyn ExperimentModel>] {
        &self.models
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn grid(&self) -> &Arc<GridPrecompute> {
        &self.grid
    }

    /// Observation precompute for a set of times, cached by exact time values.
    pub fn observations(&self, times: &[f64]) -> Result<Arc<ObsPrecompute>> {
        let key = time_key(times);
        if let Some(o) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(o.clone());
        }
        let o = Arc::new(self.grid.observations(times)?);
        let mut c = self.cache.lock().expect("cache lock");
        if c.len() >= OBS_CACHE_LIMIT {
            c.clear();
        }
        c.insert(key, o.clone());
        Ok(o)
    }

    fn experiment(&self, design: &Design) -> Result<(Experiment, Vec<Arc<ObsPrecompute>>)> {
        design.check()?;
        let exp = self.models[0].experiment(design)?;
        let obs = exp.units.iter().map(|u| self.observations(&u.times)).collect::<Result<Vec<_>>>()?;
        Ok((exp, obs))
    }

    /// Builds a bank with `outer` joint samples and `inner` prior samples
    /// per candidate model. Inner and outer draws use separate seed subtrees.
    pub fn bank(&self, design: &Design, seed: Seed, outer: usize, inner: usize) -> Result<SampleBank> {
        let (exp, obs) = self.experiment(design)?;
        let priors = self.spec.priors(self.models.len());
        let grid = &self.grid;
        let outer_seed = seed.derive_str("outer");
        let outer_samples = self.exec.try_map(outer, |i| {
            let mut rng = outer_seed.stream(i as u64);
            let model = if self.models.len() > 1 { pick(&priors, rng.random::<f64>()) } else { 0 };
            let m = self.models[model].as_ref();
            let draw = m.sample_prior(&mut rng);
            let paths = sample_paths(m, grid, &obs, &draw, &exp, &mut rng)?;
            let moments = obs_moments(m, &draw, &exp, &paths)?;
            let y = simulate_response(m, &draw, &exp, &paths, &mut rng)?;
            Ok(OuterSample { model, draw, y, moments })
        })?;
        let inner_samples = self
            .models
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let s = seed.derive_str("inner").derive(k as u64);
                self.exec.try_map(inner, |j| {
                    let mut rng = s.stream(j as u64);
                    let draw = m.sample_prior(&mut rng);
                    let paths = sample_paths(m.as_ref(), grid, &obs, &draw, &exp, &mut rng)?;
                    let moments = obs_moments(m.as_ref(), &draw, &exp, &paths)?;
                    Ok(InnerSample { draw, moments })
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let channels = exp.slots.iter().map(|s| s.channel).collect();
        SampleBank::from_parts(self.models.clone(), priors, channels, outer_samples, inner_samples)
    }

    /// `b` loss samples at `design`, with inner size from the loss settings (default `b`).
    pub fn loss_samples(&self, design: &Design, seed: Seed, b: usize) -> Result<Vec<f64>> {
        if b == 0 {
            return Err(Error::invalid("at least one loss sample is required"));
        }
        if let LossKind::Constant(c) = self.spec.kind {
            design.check()?;
            return Ok(vec![c; b]);
        }
        let bank = self.bank(design, seed, b, self.spec.inner_for(b))?;
        bank_losses(self.spec.kind, &bank, self.exec)
    }

    /// `L̂_B` with its standard error at the configured outer size.
    pub fn expected_loss(&self, design: &Design, seed: Seed) -> Result<LossEstimate> {
        let s = self.loss_samples(design, seed, self.spec.outer)?;
        Ok(LossEstimate::from_samples(&s))
    }
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Expected loss from an explicit set of loss samples, for callers that
/// already hold them.
pub fn mc_expected_loss(samples: &[f64]) -> LossEstimate {
    LossEstimate::from_samples(samples)
}
