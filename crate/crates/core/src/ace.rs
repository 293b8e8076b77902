//! Approximate coordinate exchange.
//!
//! Each visit to a design coordinate evaluates the Monte Carlo loss at `Q`
//! values spread over the coordinate's feasible set, fits a 1-D emulator,
//! proposes its minimizer and keeps the proposal with probability `p*` from a
//! two-sample Bayesian comparison on fresh loss samples.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::emulator::{normalize_intervals, EmulatorFit};
use crate::error::{Error, Result};
use crate::loss::{Evaluator, LossEstimate};
use crate::models::{CoordKind, Design};
use crate::rng::{Seed, StreamRng};
use crate::stats::mean;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AceConfig {
    pub cycles: usize,
    pub starts: usize,
    /// Emulator training size Q.
    pub q: usize,
    pub b_train: usize,
    pub b_test: usize,
    /// Visit coordinates in a random order each cycle instead of ascending.
    pub random_order: bool,
    /// Names of coordinates held at their initial values.
    pub fixed: Vec<String>,
}

impl Default for AceConfig {
    fn default() -> Self {
        AceConfig { cycles: 10, starts: 3, q: 20, b_train: 1000, b_test: 20000, random_order: false, fixed: vec![] }
    }
}

impl AceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::invalid("ace: starts must be at least 1"));
        }
        if self.q < crate::emulator::MIN_POINTS {
            return Err(Error::invalid(format!("ace: q must be at least {}", crate::emulator::MIN_POINTS)));
        }
        if self.b_train == 0 || self.b_test < 2 {
            return Err(Error::invalid("ace: b_train must be >= 1 and b_test >= 2"));
        }
        Ok(())
    }
}

/// Probability that the proposed design has the lower expected loss, from
/// the pooled two-sample t comparison with `2B − 2` degrees of freedom.
pub fn accept_probability(current: &[f64], proposed: &[f64]) -> Result<f64> {
    let b = current.len();
    if b < 2 || proposed.len() != b {
        return Err(Error::invalid("accept test needs two samples of equal length >= 2"));
    }
    if current.iter().chain(proposed).any(|v| !v.is_finite()) {
        return Err(Error::invalid("accept test samples must be finite"));
    }
    let (mc, mp) = (mean(current), mean(proposed));
    let ss = |s: &[f64], m: f64| s.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let bf = b as f64;
    let v = (ss(current, mc) + ss(proposed, mp)) / (2.0 * bf - 2.0);
    let diff = current.iter().sum::<f64>() - proposed.iter().sum::<f64>();
    if v == 0.0 {
        return Ok(if diff == 0.0 {
            0.5
        } else if diff > 0.0 {
            1.0
        } else {
            0.0
        });
    }
    let t = StudentsT::new(0.0, 1.0, 2.0 * bf - 2.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((1.0 - t.cdf(-diff / (2.0 * bf * v).sqrt())).clamp(0.0, 1.0))
}

/// Values of coordinate `coord` that keep `design` feasible with every other
/// coordinate fixed: its box minus open balls of radius δ around the other
/// times of its set.
pub fn feasible_interval(design: &Design, coord: usize) -> Result<Vec<(f64, f64)>> {
    let c = design.coords.get(coord).ok_or_else(|| Error::invalid(format!("no design coordinate {coord}")))?;
    let delta = design.min_separation;
    let mut pieces = vec![(c.lower, c.upper)];
    if delta > 0.0 {
        for s in design.siblings(coord) {
            let (a, b) = (design.values[s] - delta, design.values[s] + delta);
            pieces = pieces
                .into_iter()
                .flat_map(|(lo, hi)| {
                    if b <= lo || a >= hi {
                        vec![(lo, hi)]
                    } else {
                        [(lo, a), (b, hi)].into_iter().filter(|(x, y)| x <= y).collect()
                    }
                })
                .collect();
        }
    }
    let out = normalize_intervals(&pieces);
    if out.is_empty() {
        return Err(Error::EmptyFeasibleSet { coord });
    }
    Ok(out)
}

fn total_length(iv: &[(f64, f64)]) -> f64 {
    iv.iter().map(|(a, b)| b - a).sum()
}

/// Point at arc-length fraction `u ∈ [0, 1]` along a union of intervals.
fn along(iv: &[(f64, f64)], u: f64) -> f64 {
    let mut rest = u.clamp(0.0, 1.0) * total_length(iv);
    for &(a, b) in iv {
        if rest <= b - a {
            return a + rest;
        }
        rest -= b - a;
    }
    iv[iv.len() - 1].1
}

/// `q` training inputs evenly spread over the feasible set, each jittered by
/// up to ±5% of the spacing.
pub fn training_inputs(iv: &[(f64, f64)], q: usize, rng: &mut StreamRng) -> Vec<f64> {
    let step = 1.0 / (q - 1) as f64;
    (0..q)
        .map(|k| {
            let jitter = 0.05 * step * (2.0 * rng.random::<f64>() - 1.0);
            along(iv, k as f64 * step + jitter)
        })
        .collect()
}

/// A random feasible design: coordinates uniform in their boxes, and each
/// time set drawn as sorted uniform gaps that respect the minimum separation.
/// Coordinates named in `fixed` keep their template values, and time sets
/// containing one are kept whole.
pub fn random_feasible(template: &Design, fixed: &[String], rng: &mut StreamRng) -> Result<Design> {
    let mut d = template.clone();
    let is_fixed = |i: usize| fixed.contains(&template.coords[i].name);
    let mut sets: Vec<usize> = d
        .coords
        .iter()
        .filter_map(|c| match c.kind {
            CoordKind::Time { set, .. } => Some(set),
            _ => None,
        })
        .collect();
    sets.sort_unstable();
    sets.dedup();
    for (i, c) in d.coords.iter().enumerate() {
        if !matches!(c.kind, CoordKind::Time { .. }) && !is_fixed(i) {
            d.values[i] = rng.random_range(c.lower..=c.upper);
        }
    }
    for set in sets {
        let mut members: Vec<(usize, usize)> = d
            .coords
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.kind {
                CoordKind::Time { set: s, index } if s == set => Some((index, i)),
                _ => None,
            })
            .collect();
        members.sort_unstable();
        if members.iter().any(|m| is_fixed(m.1)) {
            continue;
        }
        let lo = members.iter().map(|m| d.coords[m.1].lower).fold(f64::NEG_INFINITY, f64::max);
        let hi = members.iter().map(|m| d.coords[m.1].upper).fold(f64::INFINITY, f64::min);
        let slack = hi - lo - (members.len() - 1) as f64 * d.min_separation;
        if slack < 0.0 {
            return Err(Error::invalid(format!("time set {set} cannot fit its minimum separation")));
        }
        let mut u: Vec<f64> = (0..members.len()).map(|_| lo + slack * rng.random::<f64>()).collect();
        u.sort_by(f64::total_cmp);
        for (k, (&(_, i), v)) in members.iter().zip(u).enumerate() {
            d.values[i] = (v + k as f64 * d.min_separation).min(hi);
        }
    }
    d.check()?;
    Ok(d)
}

/// One coordinate visit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub start: usize,
    pub cycle: usize,
    pub coord: usize,
    pub proposed: f64,
    pub p_star: f64,
    pub accepted: bool,
    pub lbar_current: f64,
    pub lbar_proposed: f64,
    /// Current design after the visit.
    #[serde(skip)]
    pub design: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct StartOutcome {
    pub initial: Design,
    pub design: Design,
    /// Loss estimate of the final design under the common final seed.
    pub estimate: LossEstimate,
    /// Running `λ̄` of the current design at the end of each cycle.
    pub cycle_estimates: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AceResult {
    pub design: Design,
    pub estimate: LossEstimate,
    pub best_start: usize,
    pub starts: Vec<StartOutcome>,
    pub trace: Vec<TraceRecord>,
}

struct StartRun {
    design: Design,
    trace: Vec<TraceRecord>,
    cycle_estimates: Vec<f64>,
}

fn visit_order(n: usize, random: bool, rng: &mut StreamRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if random {
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
    }
    order
}

fn run_start(ev: &Evaluator, cfg: &AceConfig, start: usize, initial: Design, seed: Seed) -> Result<StartRun> {
    let mut current = initial;
    let mut trace = Vec::new();
    let mut cycle_estimates = Vec::with_capacity(cfg.cycles);
    let mut running = f64::NAN;
    for cycle in 0..cfg.cycles {
        let cseed = seed.derive(cycle as u64);
        let order = visit_order(current.len(), cfg.random_order, &mut cseed.derive_str("order").stream(0));
        for i in order {
            if cfg.fixed.contains(&current.coords[i].name) {
                continue;
            }
            let ctx = |e: Error| e.context(format!("start {start}, cycle {cycle}, coordinate {i}"));
            let vseed = cseed.derive(i as u64);
            let iv = feasible_interval(&current, i).map_err(ctx)?;
            if total_length(&iv) <= 0.0 {
                continue;
            }
            let inputs = training_inputs(&iv, cfg.q, &mut vseed.derive_str("inputs").stream(0));
            // Common random numbers across the training points.
            let train_seed = vseed.derive_str("train");
            let z = ev
                .exec()
                .try_map(inputs.len(), |j| {
                    let s = ev.loss_samples(&current.with_value(i, inputs[j]), train_seed, cfg.b_train)?;
                    Ok(mean(&s))
                })
                .map_err(ctx)?;
            let points: Vec<(f64, f64)> = inputs.into_iter().zip(z).collect();
            let fit = EmulatorFit::fit(&points).map_err(ctx)?;
            let proposed_value = fit.minimize_mean(&iv).map_err(ctx)?;
            let proposal = current.with_value(i, proposed_value);
            let lc = ev.loss_samples(&current, vseed.derive_str("current"), cfg.b_test).map_err(ctx)?;
            let lp = ev.loss_samples(&proposal, vseed.derive_str("proposed"), cfg.b_test).map_err(ctx)?;
            let p_star = accept_probability(&lc, &lp).map_err(ctx)?;
            let u: f64 = vseed.derive_str("accept").stream(0).random();
            let accepted = u < p_star;
            let (lbar_current, lbar_proposed) = (mean(&lc), mean(&lp));
            if accepted {
                current = proposal;
            }
            running = if accepted { lbar_proposed } else { lbar_current };
            trace.push(TraceRecord {
                start,
                cycle,
                coord: i,
                proposed: proposed_value,
                p_star,
                accepted,
                lbar_current,
                lbar_proposed,
                design: current.values.clone(),
            });
        }
        cycle_estimates.push(running);
    }
    Ok(StartRun { design: current, trace, cycle_estimates })
}

/// Runs ACE from `cfg.starts` starting designs and returns the start whose
/// final design has the lowest loss estimate under a common seed.
///
/// Start 0 begins at `initial` (the model's baseline design when `None`);
/// the others begin at random feasible designs.
pub fn ace_run(ev: &Evaluator, cfg: &AceConfig, initial: Option<&Design>, seed: Seed) -> Result<AceResult> {
    cfg.validate()?;
    let first = initial.cloned().unwrap_or_else(|| ev.model().baseline_design());
    first.check()?;
    if let Some(f) = cfg.fixed.iter().find(|f| !first.coords.iter().any(|c| &&c.name == f)) {
        return Err(Error::invalid(format!("ace: unknown fixed coordinate {f:?}")));
    }
    let initials = (0..cfg.starts)
        .map(|s| {
            if s == 0 {
                Ok(first.clone())
            } else {
                random_feasible(&first, &cfg.fixed, &mut seed.derive_str("initial").stream(s as u64))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = ev.exec().try_map(cfg.starts, |s| {
        run_start(ev, cfg, s, initials[s].clone(), seed.derive_str("start").derive(s as u64))
    })?;
    let final_seed = seed.derive_str("final");
    let estimates = ev.exec().try_map(cfg.starts, |s| {
        let samples = ev.loss_samples(&runs[s].design, final_seed, cfg.b_test)?;
        Ok(LossEstimate::from_samples(&samples))
    })?;
    let best_start = (0..cfg.starts)
        .min_by(|&a, &b| estimates[a].estimate.total_cmp(&estimates[b].estimate).then(a.cmp(&b)))
        .expect("at least one start");
    let mut trace = Vec::new();
    let mut starts = Vec::with_capacity(cfg.starts);
    for ((run, est), init) in runs.into_iter().zip(estimates).zip(initials) {
        trace.extend(run.trace);
        starts.push(StartOutcome {
            initial: init,
            design: run.design,
            estimate: est,
            cycle_estimates: run.cycle_estimates,
        });
    }
    Ok(AceResult {
        design: starts[best_start].design.clone(),
        estimate: starts[best_start].estimate.clone(),
        best_start,
        starts,
        trace,
    })
}

/// Design after each visit of one start, replayed from the trace, for
/// feasibility audits.
pub fn replay(initial: &Design, trace: &[TraceRecord], start: usize) -> Vec<Design> {
    trace
        .iter()
        .filter(|r| r.start == start)
        .map(|r| Design { values: r.design.clone(), ..initial.clone() })
        .collect()
}
