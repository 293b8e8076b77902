use std::path::{Path, PathBuf};

use anyhow::anyhow;
use bode_core::ace::{accept_probability, ace_run, TraceRecord};
use bode_core::exec::Exec;
use bode_core::loss::{audit_rows, bank_losses, LossEstimate, LossKind, LossSpec};
use bode_core::models::{Design, ParamDraw, Unit};
use bode_core::rng::Seed;
use bode_core::solver::{sample_path, GridPrecompute};
use bode_core::stats::{mean, median, sample_variance};
use serde::{Deserialize, Serialize};

use crate::config::Prepared;
use crate::output::*;
use crate::Failure;

pub struct Ctx {
    pub prep: Prepared,
    pub seed: Seed,
    pub out: PathBuf,
    pub exec: Exec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSummary {
    pub name: String,
    pub repeats: usize,
    pub mean: f64,
    pub median: f64,
    /// Standard deviation of the estimates across repeats.
    pub spread: f64,
    pub mean_std_error: f64,
    /// Accept-test probability that this design beats the first one, from
    /// pooled loss samples.
    pub p_star_vs_first: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AceSummary {
    pub best_start: usize,
    pub start_estimates: Vec<LossEstimate>,
    pub cycle_estimates: Vec<Vec<f64>>,
    pub visits: usize,
    pub accepted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub command: String,
    pub model: String,
    pub loss: LossSpec,
    pub seed: u64,
    pub designs: Vec<DesignSummary>,
    #[serde(default)]
    pub ace: Option<AceSummary>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn summary(&self, command: &str, designs: Vec<DesignSummary>, ace: Option<AceSummary>) -> Summary {
        Summary {
            command: command.into(),
            model: self.prep.models[0].id().into(),
            loss: self.prep.cfg.loss.clone(),
            seed: self.seed.0,
            designs,
            ace,
        }
    }
}

fn io(e: anyhow::Error) -> Failure {
    Failure::Io(e)
}

pub fn solve(ctx: &Ctx) -> Result<(), Failure> {
    let sc = ctx
        .prep
        .cfg
        .solve
        .clone()
        .ok_or_else(|| Failure::Config(anyhow!("the solve command needs a \"solve\" section")))?;
    let model = &ctx.prep.models[0];
    let system = model.system();
    let mut settings = ctx.prep.settings;
    if let Some(n) = sc.n {
        if n < 3 {
            return Err(Failure::Config(anyhow!("solve.n must be at least 3")));
        }
        settings.n = n;
    }
    let (grid, kernel) = settings.grid_and_kernel(system.span()).map_err(Failure::from_core)?;
    let pre = GridPrecompute::new(grid, kernel).map_err(Failure::from_core)?;
    let obs = pre.observations(&[system.span().1]).map_err(Failure::from_core)?;
    let draw = ParamDraw { theta: sc.theta.clone(), u0: Some(sc.u0.clone()), omega: sc.omega, ..Default::default() };
    let unit = Unit { x: sc.x.clone(), u0: sc.u0.clone(), times: vec![] };
    let inp = model.unit_inputs(&draw, 0, &unit);
    if inp.theta.len() != model.theta_names().len() || inp.u0.len() != system.dim() {
        return Err(Failure::Config(anyhow!(
            "solve: {} expects {} parameters and a {}-dimensional initial state",
            model.id(),
            model.theta_names().len(),
            system.dim()
        )));
    }
    let seed = ctx.seed.derive_str("solve");
    let paths = ctx
        .exec
        .try_map(sc.n_draws, |i| {
            let mut rng = seed.stream(i as u64);
            sample_path(&pre, &obs, system, &inp.theta, &sc.x, &inp.u0, inp.delay, &mut rng)
        })
        .map_err(Failure::from_core)?;
    let t = pre.grid().points();
    let rows = paths.iter().enumerate().flat_map(|(draw, p)| {
        (0..p.dim()).flat_map(move |component| {
            t.iter().enumerate().map(move |(r, &t)| PathRow { draw, component, t, value: p.state(r)[component] })
        })
    });
    write_csv(&ctx.path("paths.csv"), CSV_SCHEMAS[0].1, rows).map_err(io)
}

/// `repeats` independent estimates for each design, sharing seeds across
/// designs so comparisons use common random numbers.
fn repeated(
    ctx: &Ctx,
    label: &str,
    designs: &[(String, Design)],
    repeats: usize,
) -> Result<(Vec<EvaluationRow>, Vec<DesignSummary>), Failure> {
    let ev = ctx.prep.evaluator(ctx.exec)?;
    let b = ctx.prep.cfg.loss.outer;
    let seed = ctx.seed.derive_str(label);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut first_pool: Option<Vec<f64>> = None;
    for (name, d) in designs {
        let mut pool = Vec::with_capacity(repeats * b);
        let mut ests = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let s = ev
                .loss_samples(d, seed.derive(r as u64), b)
                .map_err(|e| Failure::from_core(e.context(format!("design {name:?}, repeat {r}"))))?;
            let est = LossEstimate::from_samples(&s);
            rows.push(EvaluationRow {
                design: name.clone(),
                repeat: r,
                estimate: est.estimate,
                std_error: est.std_error,
                samples: est.samples,
            });
            ests.push(est);
            pool.extend(s);
        }
        let values: Vec<f64> = ests.iter().map(|e| e.estimate).collect();
        let p_star_vs_first = match &first_pool {
            Some(f) if f.len() >= 2 => Some(accept_probability(f, &pool).map_err(Failure::from_core)?),
            _ => None,
        };
        if first_pool.is_none() {
            first_pool = Some(pool);
        }
        summaries.push(DesignSummary {
            name: name.clone(),
            repeats,
            mean: mean(&values),
            median: if values.is_empty() { f64::NAN } else { median(&values) },
            spread: sample_variance(&values).sqrt(),
            mean_std_error: mean(&ests.iter().map(|e| e.std_error).collect::<Vec<_>>()),
            p_star_vs_first,
        });
    }
    Ok((rows, summaries))
}

pub fn evaluate(ctx: &Ctx, repeats: usize, audit: bool) -> Result<(), Failure> {
    let designs = vec![("initial".to_string(), ctx.prep.initial.clone())];
    let (rows, summaries) = repeated(ctx, "evaluate", &designs, repeats)?;
    write_csv(&ctx.path("evaluations.csv"), CSV_SCHEMAS[1].1, rows).map_err(io)?;
    if audit && !matches!(ctx.prep.cfg.loss.kind, LossKind::Constant(_)) {
        let ev = ctx.prep.evaluator(ctx.exec)?;
        let b = ctx.prep.cfg.loss.outer;
        let seed = ctx.seed.derive_str("evaluate").derive(0);
        let bank = ev.bank(&ctx.prep.initial, seed, b, ctx.prep.cfg.loss.inner_for(b)).map_err(Failure::from_core)?;
        let losses = bank_losses(ctx.prep.cfg.loss.kind, &bank, ctx.exec).map_err(Failure::from_core)?;
        write_csv(&ctx.path("audit.csv"), CSV_SCHEMAS[4].1, audit_rows(&bank, &losses)).map_err(io)?;
    }
    write_json(&ctx.path("summary.json"), &ctx.summary("evaluate", summaries, None)).map_err(io)
}

pub fn design(ctx: &Ctx) -> Result<(), Failure> {
    let ev = ctx.prep.evaluator(ctx.exec)?;
    let cfg = &ctx.prep.cfg.ace;
    let res = ace_run(&ev, cfg, Some(&ctx.prep.initial), ctx.seed.derive_str("design")).map_err(Failure::from_core)?;
    let model = ctx.prep.models[0].id();
    write_json(&ctx.path("design.json"), &DesignOutput::new(model, &res.design, Some(res.estimate.clone())))
        .map_err(io)?;
    write_csv(&ctx.path("trace.csv"), CSV_SCHEMAS[3].1, res.trace.iter().map(trace_row)).map_err(io)?;

    let mut named = vec![("ace".to_string(), res.design.clone()), ("initial".to_string(), ctx.prep.initial.clone())];
    for nd in &ctx.prep.cfg.compare {
        named.push((nd.name.clone(), ctx.prep.named(nd)?));
    }
    let seed = ctx.seed.derive_str("comparison");
    let mut rows = Vec::new();
    for (name, d) in &named {
        let s = ev.loss_samples(d, seed, cfg.b_test).map_err(Failure::from_core)?;
        let e = LossEstimate::from_samples(&s);
        rows.push(ComparisonRow { design: name.clone(), estimate: e.estimate, std_error: e.std_error, samples: e.samples });
    }
    write_csv(&ctx.path("comparison.csv"), CSV_SCHEMAS[2].1, rows).map_err(io)?;
    let ace = AceSummary {
        best_start: res.best_start,
        start_estimates: res.starts.iter().map(|s| s.estimate.clone()).collect(),
        cycle_estimates: res.starts.iter().map(|s| s.cycle_estimates.clone()).collect(),
        visits: res.trace.len(),
        accepted: res.trace.iter().filter(|t| t.accepted).count(),
    };
    write_json(&ctx.path("summary.json"), &ctx.summary("design", vec![], Some(ace))).map_err(io)
}

#[derive(Serialize)]
struct TraceRow {
    start: usize,
    cycle: usize,
    coord: usize,
    proposed: f64,
    p_star: f64,
    accepted: bool,
    lbar_current: f64,
    lbar_proposed: f64,
}

fn trace_row(t: &TraceRecord) -> TraceRow {
    TraceRow {
        start: t.start,
        cycle: t.cycle,
        coord: t.coord,
        proposed: t.proposed,
        p_star: t.p_star,
        accepted: t.accepted,
        lbar_current: t.lbar_current,
        lbar_proposed: t.lbar_proposed,
    }
}

pub fn compare(ctx: &Ctx, repeats: usize, extra: &[PathBuf]) -> Result<(), Failure> {
    let mut named = vec![("initial".to_string(), ctx.prep.initial.clone())];
    for nd in &ctx.prep.cfg.compare {
        named.push((nd.name.clone(), ctx.prep.named(nd)?));
    }
    for p in extra {
        let name = p.file_stem().map_or("design".into(), |s| s.to_string_lossy().into_owned());
        named.push((name, ctx.prep.design_file(p)?));
    }
    let (rows, summaries) = repeated(ctx, "compare", &named, repeats)?;
    write_csv(&ctx.path("evaluations.csv"), CSV_SCHEMAS[1].1, rows).map_err(io)?;
    write_json(&ctx.path("summary.json"), &ctx.summary("compare", summaries, None)).map_err(io)
}

pub fn validate_files(files: &[PathBuf]) -> Result<Vec<(PathBuf, &'static str)>, Failure> {
    files
        .iter()
        .map(|f| validate_file(f).map(|k| (f.clone(), k)).map_err(Failure::Config))
        .collect()
}

pub fn ensure_dir(p: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(p).map_err(|e| Failure::Io(anyhow!("creating {}: {e}", p.display())))
}
