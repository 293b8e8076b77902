use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use bode_core::ace::AceConfig;
use bode_core::exec::Exec;
use bode_core::loss::{Evaluator, LossKind, LossSpec};
use bode_core::models::{Design, ExperimentModel, Forcing, ModelConfig, SolverSettings};
use serde::{Deserialize, Serialize};

use crate::output::DesignOutput;
use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "$schema", default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelConfig,
    /// Further candidate models for model selection. They must accept the
    /// primary model's designs.
    #[serde(default)]
    pub alternatives: Vec<ModelConfig>,
    pub loss: LossSpec,
    /// Solver settings; the model's defaults when absent.
    #[serde(default)]
    pub solver: Option<SolverSettings>,
    #[serde(default)]
    pub ace: AceConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub seed: u64,
    /// Named designs to compare against.
    #[serde(default)]
    pub compare: Vec<NamedDesign>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    /// Two-column CSV `(t, value)` replacing the JAK-STAT forcing table.
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub forcing_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Starting design values in coordinate order; the model's baseline
    /// design when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub min_separation: Option<f64>,
    /// Per-coordinate bound overrides keyed by coordinate name.
    #[serde(default)]
    pub bounds: BTreeMap<String, (f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedDesign {
    pub name: String,
    /// Explicit values; the model's baseline design when both this and
    /// `file` are absent.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// A design JSON written by `bode design`.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub theta: Vec<f64>,
    #[serde(default)]
    pub x: Vec<f64>,
    pub u0: Vec<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    /// Grid size for this command only; the solver settings' otherwise.
    #[serde(default)]
    pub n: Option<usize>,
}

fn default_draws() -> usize {
    1000
}

/// A validated configuration with its models built.
pub struct Prepared {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub models: Vec<Arc<dyn ExperimentModel>>,
    pub settings: SolverSettings,
    /// Design template with bound and separation overrides applied.
    pub template: Design,
    pub initial: Design,
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

pub fn read_forcing_csv(path: &Path, domain: (f64, f64)) -> anyhow::Result<Forcing> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}: line {}: expected two columns", path.display(), k + 1);
        }
        match (rec[0].trim().parse::<f64>(), rec[1].trim().parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                t.push(a);
                v.push(b);
            }
            // A header row.
            _ if k == 0 => continue,
            _ => bail!("{}: line {}: non-numeric entry", path.display(), k + 1),
        }
    }
    Ok(Forcing::new(t, v, domain)?)
}

impl Prepared {
    pub fn load(path: &Path) -> Result<Prepared, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config_err)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("{}: invalid configuration", path.display()))
            .map_err(config_err)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Prepared::new(cfg, dir)
    }

    pub fn new(mut cfg: RunConfig, dir: PathBuf) -> Result<Prepared, Failure> {
        if let Some(p) = &cfg.forcing_csv {
            let p = dir.join(p);
            let ModelConfig::Jakstat(o) = &mut cfg.model else {
                return Err(config_err(anyhow!("forcing_csv applies to the jakstat model only")));
            };
            o.forcing = read_forcing_csv(&p, (0.0, o.horizon)).map_err(config_err)?;
        }
        let mut models = vec![cfg.model.build().map_err(config_err)?];
        for a in &cfg.alternatives {
            models.push(a.build().map_err(config_err)?);
        }
        if !cfg.alternatives.is_empty() && cfg.loss.kind != LossKind::Msl {
            return Err(config_err(anyhow!("alternatives are only used with the msl loss")));
        }
        cfg.loss.validate(models.len()).map_err(config_err)?;
        cfg.ace.validate().map_err(config_err)?;
        let settings = cfg.solver.unwrap_or_else(|| models[0].solver_defaults());
        if settings.n < 3 {
            return Err(config_err(anyhow!("solver.n must be at least 3")));
        }
        let mut template = models[0].baseline_design();
        for m in &models[1..] {
            let b = m.baseline_design();
            if b.coords != template.coords {
                return Err(config_err(anyhow!("alternative model {} has a different design space", m.id())));
            }
        }
        if let Some(d) = cfg.design.min_separation {
            template = Design::new(template.coords, template.values, d).map_err(config_err)?;
        }
        for (name, &(lo, hi)) in &cfg.design.bounds {
            let c = template
                .coords
                .iter_mut()
                .find(|c| &c.name == name)
                .ok_or_else(|| config_err(anyhow!("design.bounds: unknown coordinate {name:?}")))?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(config_err(anyhow!("design.bounds: bad bounds for {name:?}")));
            }
            c.lower = lo;
            c.upper = hi;
        }
        let initial = match &cfg.design.initial {
            Some(v) => with_values(&template, v).map_err(config_err)?,
            None => template.clone(),
        };
        initial.check().context("initial design").map_err(config_err)?;
        if let Some(f) = cfg.ace.fixed.iter().find(|f| !template.coords.iter().any(|c| &&c.name == f)) {
            return Err(config_err(anyhow!("ace.fixed: unknown coordinate {f:?}")));
        }
        Ok(Prepared { cfg, dir, models, settings, template, initial })
    }

    pub fn evaluator(&self, exec: Exec) -> Result<Evaluator, Failure> {
        Evaluator::new(self.models.clone(), self.cfg.loss.clone(), self.settings, exec).map_err(Failure::from_core)
    }

    /// Resolves a named design against the template.
    pub fn named(&self, nd: &NamedDesign) -> Result<Design, Failure> {
        let d = match (&nd.values, &nd.file) {
            (Some(_), Some(_)) => {
                return Err(config_err(anyhow!("design {:?}: give values or file, not both", nd.name)))
            }
            (Some(v), None) => with_values(&self.template, v).map_err(config_err)?,
            (None, Some(f)) => self.design_file(&self.dir.join(f))?,
            (None, None) => self.template.clone(),
        };
        d.check().with_context(|| format!("design {:?}", nd.name)).map_err(config_err)?;
        Ok(d)
    }

    pub fn design_file(&self, path: &Path) -> Result<Design, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config_err)?;
        let out: DesignOutput = serde_json::from_str(&text)
            .with_context(|| format!("{}: not a design file", path.display()))
            .map_err(config_err)?;
        with_values(&self.template, &out.values)
            .with_context(|| path.display().to_string())
            .map_err(config_err)
    }
}

pub fn with_values(template: &Design, values: &[f64]) -> anyhow::Result<Design> {
    if values.len() != template.len() {
        bail!("design has {} values, the model expects {}", values.len(), template.len());
    }
    Ok(Design { values: values.to_vec(), ..template.clone() })
}
