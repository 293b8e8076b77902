use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use bode_core::loss::LossEstimate;
use bode_core::models::{CoordKind, Design};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateOutput {
    pub name: String,
    #[serde(flatten)]
    pub kind: CoordKind,
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentOutput {
    pub unit: usize,
    pub index: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialOutput {
    pub unit: usize,
    pub component: usize,
    pub value: f64,
}

/// Design file written by `bode design`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOutput {
    pub model: String,
    pub min_separation: f64,
    pub values: Vec<f64>,
    pub coordinates: Vec<CoordinateOutput>,
    pub treatments: Vec<TreatmentOutput>,
    pub initial_conditions: Vec<InitialOutput>,
    /// Observation times per time set, ascending.
    pub times: Vec<Vec<f64>>,
    #[serde(default)]
    pub estimate: Option<LossEstimate>,
}

impl DesignOutput {
    pub fn new(model: &str, d: &Design, estimate: Option<LossEstimate>) -> Self {
        let coordinates = d
            .coords
            .iter()
            .zip(&d.values)
            .map(|(c, &value)| CoordinateOutput {
                name: c.name.clone(),
                kind: c.kind,
                lower: c.lower,
                upper: c.upper,
                value,
            })
            .collect();
        let mut treatments = Vec::new();
        let mut initial_conditions = Vec::new();
        let mut n_sets = 0;
        for (c, &value) in d.coords.iter().zip(&d.values) {
            match c.kind {
                CoordKind::Treatment { unit, index } => treatments.push(TreatmentOutput { unit, index, value }),
                CoordKind::Initial { unit, component } => {
                    initial_conditions.push(InitialOutput { unit, component, value })
                }
                CoordKind::Time { set, .. } => n_sets = n_sets.max(set + 1),
            }
        }
        DesignOutput {
            model: model.to_string(),
            min_separation: d.min_separation,
            values: d.values.clone(),
            coordinates,
            treatments,
            initial_conditions,
            times: (0..n_sets)
                .map(|s| {
                    let mut t = d.time_set(s);
                    t.sort_by(f64::total_cmp);
                    t
                })
                .collect(),
            estimate,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathRow {
    pub draw: usize,
    pub component: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub design: String,
    pub repeat: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub design: String,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Known CSV outputs and their headers.
pub const CSV_SCHEMAS: [(&str, &[&str]); 5] = [
    ("paths", &["draw", "component", "t", "value"]),
    ("evaluations", &["design", "repeat", "estimate", "std_error", "samples"]),
    ("comparison", &["design", "estimate", "std_error", "samples"]),
    (
        "trace",
        &["start", "cycle", "coord", "proposed", "p_star", "accepted", "lbar_current", "lbar_proposed"],
    ),
    ("audit", &["sample", "model", "loss", "max_weight", "effective_size"]),
];

pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    // The header is written explicitly so an empty table still has one.
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn check_cell(column: &str, cell: &str) -> bool {
    match column {
        "design" => !cell.is_empty(),
        "accepted" => matches!(cell, "true" | "false"),
        "draw" | "component" | "repeat" | "samples" | "start" | "cycle" | "coord" | "sample" | "model" => {
            cell.parse::<u64>().is_ok()
        }
        _ => cell.parse::<f64>().is_ok(),
    }
}

/// Checks an emitted file against its schema; returns the schema name.
pub fn validate_file(path: &Path) -> anyhow::Result<&'static str> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let mut rdr = csv::Reader::from_path(path)?;
            let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
            let Some((name, cols)) = CSV_SCHEMAS.iter().find(|(_, cols)| cols.iter().eq(header.iter())) else {
                bail!("{}: unrecognized header {:?}", path.display(), header);
            };
            for (k, rec) in rdr.records().enumerate() {
                let rec = rec.with_context(|| format!("{}: row {}", path.display(), k + 1))?;
                if rec.len() != cols.len() {
                    bail!("{}: row {} has {} fields", path.display(), k + 1, rec.len());
                }
                for (col, cell) in cols.iter().zip(rec.iter()) {
                    if !check_cell(col, cell) {
                        bail!("{}: row {}: bad {col} value {cell:?}", path.display(), k + 1);
                    }
                }
            }
            Ok(name)
        }
        Some("json") => {
            let text = std::fs::read_to_string(path)?;
            if serde_json::from_str::<DesignOutput>(&text).is_ok() {
                return Ok("design");
            }
            if serde_json::from_str::<crate::commands::Summary>(&text).is_ok() {
                return Ok("summary");
            }
            if serde_json::from_str::<crate::config::RunConfig>(&text).is_ok() {
                return Ok("config");
            }
            bail!("{}: not a design, summary or config file", path.display())
        }
        _ => bail!("{}: unknown file type", path.display()),
    }
}
