use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking bounds and time separations.
pub const SEPARATION_TOL: f64 = 1e-9;

/// What a design coordinate controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordKind {
    Treatment { unit: usize, index: usize },
    Initial { unit: usize, component: usize },
    /// Entry `index` of observation-time set `set`. Times within a set must
    /// keep the minimum separation.
    Time { set: usize, index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub name: String,
    pub kind: CoordKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub coords: Vec<Coordinate>,
    pub values: Vec<f64>,
    pub min_separation: f64,
}

impl Design {
    pub fn new(coords: Vec<Coordinate>, values: Vec<f64>, min_separation: f64) -> Result<Self> {
        if coords.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} coordinates but {} values",
                coords.len(),
                values.len()
            )));
        }
        if !(min_separation.is_finite() && min_separation >= 0.0) {
            return Err(Error::invalid(format!("minimum separation must be >= 0, got {min_separation}")));
        }
        for c in &coords {
            if !(c.lower.is_finite() && c.upper.is_finite() && c.lower <= c.upper) {
                return Err(Error::invalid(format!("coordinate {} has bounds [{}, {}]", c.name, c.lower, c.upper)));
            }
        }
        Ok(Design { coords, values, min_separation })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_value(&self, i: usize, v: f64) -> Design {
        let mut d = self.clone();
        d.values[i] = v;
        d
    }

    /// Coordinate indices of the time set containing coordinate `i`, other
    /// than `i` itself. Empty for non-time coordinates.
    pub fn siblings(&self, i: usize) -> Vec<usize> {
        match self.coords[i].kind {
            CoordKind::Time { set, .. } => self
                .coords
                .iter()
                .enumerate()
                .filter(|(j, c)| *j != i && matches!(c.kind, CoordKind::Time { set: s, .. } if s == set))
                .map(|(j, _)| j)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Values of time set `set`, ordered by index.
    pub fn time_set(&self, set: usize) -> Vec<f64> {
        let mut entries: Vec<(usize, f64)> = self
            .coords
            .iter()
            .zip(&self.values)
            .filter_map(|(c, &v)| match c.kind {
                CoordKind::Time { set: s, index } if s == set => Some((index, v)),
                _ => None,
            })
            .collect();
        entries.sort_by_key(|e| e.0);
        entries.into_iter().map(|e| e.1).collect()
    }

    /// Value of the coordinate with the given kind.
    pub fn value_of(&self, kind: CoordKind) -> Option<f64> {
        self.coords.iter().position(|c| c.kind == kind).map(|i| self.values[i])
    }

    /// Human-readable list of every bound or separation violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (c, &v) in self.coords.iter().zip(&self.values) {
            if !v.is_finite() {
                out.push(format!("{} is not finite", c.name));
            } else if v < c.lower - SEPARATION_TOL || v > c.upper + SEPARATION_TOL {
                out.push(format!("{} = {v} outside [{}, {}]", c.name, c.lower, c.upper));
            }
        }
        for i in 0..self.coords.len() {
            for j in self.siblings(i) {
                if j > i && (self.values[i] - self.values[j]).abs() < self.min_separation - SEPARATION_TOL {
                    out.push(format!(
                        "{} = {} and {} = {} closer than {}",
                        self.coords[i].name, self.values[i], self.coords[j].name, self.values[j], self.min_separation
                    ));
                }
            }
        }
        out
    }

    pub fn is_feasible(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InfeasibleDesign(v))
        }
    }
}

/// Coordinates for one set of `n` observation times on `[lo, hi]`.
pub(crate) fn time_coords(set: usize, n: usize, lo: f64, hi: f64, prefix: &str) -> Vec<Coordinate> {
    (0..n)
        .map(|index| Coordinate {
            name: format!("{prefix}{}", index + 1),
            kind: CoordKind::Time { set, index },
            lower: lo,
            upper: hi,
        })
        .collect()
}
