//! Expert state-action records and their JSON-lines file format.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{BipartiteState, SCHEMA};
use crate::error::{Error, Result};
use crate::milp::{MilpInstance, ShiftVector};

/// A bound change on one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tightening {
    pub var: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Applies `tightenings` in order to the global bounds of `instance`.
pub fn node_bounds(instance: &MilpInstance, tightenings: &[Tightening]) -> (Vec<f64>, Vec<f64>) {
    let mut lower = instance.lower.clone();
    let mut upper = instance.upper.clone();
    for t in tightenings {
        lower[t.var] = t.lower;
        upper[t.var] = t.upper;
    }
    (lower, upper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSample {
    pub schema: String,
    pub instance: String,
    pub depth: usize,
    /// Bound changes from the root to the sampled node.
    #[serde(default)]
    pub tightenings: Vec<Tightening>,
    pub state: BipartiteState,
    /// Index into `candidates`.
    pub action: usize,
    /// Variable indices, identical to `state.candidates`.
    pub candidates: Vec<usize>,
    /// Present on augmented samples only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftVector>,
    /// Links an original to its shifted partners in augmented files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<usize>,
}

impl ExpertSample {
    pub fn new(
        instance: &str,
        depth: usize,
        tightenings: Vec<Tightening>,
        state: BipartiteState,
        action: usize,
    ) -> Self {
        ExpertSample {
            schema: SCHEMA.into(),
            instance: instance.into(),
            depth,
            tightenings,
            candidates: state.candidates.clone(),
            state,
            action,
            shift: None,
            pair_id: None,
        }
    }

    pub fn action_var(&self) -> usize {
        self.candidates[self.action]
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Schema {
                expected: SCHEMA.into(),
                found: self.schema.clone(),
            });
        }
        if self.action >= self.candidates.len() || self.candidates != self.state.candidates {
            return Err(Error::Shape(format!(
                "sample from {}: action {} outside {} candidates",
                self.instance,
                self.action,
                self.candidates.len()
            )));
        }
        self.state.check_invariants().map_err(Error::Shape)
    }
}

pub fn write_samples(path: &Path, samples: &[ExpertSample]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<ExpertSample>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: ExpertSample = serde_json::from_str(&line)?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}
