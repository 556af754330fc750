//! Experiment reports: a JSON document with scalar metrics and curve tables,
//! plus CSV emission for the curves.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named table of f64 columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CurveTable {
    pub fn new(name: impl Into<String>, headers: &[&str]) -> Self {
        CurveTable {
            name: name.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(HarnessError::Runtime(format!(
                "curve {:?}: row width {} != header width {}",
                self.name,
                row.len(),
                self.headers.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Runtime(format!(
                "curve {:?}: non-finite value in row {row:?}",
                self.name
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// CSV with the exact header line `headers.join(",")`.
    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Everything needed to reproduce and inspect one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub artifact_version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub curves: Vec<CurveTable>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            artifact_version: ARTIFACT_VERSION.to_string(),
            config: config.clone(),
            seed: config.seed,
            metrics: BTreeMap::new(),
            curves: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        let name = name.into();
        if !value.is_finite() {
            return Err(HarnessError::Runtime(format!(
                "metric {name:?} is non-finite ({value})"
            )));
        }
        self.metrics.insert(name, value);
        Ok(())
    }

    pub fn curve(&self, name: &str) -> Option<&CurveTable> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_json()?.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Wall-clock guard: experiments check it at loop boundaries and abort
/// loudly instead of truncating.
pub struct Deadline {
    start: Instant,
    cap: Option<f64>,
}

impl Deadline {
    pub fn new(cap: Option<f64>) -> Self {
        Deadline {
            start: Instant::now(),
            cap,
        }
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn check(&self) -> Result<()> {
        if let Some(cap) = self.cap {
            let elapsed = self.elapsed_seconds();
            if elapsed > cap {
                return Err(HarnessError::Runtime(format!(
                    "wall-clock cap exceeded: {elapsed:.1}s > {cap:.1}s"
                )));
            }
        }
        Ok(())
    }
}
