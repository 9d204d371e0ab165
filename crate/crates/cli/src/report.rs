//! Machine-readable run reports. Field order is fixed by declaration order.

use std::path::Path;
use std::time::Instant;

use serde::{Serialize, Serializer};

use lorenc_core::metrics::{format_w_error, OverheadReport};

use crate::error::{CliError, CliResult, Status};

/// A W-Error value; exact recovery serializes as the string `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WError(pub f64);

impl Serialize for WError {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&format_w_error(self.0))
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LayerReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed_energy_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_restore_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_forward_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_error: Option<WError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gram_offdiag_mass: Option<Vec<f64>>,
}

impl LayerReport {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackSummary {
    pub method: String,
    pub scenario: String,
    pub tasks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_error: Option<WError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub seed: u64,
    pub layers: Vec<LayerReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_error: Option<WError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overhead: Option<OverheadReport>,
    pub wall_clock_secs: f64,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

/// Collects report fields during a command and stamps the elapsed time.
pub struct ReportBuilder {
    started: Instant,
    pub report: RunReport,
}

impl ReportBuilder {
    pub fn new(command: Vec<String>, seed: u64) -> Self {
        Self {
            started: Instant::now(),
            report: RunReport {
                command,
                seed,
                layers: Vec::new(),
                w_error: None,
                attack: None,
                overhead: None,
                wall_clock_secs: 0.0,
                assertions: Vec::new(),
                passed: true,
            },
        }
    }

    pub fn assert(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.report.passed &= passed;
        self.report.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Writes the report to `path` (or stdout) and maps pass/fail to a status.
    pub fn finish(mut self, path: Option<&Path>) -> CliResult<Status> {
        self.report.wall_clock_secs = self.started.elapsed().as_secs_f64();
        emit_json(&self.report, path)?;
        Ok(if self.report.passed {
            Status::Pass
        } else {
            Status::AssertionFailed
        })
    }
}

/// Pretty JSON to `path`, or stdout when absent.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::usage(format!("report: {e}")))?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
