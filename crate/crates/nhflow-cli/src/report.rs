//! Verdict reports and CSV time-series output.
//!
//! A report is self-contained for reproduction: it echoes the resolved
//! configuration, the seed and the crate version. Identical configs and
//! seeds produce byte-identical files except for the timestamp field.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ResolvedConfig;
use nhflow::integrate::Trajectory;

/// One named check with its measured value and verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    /// `upper` verifies `measured <= tolerance`; `lower` verifies
    /// `measured >= tolerance` (negative controls and order windows).
    pub kind: CheckKind,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Upper,
    Lower,
}

impl Check {
    pub fn upper(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            kind: CheckKind::Upper,
            pass: measured <= tolerance,
        }
    }

    pub fn lower(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: bound,
            kind: CheckKind::Lower,
            pass: measured >= bound,
        }
    }

    pub fn window(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Vec<Self> {
        let name = name.into();
        vec![
            Self::lower(format!("{name} (lower)"), measured, lo),
            Self::upper(format!("{name} (upper)"), measured, hi),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config: ResolvedConfig,
    pub seed: u64,
    pub version: String,
    pub timestamp_unix_s: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictReport {
    pub schema: u32,
    pub scenario: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub provenance: Provenance,
}

impl VerdictReport {
    pub fn new(config: &ResolvedConfig, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self {
            schema: 1,
            scenario: config.scenario.clone(),
            pass,
            checks,
            provenance: Provenance {
                config: config.clone(),
                seed: config.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp_unix_s: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            },
        }
    }

    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output dir {}", dir.display()))?;
        let path = dir.join(format!("{}_report.json", self.scenario));
        let json = serde_json::to_string_pretty(self).context("report serialization")?;
        std::fs::write(&path, json.as_bytes())
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn print_summary(&self) {
        for c in &self.checks {
            let rel = match c.kind {
                CheckKind::Upper => "<=",
                CheckKind::Lower => ">=",
            };
            println!(
                "[{}] {} :: {}: {:.6e} {rel} {:.3e}",
                if c.pass { "PASS" } else { "FAIL" },
                self.scenario,
                c.name,
                c.measured,
                c.tolerance
            );
        }
        println!(
            "{}: {}",
            self.scenario,
            if self.pass { "ALL CHECKS PASSED" } else { "CHECKS FAILED" }
        );
    }
}

/// A trajectory destined for one CSV file.
pub struct TrajectoryDump {
    /// File stem; the file becomes `<stem>.csv`.
    pub name: String,
    /// Label of the time column (`t` or `tau`).
    pub time_label: String,
    /// One name per state coordinate.
    pub columns: Vec<String>,
    pub traj: Trajectory,
}

impl TrajectoryDump {
    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output dir {}", dir.display()))?;
        let path = dir.join(format!("{}.csv", self.name));
        let file = std::fs::File::create(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);

        write!(w, "{}", self.time_label)?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        for ch in &self.traj.channels {
            write!(w, ",{}", ch.name)?;
        }
        writeln!(w)?;

        for (k, t) in self.traj.times.iter().enumerate() {
            write!(w, "{t:.17e}")?;
            for v in self.traj.states[k].iter() {
                write!(w, ",{v:.17e}")?;
            }
            for ch in &self.traj.channels {
                write!(w, ",{:.17e}", ch.values[k])?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// Column names for wedge coordinates of `so(n)`: `x_12, x_13, …`.
pub fn wedge_columns(prefix: &str, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 1..=n {
        for j in (i + 1)..=n {
            out.push(format!("{prefix}_{i}{j}"));
        }
    }
    out
}

/// Column names for an n-vector: `q_1, q_2, …`.
pub fn vector_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}
