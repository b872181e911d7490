use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use genbench::MetricReport;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;

pub const RECORD_FILE: &str = "run_record.json";
pub const REPORTS_FILE: &str = "reports.txt";
pub const CONFIG_FILE: &str = "config.toml";

/// Persisted outcome of one command: the resolved config, metric lines and warnings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub config: RunConfig,
    /// Metric reports in their line format.
    pub reports: Vec<String>,
    pub warnings: Vec<String>,
    /// Named output artifacts, relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunRecord {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed.unwrap_or_default(),
            started_unix: now(),
            finished_unix: 0.0,
            config: config.clone(),
            reports: Vec::new(),
            warnings: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn report(&mut self, r: &MetricReport) {
        self.reports.push(r.to_line());
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn output(&mut self, name: &str, path: impl Into<PathBuf>) {
        self.outputs
            .insert(name.to_string(), path.into().display().to_string());
    }

    /// Writes the record and the bare report lines into `dir`.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now();
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join(RECORD_FILE),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        fs::write(dir.join(CONFIG_FILE), self.config.to_toml())?;
        let mut lines = self.reports.join("\n");
        if !lines.is_empty() {
            lines.push('\n');
        }
        fs::write(dir.join(REPORTS_FILE), lines)?;
        Ok(())
    }

    /// Human-readable table of the reports.
    pub fn summary(&self) -> String {
        let mut out = format!("{} ({} reports)\n", self.command, self.reports.len());
        for line in &self.reports {
            if let Ok(r) = MetricReport::parse_line(line) {
                let mut row = format!(
                    "  {:<11} {:>14.6}  {} vs {}",
                    r.metric.as_str(),
                    r.value,
                    r.reference_tag,
                    r.candidate_tag
                );
                if let Some(std) = r.extras.get("std") {
                    row = format!(
                        "  {:<11} {:>14.6} ± {:.6}  {} vs {}",
                        r.metric.as_str(),
                        r.value,
                        std,
                        r.reference_tag,
                        r.candidate_tag
                    );
                }
                out.push_str(&row);
                out.push('\n');
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("  warning: {w}\n"));
        }
        out
    }
}
