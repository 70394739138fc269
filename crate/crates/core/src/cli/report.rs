use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::decompose::Method;
use crate::error::Result;
use crate::fuse::{Metrics, TrainTimings};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Hash of the exact score bit patterns, for comparing runs.
pub fn scores_hash(scores: &[f64]) -> String {
    let bytes: Vec<u8> = scores.iter().flat_map(|s| s.to_bits().to_le_bytes()).collect();
    sha256_hex(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(role: &str, path: &Path) -> Result<Self> {
        Ok(Self {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: Method,
    pub seconds: f64,
}

/// Wall-clock seconds. Stages are disjoint; `total_wall` covers all of them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub parse: f64,
    pub scaling: f64,
    /// Fits run concurrently, so these overlap and sum to more than `decomposition`.
    pub decomposition_per_method: Vec<MethodTiming>,
    pub decomposition: f64,
    pub apply: f64,
    pub local_training: f64,
    pub fusion: f64,
    pub prediction: f64,
    pub write: f64,
    pub total_wall: f64,
}

impl StageTimings {
    pub fn absorb(&mut self, t: &TrainTimings) {
        self.scaling = t.scaling;
        self.decomposition_per_method = t
            .decomposition_per_method
            .iter()
            .map(|&(method, seconds)| MethodTiming { method, seconds })
            .collect();
        self.decomposition = t.decomposition;
        self.apply = t.apply;
        self.local_training = t.local_training;
        self.fusion = t.fusion;
    }

    pub fn stage_sum(&self) -> f64 {
        self.parse
            + self.scaling
            + self.decomposition
            + self.apply
            + self.local_training
            + self.fusion
            + self.prediction
            + self.write
    }

    fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("parse".to_string(), self.parse), ("scaling".into(), self.scaling)];
        rows.push(("decomposition".into(), self.decomposition));
        for (k, m) in self.decomposition_per_method.iter().enumerate() {
            rows.push((format!("  [{k}] {}", m.method), m.seconds));
        }
        rows.extend([
            ("apply".to_string(), self.apply),
            ("local training".into(), self.local_training),
            ("fusion".into(), self.fusion),
            ("prediction".into(), self.prediction),
            ("write".into(), self.write),
            ("total".into(), self.total_wall),
        ]);
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub data: DataSummary,
    pub metrics: Option<Metrics>,
    pub scores_sha256: Option<String>,
    pub timings: StageTimings,
    pub config: Option<RunConfig>,
    pub artifacts: Vec<Artifact>,
}

pub fn format_error_rate(rate: f64) -> String {
    format!("{rate:.2}")
}

fn timing_table(out: &mut String, timings: &[(String, f64)]) {
    let _ = writeln!(out, "{:<24}{:>12}", "Stage", "Time(s)");
    let _ = writeln!(out, "{}", "-".repeat(36));
    for (name, secs) in timings {
        let _ = writeln!(out, "{name:<24}{secs:>12.4}");
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Format(e.to_string()))
    }

    /// Fixed-width table: timings, then the error rate and confusion counts.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}  seed={} threads={}  M={} train={} test={}",
            self.command, self.seed, self.threads, self.data.n_features, self.data.n_train, self.data.n_test
        );
        timing_table(&mut out, &self.timings.rows());
        if let Some(m) = &self.metrics {
            let _ = writeln!(out, "{}", "-".repeat(36));
            let _ = writeln!(out, "{:<24}{:>12}", "Error Rate(%)", format_error_rate(m.error_rate));
            let _ = writeln!(out, "{:<24}{:>12}", "TP / FN", format!("{} / {}", m.true_pos, m.false_neg));
            let _ = writeln!(out, "{:<24}{:>12}", "FP / TN", format!("{} / {}", m.false_pos, m.true_neg));
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        write_pair(dir, stem, &self.to_json(), &self.to_table())
    }
}

pub(crate) fn write_pair(dir: &Path, stem: &str, json: &str, table: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let j = dir.join(format!("{stem}.json"));
    let t = dir.join(format!("{stem}.txt"));
    std::fs::write(&j, json)?;
    std::fs::write(&t, table)?;
    Ok((j, t))
}

/// `100·(base − dc)/base`; zero when the errors agree, `None` when the
/// baseline is perfect and DC is not.
pub fn relative_reduction(base: f64, dc: f64) -> Option<f64> {
    if base == dc {
        Some(0.0)
    } else if base == 0.0 {
        None
    } else {
        Some(100.0 * (base - dc) / base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum BaselineOutcome {
    Ran { metrics: Metrics, seconds: f64 },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub threads: usize,
    pub data: DataSummary,
    pub dc: Metrics,
    pub dc_seconds: f64,
    pub dc_timings: StageTimings,
    pub baseline: BaselineOutcome,
    /// Relative error reduction of DC over the baseline, in percent.
    pub reduction_percent: Option<f64>,
    pub config: RunConfig,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "bench  seed={} threads={}  M={} train={} test={}",
            self.seed, self.threads, self.data.n_features, self.data.n_train, self.data.n_test
        );
        let _ = writeln!(out, "{:<16}{:>12}{:>16}", "Method", "Time(s)", "Error Rate(%)");
        let _ = writeln!(out, "{}", "-".repeat(44));
        match &self.baseline {
            BaselineOutcome::Ran { metrics, seconds } => {
                let _ = writeln!(
                    out,
                    "{:<16}{:>12.4}{:>16}",
                    "baseline",
                    seconds,
                    format_error_rate(metrics.error_rate)
                );
            }
            BaselineOutcome::Skipped { reason } => {
                let _ = writeln!(out, "{:<16}{:>12}{:>16}  ({reason})", "baseline", "-", "skipped");
            }
        }
        let _ = writeln!(
            out,
            "{:<16}{:>12.4}{:>16}",
            "DC",
            self.dc_seconds,
            format_error_rate(self.dc.error_rate)
        );
        let reduction = self.reduction_percent.map_or("n/a".to_string(), |r| format!("{r:.2}%"));
        let _ = writeln!(out, "{:<28}{:>16}", "error reduction", reduction);
        out
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        write_pair(dir, stem, &self.to_json(), &self.to_table())
    }
}
