use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{LearnerKind, LearnerSpec};
use crate::dataio::{LabelMap, ParseOptions};
use crate::decompose::PlanEntry;
use crate::error::{Error, Result};
use crate::fuse::DcConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    /// Seeded cap on training instances (after splitting).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_train: Option<usize>,
    /// Seeded cap on test instances (after splitting).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_test: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            max_train: None,
            max_test: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guards {
    #[serde(default = "default_max_dense")]
    pub max_dense_features: usize,
    #[serde(default = "default_max_j")]
    pub max_intrinsic_dim: usize,
}

fn default_max_dense() -> usize {
    4096
}

fn default_max_j() -> usize {
    20_000
}

impl Default for Guards {
    fn default() -> Self {
        Self {
            max_dense_features: default_max_dense(),
            max_intrinsic_dim: default_max_j(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_model_name")]
    pub model: String,
    #[serde(default = "default_report_name")]
    pub report: String,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_model_name() -> String {
    "model.json".into()
}

fn default_report_name() -> String {
    "report.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            model: default_model_name(),
            report: default_report_name(),
        }
    }
}

/// Everything a run needs. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    /// Feature count override (raised to the largest index seen).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_features: Option<usize>,
    /// Raw label value treated as positive; sign convention when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<f64>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub scale: bool,
    pub plan: Vec<PlanEntry>,
    pub local: LearnerSpec,
    pub global: LearnerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<LearnerSpec>,
    #[serde(default)]
    pub guards: Guards,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dca_ridge: Option<f64>,
    #[serde(default)]
    pub cross_fit: bool,
}

fn check_learner(name: &str, spec: &LearnerSpec, problems: &mut Vec<String>) {
    if let Some(l) = spec.lambda {
        if !(l > 0.0 && l.is_finite()) {
            problems.push(format!("{name}.lambda must be positive, got {l}"));
        }
    }
    if let Some(s) = spec.sigma {
        if !(s > 0.0 && s.is_finite()) {
            problems.push(format!("{name}.sigma must be positive, got {s}"));
        }
    }
    if spec.kind == LearnerKind::Trbf && spec.order == 0 {
        problems.push(format!("{name}.order must be at least 1"));
    }
}

impl RunConfig {
    /// Parses TOML; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_path);
        if let Some(t) = self.test_path.as_mut() {
            fix(t);
        }
        fix(&mut self.output.dir);
    }

    /// Reports every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.plan.is_empty() {
            problems.push("plan needs at least one decomposition entry".to_string());
        }
        for (k, e) in self.plan.iter().enumerate() {
            if e.n_subspaces == 0 {
                problems.push(format!("plan[{k}] ({}): n_subspaces must be ≥ 1", e.method));
            }
            if e.group_size == 0 {
                problems.push(format!("plan[{k}] ({}): group_size must be ≥ 1", e.method));
            }
            if let Some(m) = self.n_features {
                if e.group_size > m {
                    problems.push(format!(
                        "plan[{k}] ({}): group_size {} exceeds n_features {m}",
                        e.method, e.group_size
                    ));
                }
            }
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            problems.push(format!(
                "split.train_fraction must be in (0, 1), got {}",
                self.split.train_fraction
            ));
        }
        if self.split.max_train == Some(0) || self.split.max_test == Some(0) {
            problems.push("split caps must be positive".to_string());
        }
        check_learner("local", &self.local, &mut problems);
        check_learner("global", &self.global, &mut problems);
        if let Some(b) = &self.baseline {
            check_learner("baseline", b, &mut problems);
        }
        if self.threads == Some(0) {
            problems.push("threads must be ≥ 1".to_string());
        }
        if let Some(r) = self.dca_ridge {
            if !(r > 0.0) {
                problems.push(format!("dca_ridge must be positive, got {r}"));
            }
        }
        if self.guards.max_dense_features == 0 || self.guards.max_intrinsic_dim == 0 {
            problems.push("guards must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            min_features: self.n_features.unwrap_or(0),
            label_map: self.positive_label.map_or(LabelMap::Sign, LabelMap::Positive),
        }
    }

    pub fn dc_config(&self) -> DcConfig {
        DcConfig {
            plan: self.plan.clone(),
            local: self.local,
            global: self.global,
            max_dense_features: self.guards.max_dense_features,
            max_intrinsic_dim: self.guards.max_intrinsic_dim,
            dca_ridge: self.dca_ridge,
            cross_fit: self.cross_fit,
            scale: self.scale,
            seed: self.seed,
        }
    }

    pub fn effective_threads(&self) -> usize {
        self.threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, std::num::NonZeroUsize::get)
        })
    }

    pub fn model_path(&self) -> PathBuf {
        self.output.dir.join(&self.output.model)
    }

    pub fn report_path(&self) -> PathBuf {
        self.output.dir.join(&self.output.report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::Method;

    const RCV1_STYLE: &str = r#"
        train_path = "rcv1_train.binary"
        seed = 3

        [split]
        train_fraction = 0.9
        seed = 1

        [[plan]]
        method = "rd"
        n_subspaces = 4
        group_size = 23618

        [[plan]]
        method = "abd"
        n_subspaces = 4
        group_size = 23618

        [local]
        kind = "linear"

        [global]
        kind = "trbf"
        order = 3
    "#;

    #[test]
    fn rcv1_plan_validates() {
        let cfg = RunConfig::from_toml(RCV1_STYLE).unwrap();
        assert_eq!(cfg.plan.len(), 2);
        assert_eq!(cfg.plan[1].method, Method::Abd);
        assert_eq!(cfg.global.order, 3);
        assert_eq!(cfg.guards, Guards::default());
    }

    #[test]
    fn zero_subspaces_rejected() {
        let text = RCV1_STYLE.replacen("n_subspaces = 4", "n_subspaces = 0", 1);
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, Error::Config(ref p) if p.len() == 1 && p[0].contains("n_subspaces")));
    }

    #[test]
    fn all_problems_reported_together() {
        let text = RCV1_STYLE
            .replacen("n_subspaces = 4", "n_subspaces = 0", 1)
            .replace("train_fraction = 0.9", "train_fraction = 1.5")
            .replace("order = 3", "order = 0\nlambda = -1.0");
        let Error::Config(problems) = RunConfig::from_toml(&text).unwrap_err() else {
            panic!()
        };
        assert_eq!(problems.len(), 4, "{problems:?}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = RCV1_STYLE.replace("order = 3", "order = 3\nsigmaa = 2.0");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
        let text = RCV1_STYLE.replace("seed = 3", "seed = 3\nthreadz = 2");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_toml(RCV1_STYLE).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
