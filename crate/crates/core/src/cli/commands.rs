use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::{
    relative_reduction, scores_hash, write_pair, Artifact, BaselineOutcome, BenchReport,
    DataSummary, RunReport, StageTimings,
};
use crate::classify::Model;
use crate::dataio::{load_libsvm, split, Dataset, LabelMap, MaxAbsScaler, ParseOptions, SplitSpec};
use crate::decompose::{block_residual, fit_plan, FitOptions, Method};
use crate::error::{Error, ErrorClass, Result, Stage};
use crate::fuse::{evaluate, predict_dc, train_dc};
use crate::persist::{load_model, save_model};

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(vec![format!("cannot start {threads} worker threads: {e}")]))?;
    Ok(pool.install(f))
}

fn cap(ds: Dataset, limit: Option<usize>, seed: u64) -> Result<Dataset> {
    match limit {
        Some(n) if n < ds.n_instances() => {
            let mut idx: Vec<usize> = (0..ds.n_instances()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(n);
            idx.sort_unstable();
            ds.subset(&idx)
        }
        _ => Ok(ds),
    }
}

/// Train and test sets as the config describes them, with a common width.
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    pub inputs: Vec<Artifact>,
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    let opts = cfg.parse_options();
    let stage = |e: Error| e.in_stage(Stage::Parse);
    let full = load_libsvm(&cfg.train_path, &opts).map_err(stage)?;
    let mut inputs = vec![Artifact::of("train", &cfg.train_path)?];
    let (train, test) = match &cfg.test_path {
        Some(path) => {
            let test_opts = ParseOptions {
                min_features: full.n_features(),
                ..opts
            };
            let test = load_libsvm(path, &test_opts).map_err(stage)?;
            inputs.push(Artifact::of("test", path)?);
            let width = test.n_features();
            (full.with_min_features(width), test)
        }
        None => split(
            &full,
            &SplitSpec {
                train_fraction: cfg.split.train_fraction,
                seed: cfg.split.seed,
            },
        )
        .map_err(stage)?,
    };
    let train = cap(train, cfg.split.max_train, cfg.split.seed ^ 0x7EA1)?;
    let test = cap(test, cfg.split.max_test, cfg.split.seed ^ 0x7E57)?;
    Ok(LoadedData { train, test, inputs })
}

fn summary(data: &LoadedData) -> DataSummary {
    DataSummary {
        n_features: data.train.n_features(),
        n_train: data.train.n_instances(),
        n_test: data.test.n_instances(),
    }
}

/// Trains the pipeline, evaluates it on the held-out set, and writes the
/// model plus `report.{json,txt}` into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let threads = cfg.effective_threads();
    with_threads(threads, || train_inner(cfg, threads))?
}

fn train_inner(cfg: &RunConfig, threads: usize) -> Result<RunReport> {
    let wall = Instant::now();
    let mut timings = StageTimings::default();

    let data = load_data(cfg)?;
    timings.parse = wall.elapsed().as_secs_f64();

    let (model, train_timings) = train_dc(&data.train, &cfg.dc_config())?;
    timings.absorb(&train_timings);

    let t = Instant::now();
    let pred = predict_dc(&model, &data.test)?;
    let metrics = evaluate(&pred.labels, data.test.labels())?;
    timings.prediction = t.elapsed().as_secs_f64();

    let t = Instant::now();
    std::fs::create_dir_all(&cfg.output.dir)?;
    let model_path = cfg.model_path();
    save_model(&model, &model_path)?;
    let mut artifacts = data.inputs.clone();
    artifacts.push(Artifact::of("model", &model_path)?);
    timings.write = t.elapsed().as_secs_f64();
    timings.total_wall = wall.elapsed().as_secs_f64();

    let report = RunReport {
        command: "train".into(),
        seed: cfg.seed,
        threads,
        data: summary(&data),
        metrics: Some(metrics),
        scores_sha256: Some(scores_hash(&pred.scores)),
        timings,
        config: Some(cfg.clone()),
        artifacts,
    };
    write_report(&report, cfg)?;
    Ok(report)
}

fn write_report(report: &RunReport, cfg: &RunConfig) -> Result<()> {
    let stem = Path::new(&cfg.output.report)
        .file_stem()
        .map_or("report".into(), |s| s.to_string_lossy().into_owned());
    report.write(&cfg.output.dir, &stem)?;
    Ok(())
}

pub struct EvalRequest {
    pub model: PathBuf,
    pub test: PathBuf,
    pub label_map: LabelMap,
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
}

/// Scores a saved model on a labeled file.
pub fn cmd_eval(req: &EvalRequest) -> Result<RunReport> {
    with_threads(req.threads, || eval_inner(req))?
}

fn eval_inner(req: &EvalRequest) -> Result<RunReport> {
    let wall = Instant::now();
    let mut timings = StageTimings::default();
    let model = load_model(&req.model)?;
    let opts = ParseOptions {
        min_features: model.n_features,
        label_map: req.label_map,
    };
    let test = load_libsvm(&req.test, &opts).map_err(|e| e.in_stage(Stage::Parse))?;
    timings.parse = wall.elapsed().as_secs_f64();

    let t = Instant::now();
    let pred = predict_dc(&model, &test)?;
    let metrics = evaluate(&pred.labels, test.labels())?;
    timings.prediction = t.elapsed().as_secs_f64();
    timings.total_wall = wall.elapsed().as_secs_f64();

    let report = RunReport {
        command: "eval".into(),
        seed: model.config.seed,
        threads: req.threads,
        data: DataSummary {
            n_features: model.n_features,
            n_train: 0,
            n_test: test.n_instances(),
        },
        metrics: Some(metrics),
        scores_sha256: Some(scores_hash(&pred.scores)),
        timings,
        config: None,
        artifacts: vec![Artifact::of("model", &req.model)?, Artifact::of("test", &req.test)?],
    };
    if let Some(dir) = &req.out_dir {
        report.write(dir, "eval")?;
    }
    Ok(report)
}

/// DC pipeline against a single learner on the undecomposed features, on
/// the same split. A baseline refused by the guards is reported as skipped.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let baseline_spec = cfg
        .baseline
        .ok_or_else(|| Error::Config(vec!["bench needs a [baseline] learner".into()]))?;
    let threads = cfg.effective_threads();
    with_threads(threads, || {
        let wall = Instant::now();
        let mut timings = StageTimings::default();
        let data = load_data(cfg)?;
        timings.parse = wall.elapsed().as_secs_f64();

        let dc_start = Instant::now();
        let (model, train_timings) = train_dc(&data.train, &cfg.dc_config())?;
        timings.absorb(&train_timings);
        let t = Instant::now();
        let pred = predict_dc(&model, &data.test)?;
        timings.prediction = t.elapsed().as_secs_f64();
        let dc_seconds = dc_start.elapsed().as_secs_f64();
        let dc = evaluate(&pred.labels, data.test.labels())?;

        let base_start = Instant::now();
        let baseline = match run_baseline(cfg, &baseline_spec, &data) {
            Ok(metrics) => BaselineOutcome::Ran {
                metrics,
                seconds: base_start.elapsed().as_secs_f64(),
            },
            Err(e) if e.class() == ErrorClass::Config => BaselineOutcome::Skipped {
                reason: e.to_string(),
            },
            Err(e) => return Err(e),
        };
        timings.total_wall = wall.elapsed().as_secs_f64();

        let reduction_percent = match &baseline {
            BaselineOutcome::Ran { metrics, .. } => relative_reduction(metrics.error_rate, dc.error_rate),
            BaselineOutcome::Skipped { .. } => None,
        };
        let report = BenchReport {
            seed: cfg.seed,
            threads,
            data: summary(&data),
            dc,
            dc_seconds,
            dc_timings: timings,
            baseline,
            reduction_percent,
            config: cfg.clone(),
        };
        report.write(&cfg.output.dir, "bench")?;
        Ok(report)
    })?
}

fn run_baseline(
    cfg: &RunConfig,
    spec: &crate::classify::LearnerSpec,
    data: &LoadedData,
) -> Result<crate::fuse::Metrics> {
    let (train, test) = if cfg.scale {
        let s = MaxAbsScaler::fit(&data.train);
        (s.transform(&data.train), s.transform(&data.test))
    } else {
        (data.train.clone(), data.test.clone())
    };
    let model = Model::train(
        spec,
        train.features(),
        &train.label_values(),
        cfg.guards.max_intrinsic_dim,
        cfg.seed,
    )?;
    let scores = model.predict(test.features())?;
    let labels: Vec<_> = scores.iter().map(|&s| crate::dataio::Label::from_sign(s)).collect();
    evaluate(&labels, test.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartDiagnostics {
    pub method: Method,
    pub n_subspaces: usize,
    pub output_dim: usize,
    pub spectrum: Vec<f64>,
    /// Off-block norm of the transformed discriminant matrix, relative.
    pub block_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub seed: u64,
    pub n_features: usize,
    pub n_train: usize,
    pub parts: Vec<PartDiagnostics>,
}

impl InspectReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "inspect  seed={}  M={} train={}", self.seed, self.n_features, self.n_train);
        let _ = writeln!(out, "{:<6}{:>6}{:>8}{:>14}  leading spectrum", "part", "N_S", "dim", "residual");
        for (k, p) in self.parts.iter().enumerate() {
            let residual = p.block_residual.map_or("-".to_string(), |r| format!("{r:.3e}"));
            let lead: Vec<String> = p.spectrum.iter().take(5).map(|v| format!("{v:.4e}")).collect();
            let _ = writeln!(
                out,
                "{:<6}{:>6}{:>8}{:>14}  {}",
                format!("{k}:{}", p.method),
                p.n_subspaces,
                p.output_dim,
                residual,
                lead.join(" ")
            );
        }
        out
    }
}

/// Fits the decomposition on the training split and reports spectra and
/// block-diagonality residuals.
pub fn cmd_inspect(cfg: &RunConfig) -> Result<InspectReport> {
    cfg.validate()?;
    let threads = cfg.effective_threads();
    with_threads(threads, || {
        let data = load_data(cfg)?;
        let train = if cfg.scale {
            MaxAbsScaler::fit(&data.train).transform(&data.train)
        } else {
            data.train.clone()
        };
        let opts = FitOptions {
            max_dense_features: cfg.guards.max_dense_features,
            dca_ridge: cfg.dca_ridge,
            seed: cfg.seed,
        };
        let (decomp, _) = fit_plan(&train, &cfg.plan, &opts).map_err(|e| e.in_stage(Stage::Decompose))?;
        let parts = decomp
            .parts()
            .iter()
            .map(|p| {
                Ok(PartDiagnostics {
                    method: p.method,
                    n_subspaces: p.n_subspaces(),
                    output_dim: p.transform.output_dim(),
                    spectrum: p.spectrum.clone(),
                    block_residual: block_residual(p, train.features(), cfg.guards.max_dense_features)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let report = InspectReport {
            seed: cfg.seed,
            n_features: train.n_features(),
            n_train: train.n_instances(),
            parts,
        };
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_pair(&cfg.output.dir, "inspect", &json, &report.to_table())?;
        Ok(report)
    })?
}
