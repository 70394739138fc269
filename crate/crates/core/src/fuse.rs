//! Local-output fusion and the end-to-end train / predict pipeline.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{LearnerSpec, Model};
use crate::dataio::{Dataset, Label, MaxAbsScaler, SparseColumns, SparseVec};
use crate::decompose::{fit_plan, CompositeDecomposition, FitOptions, Method, PlanEntry};
use crate::error::{Error, Result, Stage};

/// `h × N` local scores; row `i` comes from local classifier `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutputMatrix {
    rows: Vec<Vec<f64>>,
}

impl LocalOutputMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("local output rows must be non-empty and equal length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("local classifier produced a non-finite score".into()));
        }
        Ok(Self { rows })
    }

    pub fn h(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Instances as columns, after the affine map in `std`.
    fn to_columns(&self, std: &Standardizer) -> SparseColumns {
        let cols = (0..self.n())
            .map(|k| {
                let dense: Vec<f64> = (0..self.h()).map(|i| std.apply(i, self.rows[i][k])).collect();
                SparseVec::from_dense(&dense)
            })
            .collect();
        SparseColumns::new_unchecked(self.h(), cols)
    }
}

/// Row `i` is local `i` scored on view `i`.
pub fn build_r(locals: &[Model], views: &[SparseColumns]) -> Result<LocalOutputMatrix> {
    if locals.len() != views.len() {
        return Err(Error::Dimension {
            expected: locals.len(),
            found: views.len(),
        });
    }
    let rows: Result<Vec<Vec<f64>>> = locals
        .par_iter()
        .zip(views.par_iter())
        .map(|(m, v)| m.predict(v))
        .collect();
    LocalOutputMatrix::from_rows(rows?)
}

/// Per-row affine standardization of the fusion inputs. Rows with zero
/// variance are passed through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "crate::hexfloat::vec")]
    shift: Vec<f64>,
    #[serde(with = "crate::hexfloat::vec")]
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(r: &LocalOutputMatrix) -> Self {
        let n = r.n() as f64;
        let mut shift = Vec::with_capacity(r.h());
        let mut scale = Vec::with_capacity(r.h());
        for row in r.rows() {
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                shift.push(mean);
                scale.push(1.0 / var.sqrt());
            } else {
                shift.push(0.0);
                scale.push(1.0);
            }
        }
        Self { shift, scale }
    }

    pub fn identity(h: usize) -> Self {
        Self {
            shift: vec![0.0; h],
            scale: vec![1.0; h],
        }
    }

    fn apply(&self, row: usize, v: f64) -> f64 {
        (v - self.shift[row]) * self.scale[row]
    }
}

/// Everything needed to reproduce a trained pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcConfig {
    pub plan: Vec<PlanEntry>,
    pub local: LearnerSpec,
    pub global: LearnerSpec,
    pub max_dense_features: usize,
    pub max_intrinsic_dim: usize,
    #[serde(default)]
    pub dca_ridge: Option<f64>,
    /// Build the fusion matrix from 5-fold out-of-fold local scores.
    #[serde(default)]
    pub cross_fit: bool,
    /// Max-abs feature scaling fitted on the training set.
    #[serde(default)]
    pub scale: bool,
    pub seed: u64,
}

impl DcConfig {
    pub fn new(plan: Vec<PlanEntry>, local: LearnerSpec, global: LearnerSpec) -> Self {
        Self {
            plan,
            local,
            global,
            max_dense_features: 4096,
            max_intrinsic_dim: 20_000,
            dca_ridge: None,
            cross_fit: false,
            scale: false,
            seed: 0,
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_dense_features: self.max_dense_features,
            dca_ridge: self.dca_ridge,
            seed: self.seed,
        }
    }

    fn local_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(0xA076_1D64_78BD_642F).rotate_left(17) ^ i as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcModel {
    pub n_features: usize,
    pub scaler: Option<MaxAbsScaler>,
    pub decomposition: CompositeDecomposition,
    pub locals: Vec<Model>,
    pub standardizer: Standardizer,
    pub global: Model,
    pub config: DcConfig,
}

/// Wall-clock seconds per training stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTimings {
    pub scaling: f64,
    /// Per plan entry, in plan order (entries fit concurrently).
    pub decomposition_per_method: Vec<(Method, f64)>,
    pub decomposition: f64,
    pub apply: f64,
    pub local_training: f64,
    pub fusion: f64,
}

impl TrainTimings {
    pub fn total(&self) -> f64 {
        self.scaling + self.decomposition + self.apply + self.local_training + self.fusion
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn train_locals(config: &DcConfig, views: &[SparseColumns], y: &[f64]) -> Result<Vec<Model>> {
    views
        .par_iter()
        .enumerate()
        .map(|(i, v)| Model::train(&config.local, v, y, config.max_intrinsic_dim, config.local_seed(i)))
        .collect()
}

/// Local scores for every training instance, each produced by locals that
/// did not see it.
fn cross_fitted_r(config: &DcConfig, views: &[SparseColumns], y: &[f64]) -> Result<LocalOutputMatrix> {
    const FOLDS: usize = 5;
    let n = y.len();
    if n < FOLDS {
        return Err(Error::Invalid(format!("cross-fitting needs at least {FOLDS} instances")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED));
    let mut fold_of = vec![0usize; n];
    for (rank, &k) in order.iter().enumerate() {
        fold_of[k] = rank % FOLDS;
    }
    let mut rows = vec![vec![0.0; n]; views.len()];
    for fold in 0..FOLDS {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..n).partition(|&k| fold_of[k] == fold);
        let kept_views: Vec<SparseColumns> = views.iter().map(|v| v.select(&kept)).collect();
        let kept_y: Vec<f64> = kept.iter().map(|&k| y[k]).collect();
        let locals = train_locals(config, &kept_views, &kept_y)?;
        let held_views: Vec<SparseColumns> = views.iter().map(|v| v.select(&held)).collect();
        let r = build_r(&locals, &held_views)?;
        for (i, row) in r.rows().iter().enumerate() {
            for (&k, &v) in held.iter().zip(row) {
                rows[i][k] = v;
            }
        }
    }
    LocalOutputMatrix::from_rows(rows)
}

/// Fits the decomposition, the `h` locals, and the global classifier on `R`.
pub fn train_dc(train: &Dataset, config: &DcConfig) -> Result<(DcModel, TrainTimings)> {
    let mut timings = TrainTimings::default();
    let y = train.label_values();

    let start = Instant::now();
    let scaler = config.scale.then(|| MaxAbsScaler::fit(train));
    let scaled;
    let data = match &scaler {
        Some(s) => {
            scaled = s.transform(train);
            &scaled
        }
        None => train,
    };
    timings.scaling = secs(start.elapsed());

    let start = Instant::now();
    let (decomposition, per_entry) =
        fit_plan(data, &config.plan, &config.fit_options()).map_err(|e| e.in_stage(Stage::Decompose))?;
    timings.decomposition = secs(start.elapsed());
    timings.decomposition_per_method = config
        .plan
        .iter()
        .zip(per_entry)
        .map(|(e, d)| (e.method, secs(d)))
        .collect();

    let start = Instant::now();
    let views = decomposition
        .apply(data.features())
        .map_err(|e| e.in_stage(Stage::Decompose))?;
    timings.apply = secs(start.elapsed());

    let start = Instant::now();
    let locals = train_locals(config, &views, &y).map_err(|e| e.in_stage(Stage::LocalTraining))?;
    timings.local_training = secs(start.elapsed());

    let start = Instant::now();
    let r = if config.cross_fit {
        cross_fitted_r(config, &views, &y)
    } else {
        build_r(&locals, &views)
    }
    .map_err(|e| e.in_stage(Stage::Fusion))?;
    let standardizer = Standardizer::fit(&r);
    let global = Model::train(
        &config.global,
        &r.to_columns(&standardizer),
        &y,
        config.max_intrinsic_dim,
        config.seed,
    )
    .map_err(|e| e.in_stage(Stage::Fusion))?;
    timings.fusion = secs(start.elapsed());

    Ok((
        DcModel {
            n_features: train.n_features(),
            scaler,
            decomposition,
            locals,
            standardizer,
            global,
            config: config.clone(),
        },
        timings,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<Label>,
    pub scores: Vec<f64>,
}

impl DcModel {
    fn check_dim(&self, ds: &Dataset) -> Result<()> {
        if ds.n_features() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                found: ds.n_features(),
            });
        }
        Ok(())
    }

    /// Subspace views of `ds` under the stored scaling and decomposition.
    pub fn views(&self, ds: &Dataset) -> Result<Vec<SparseColumns>> {
        self.check_dim(ds)?;
        match &self.scaler {
            Some(s) => self.decomposition.apply(s.transform(ds).features()),
            None => self.decomposition.apply(ds.features()),
        }
    }

    pub fn local_outputs(&self, ds: &Dataset) -> Result<LocalOutputMatrix> {
        build_r(&self.locals, &self.views(ds)?)
    }

    pub fn fuse(&self, r: &LocalOutputMatrix) -> Result<Prediction> {
        let scores = self.global.predict(&r.to_columns(&self.standardizer))?;
        let labels = scores.iter().map(|&s| Label::from_sign(s)).collect();
        Ok(Prediction { labels, scores })
    }
}

/// Labels are `sign(score)` with `sign(0) = +1`.
pub fn predict_dc(model: &DcModel, test: &Dataset) -> Result<Prediction> {
    let r = model
        .local_outputs(test)
        .map_err(|e| e.in_stage(Stage::Prediction))?;
    model.fuse(&r).map_err(|e| e.in_stage(Stage::Prediction))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percentage of mismatches, in `[0, 100]`.
    pub error_rate: f64,
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Metrics {
    pub fn n(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

pub fn evaluate(predicted: &[Label], truth: &[Label]) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut m = Metrics {
        error_rate: 0.0,
        true_pos: 0,
        true_neg: 0,
        false_pos: 0,
        false_neg: 0,
    };
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Label::Pos, Label::Pos) => m.true_pos += 1,
            (Label::Neg, Label::Neg) => m.true_neg += 1,
            (Label::Pos, Label::Neg) => m.false_pos += 1,
            (Label::Neg, Label::Pos) => m.false_neg += 1,
        }
    }
    m.error_rate = 100.0 * (m.false_pos + m.false_neg) as f64 / truth.len() as f64;
    Ok(m)
}
