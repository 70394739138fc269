//! Sparse SVM-light / LIBSVM datasets: parsing, validation, splitting and
//! serialization.
//!
//! Features are stored column-per-instance. Indices are 1-based in text and
//! 0-based in memory.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse vector with strictly ascending 0-based indices and no stored zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from `(index, value)` pairs. Indices must be strictly ascending;
    /// zeros are dropped.
    pub fn from_pairs<I: IntoIterator<Item = (u32, f64)>>(pairs: I) -> Result<Self> {
        let mut v = SparseVec::new();
        for (i, x) in pairs {
            if let Some(&last) = v.indices.last() {
                if i <= last {
                    return Err(Error::Invalid(format!(
                        "sparse indices not strictly ascending ({} after {})",
                        i + 1,
                        last + 1
                    )));
                }
            }
            v.push_unchecked(i, x);
        }
        Ok(v)
    }

    /// Dense-to-sparse, dropping exact zeros.
    pub fn from_dense(values: &[f64]) -> Self {
        let mut v = SparseVec::new();
        for (i, &x) in values.iter().enumerate() {
            v.push_unchecked(i as u32, x);
        }
        v
    }

    /// Appends without the ordering check. Zeros are skipped.
    pub(crate) fn push_unchecked(&mut self, index: u32, value: f64) {
        if value != 0.0 {
            self.indices.push(index);
            self.values.push(value);
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&i| i as usize)
    }

    pub fn scale_by(&mut self, factors: &[f64]) {
        for (i, v) in self.indices.iter().zip(self.values.iter_mut()) {
            *v *= factors[*i as usize];
        }
    }
}

/// `dim × n` matrix stored as `n` sparse columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    dim: usize,
    columns: Vec<SparseVec>,
}

impl SparseColumns {
    pub fn new(dim: usize, columns: Vec<SparseVec>) -> Result<Self> {
        for (k, c) in columns.iter().enumerate() {
            if let Some(max) = c.max_index() {
                if max >= dim {
                    return Err(Error::Invalid(format!(
                        "column {k} has index {} beyond dimension {dim}",
                        max + 1
                    )));
                }
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("column {k} has a non-finite value")));
            }
        }
        Ok(Self { dim, columns })
    }

    pub(crate) fn new_unchecked(dim: usize, columns: Vec<SparseVec>) -> Self {
        Self { dim, columns }
    }

    /// Builds from a dense row-major `dim × n` description (rows = features).
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("ragged dense rows".into()));
        }
        let columns = (0..n)
            .map(|k| SparseVec::from_dense(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
            .collect();
        SparseColumns::new(dim, columns)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[SparseVec] {
        &self.columns
    }

    pub fn column(&self, k: usize) -> &SparseVec {
        &self.columns[k]
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(SparseVec::nnz).sum()
    }

    /// Dense `dim × n` copy (tests and small problems only).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.len());
        for (k, c) in self.columns.iter().enumerate() {
            for (i, v) in c.iter() {
                m[(i, k)] = v;
            }
        }
        m
    }

    pub fn select(&self, instances: &[usize]) -> SparseColumns {
        SparseColumns {
            dim: self.dim,
            columns: instances.iter().map(|&k| self.columns[k].clone()).collect(),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if self.columns.iter().any(|c| c.max_index().is_some_and(|m| m >= dim)) {
            return Err(Error::Dimension {
                expected: dim,
                found: self.dim,
            });
        }
        self.dim = self.dim.max(dim);
        Ok(self)
    }

    /// Per-row means.
    pub fn row_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for c in &self.columns {
            for (i, v) in c.iter() {
                mean[i] += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Binary label, stored as `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub fn from_sign(score: f64) -> Label {
        if score >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }
}

/// How raw label tokens map to `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum LabelMap {
    /// `> 0` is positive, everything else negative.
    #[default]
    Sign,
    /// Exactly this value is positive, everything else negative.
    Positive(f64),
}

impl LabelMap {
    fn map(self, raw: f64) -> Label {
        let pos = match self {
            LabelMap::Sign => raw > 0.0,
            LabelMap::Positive(p) => raw == p,
        };
        if pos {
            Label::Pos
        } else {
            Label::Neg
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Lower bound on the feature count; the dataset gets `max(seen, min_features)`.
    pub min_features: usize,
    pub label_map: LabelMap,
}

/// Labelled sparse dataset: `M` features by `N` instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: SparseColumns,
    labels: Vec<Label>,
}

impl Dataset {
    pub fn new(features: SparseColumns, labels: Vec<Label>) -> Result<Self> {
        if features.is_empty() || features.dim() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() {
            return Err(Error::Dimension {
                expected: features.len(),
                found: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn n_features(&self) -> usize {
        self.features.dim()
    }

    pub fn n_instances(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &SparseColumns {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_values(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.value()).collect()
    }

    pub fn subset(&self, instances: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.features.select(instances),
            instances.iter().map(|&k| self.labels[k]).collect(),
        )
    }

    /// Raises the feature count to at least `dim`.
    pub fn with_min_features(self, dim: usize) -> Dataset {
        let features = self.features.with_dim(dim).expect("raising dim never fails");
        Dataset {
            features,
            labels: self.labels,
        }
    }

    pub(crate) fn map_features(&self, f: impl FnMut(&SparseVec) -> SparseVec) -> Dataset {
        Dataset {
            features: SparseColumns::new_unchecked(
                self.features.dim(),
                self.features.columns().iter().map(f).collect(),
            ),
            labels: self.labels.clone(),
        }
    }
}

fn parse_line(line: &str, lineno: usize, opts: &ParseOptions) -> Result<Option<(Label, SparseVec)>> {
    let content = line.split('#').next().unwrap_or("");
    let mut tokens = content.split_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(None);
    };
    let parse_err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let invalid = |message: String| Error::InvalidLine {
        line: lineno,
        message,
    };
    let raw: f64 = label_tok
        .parse()
        .map_err(|_| parse_err(format!("bad label {label_tok:?}")))?;
    if !raw.is_finite() {
        return Err(invalid(format!("non-finite label {label_tok:?}")));
    }
    let mut vec = SparseVec::new();
    let mut last: Option<u64> = None;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(format!("expected index:value, got {tok:?}")))?;
        if idx == "qid" {
            continue;
        }
        let idx: u64 = idx
            .parse()
            .map_err(|_| parse_err(format!("bad feature index in {tok:?}")))?;
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(format!("bad feature value in {tok:?}")))?;
        if idx == 0 || idx > u32::MAX as u64 {
            return Err(invalid(format!("feature index {idx} out of range")));
        }
        if !val.is_finite() {
            return Err(invalid(format!("non-finite value at index {idx}")));
        }
        if let Some(prev) = last {
            if idx <= prev {
                return Err(invalid(format!(
                    "feature index {idx} not ascending after {prev}"
                )));
            }
        }
        last = Some(idx);
        vec.push_unchecked((idx - 1) as u32, val);
    }
    Ok(Some((opts.label_map.map(raw), vec)))
}

/// Parses SVM-light / LIBSVM text.
pub fn parse_libsvm<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Dataset> {
    let mut columns = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some((label, vec)) = parse_line(&line, k + 1, opts)? {
            if let Some(m) = vec.max_index() {
                max_index = max_index.max(m + 1);
            }
            labels.push(label);
            columns.push(vec);
        }
    }
    if columns.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = max_index.max(opts.min_features).max(1);
    Dataset::new(SparseColumns::new_unchecked(dim, columns), labels)
}

pub fn parse_libsvm_str(text: &str, opts: &ParseOptions) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), opts)
}

/// Reads a dataset file; `.gz` files are decompressed on the fly.
pub fn load_libsvm(path: &Path, opts: &ParseOptions) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(reader), opts)
}

/// Writes SVM-light text. Values use Rust's shortest round-trip decimal form,
/// so parsing the output reproduces every value exactly.
pub fn serialize_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for (col, label) in ds.features.columns().iter().zip(&ds.labels) {
        out.push_str(match label {
            Label::Pos => "+1",
            Label::Neg => "-1",
        });
        for (i, v) in col.iter() {
            let _ = write!(out, " {}:{}", i + 1, v);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Seeded random split; train gets `round(fraction · N)` instances.
/// Instances keep their original relative order on each side.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction {} not in (0, 1)",
            spec.train_fraction
        )));
    }
    let n = ds.n_instances();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Invalid(format!(
            "split of {n} instances at {} leaves one side empty",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(train)?, ds.subset(test)?))
}

/// Per-feature max-abs scaling, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxAbsScaler {
    #[serde(with = "crate::hexfloat::vec")]
    factors: Vec<f64>,
}

impl MaxAbsScaler {
    pub fn fit(ds: &Dataset) -> Self {
        let mut max = vec![0.0f64; ds.n_features()];
        for c in ds.features().columns() {
            for (i, v) in c.iter() {
                max[i] = max[i].max(v.abs());
            }
        }
        let factors = max
            .into_iter()
            .map(|m| if m > 0.0 { 1.0 / m } else { 1.0 })
            .collect();
        Self { factors }
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// Features beyond the fitted dimension are left unscaled.
    pub fn transform(&self, ds: &Dataset) -> Dataset {
        let mut factors = self.factors.clone();
        factors.resize(ds.n_features().max(factors.len()), 1.0);
        ds.map_features(|c| {
            let mut c = c.clone();
            c.scale_by(&factors);
            c
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ParseOptions {
        ParseOptions::default()
    }

    #[test]
    fn parses_basic_file() {
        let ds = parse_libsvm_str("+1 3:0.5 7:1.2\n-1 1:2.0", &opts()).unwrap();
        assert_eq!(ds.n_features(), 7);
        assert_eq!(ds.n_instances(), 2);
        assert_eq!(ds.labels(), &[Label::Pos, Label::Neg]);
        assert_eq!(ds.features().column(0).indices(), &[2, 6]);
        assert_eq!(ds.features().column(1).values(), &[2.0]);
    }

    #[test]
    fn rejects_descending_indices() {
        let err = parse_libsvm_str("1 2:1 1:1", &opts()).unwrap_err();
        assert!(matches!(err, Error::InvalidLine { line: 1, .. }));
    }

    #[test]
    fn rejects_duplicate_indices() {
        let err = parse_libsvm_str("1 1:1\n1 4:1 4:2", &opts()).unwrap_err();
        assert!(matches!(err, Error::InvalidLine { line: 2, .. }));
    }

    #[test]
    fn malformed_token_reports_line() {
        let err = parse_libsvm_str("1 1:1\n\n-1 3:x", &opts()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_libsvm_str("\n  \n", &opts()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn drops_zero_values_and_honours_min_features() {
        let o = ParseOptions {
            min_features: 10,
            ..opts()
        };
        let ds = parse_libsvm_str("1 1:0 2:3", &o).unwrap();
        assert_eq!(ds.n_features(), 10);
        assert_eq!(ds.features().column(0).indices(), &[1]);
    }

    #[test]
    fn label_mapping() {
        let ds = parse_libsvm_str("2 1:1\n1 1:1\n0 1:1\n-3 1:1", &opts()).unwrap();
        assert_eq!(
            ds.labels(),
            &[Label::Pos, Label::Pos, Label::Neg, Label::Neg]
        );
        let covtype = ParseOptions {
            label_map: LabelMap::Positive(1.0),
            ..opts()
        };
        let ds = parse_libsvm_str("1 1:1\n2 1:1", &covtype).unwrap();
        assert_eq!(ds.labels(), &[Label::Pos, Label::Neg]);
    }

    #[test]
    fn serializes_label_only_line_for_empty_instance() {
        let ds = parse_libsvm_str("-1\n+1 2:1.5", &opts()).unwrap();
        assert_eq!(serialize_libsvm(&ds), "-1\n+1 2:1.5\n");
    }

    #[test]
    fn serialize_keeps_indices_ascending() {
        let ds = parse_libsvm_str("+1 3:0.5 7:1.2\n-1 1:2.0", &opts()).unwrap();
        assert_eq!(serialize_libsvm(&ds), "+1 3:0.5 7:1.2\n-1 1:2\n");
    }

    fn ten_instances() -> Dataset {
        let text: String = (0..10)
            .map(|k| format!("{} {}:1\n", if k % 2 == 0 { 1 } else { -1 }, k + 1))
            .collect();
        parse_libsvm_str(&text, &opts()).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = ten_instances();
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 7,
        };
        let (a, b) = split(&ds, &spec).unwrap();
        assert_eq!((a.n_instances(), b.n_instances()), (8, 2));
        assert_eq!(a.n_features(), b.n_features());
        let (a2, b2) = split(&ds, &spec).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn split_is_a_partition() {
        let ds = ten_instances();
        let (a, b) = split(
            &ds,
            &SplitSpec {
                train_fraction: 0.3,
                seed: 99,
            },
        )
        .unwrap();
        let mut seen: Vec<u32> = a
            .features()
            .columns()
            .iter()
            .chain(b.features().columns())
            .map(|c| c.indices()[0])
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_empty_side() {
        let ds = ten_instances();
        for f in [0.01, 0.99, 0.0, 1.0] {
            assert!(split(
                &ds,
                &SplitSpec {
                    train_fraction: f,
                    seed: 1
                }
            )
            .is_err());
        }
    }

    #[test]
    fn max_abs_scaling() {
        let ds = parse_libsvm_str("1 1:2 2:-4\n-1 1:-1", &opts()).unwrap();
        let scaler = MaxAbsScaler::fit(&ds);
        let scaled = scaler.transform(&ds);
        assert_eq!(scaled.features().column(0).values(), &[1.0, -1.0]);
        assert_eq!(scaled.features().column(1).values(), &[-0.5]);
    }
}
