//! Tabular dataset ingestion, normalization, and splitting.
//!
//! Counterfactual search runs in normalized feature space: every continuous
//! feature is min-max scaled to `[0, 1]`, categorical features are one-hot
//! encoded, and the per-column scaling parameters are kept so results can be
//! mapped back to raw units. Columns produced from categorical features and
//! columns the schema marks immutable are non-mutable; generators and noise
//! samplers hold those dimensions fixed.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a raw input column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// One feature declaration in the schema sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default = "default_true")]
    pub mutable: bool,
}

fn default_true() -> bool {
    true
}

/// Declares the columns of a CSV file: feature names, kinds, mutability,
/// and the label column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub label: String,
}

impl FeatureSchema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let schema: FeatureSchema = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("schema file {}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Checks the schema is self-consistent: non-empty, unique names, the
    /// label not doubling as a feature, and at least one continuous mutable
    /// feature to optimize over.
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(Error::Schema("feature with empty name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name '{}'", f.name)));
            }
            if f.name == self.label {
                return Err(Error::Schema(format!(
                    "feature '{}' collides with the label column",
                    f.name
                )));
            }
        }
        if !self
            .features
            .iter()
            .any(|f| f.kind == FeatureKind::Continuous && f.mutable)
        {
            return Err(Error::Schema(
                "schema needs at least one continuous mutable feature".into(),
            ));
        }
        Ok(())
    }

    pub fn n_continuous(&self) -> usize {
        self.features
            .iter()
            .filter(|f| f.kind == FeatureKind::Continuous)
            .count()
    }

    pub fn n_categorical(&self) -> usize {
        self.features
            .iter()
            .filter(|f| f.kind == FeatureKind::Categorical)
            .count()
    }
}

/// Metadata for one encoded column of the feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    /// Encoded column name, e.g. `age` or `sex=male`.
    pub name: String,
    /// The schema feature this column came from.
    pub source: String,
    pub mutable: bool,
    /// Set when this column belongs to a one-hot group; columns sharing the
    /// same group id came from the same categorical feature.
    pub one_hot_group: Option<usize>,
    /// Raw-unit range used for min-max scaling (0/1 for one-hot columns).
    pub min: f64,
    pub max: f64,
}

impl ColumnMeta {
    pub fn continuous(name: &str, mutable: bool) -> Self {
        ColumnMeta {
            name: name.to_string(),
            source: name.to_string(),
            mutable,
            one_hot_group: None,
            min: f64::NAN,
            max: f64::NAN,
        }
    }

    fn one_hot(source: &str, level: &str, group: usize) -> Self {
        ColumnMeta {
            name: format!("{source}={level}"),
            source: source.to_string(),
            mutable: false,
            one_hot_group: Some(group),
            min: 0.0,
            max: 1.0,
        }
    }
}

/// An encoded tabular dataset: a dense row-major feature matrix, binary
/// labels, and per-column metadata. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    columns: Vec<ColumnMeta>,
    normalized: bool,
}

impl Dataset {
    /// Builds a dataset from row vectors, computing raw min/max per
    /// continuous column. Labels must be 0 or 1 and every value finite.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[u8], mut columns: Vec<ColumnMeta>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let cols = columns.len();
        let mut features = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            for (&v, meta) in row.iter().zip(&columns) {
                if !v.is_finite() {
                    return Err(Error::Parse(format!(
                        "non-finite value in column '{}' at row {i}",
                        meta.name
                    )));
                }
                features.push(v);
            }
        }
        for &l in labels {
            if l > 1 {
                return Err(Error::Schema(format!("label {l} is not binary (0/1)")));
            }
        }
        // Record raw ranges for continuous columns that do not carry them yet.
        for (c, meta) in columns.iter_mut().enumerate() {
            if meta.one_hot_group.is_none() && !(meta.min.is_finite() && meta.max.is_finite()) {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for r in 0..rows.len() {
                    let v = features[r * cols + c];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                meta.min = lo;
                meta.max = hi;
            }
        }
        Ok(Dataset {
            rows: rows.len(),
            cols,
            features,
            labels: labels.to_vec(),
            columns,
            normalized: false,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.cols.max(1))
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Per-column optimizability: one-hot and schema-immutable columns are `false`.
    pub fn mutable_mask(&self) -> Vec<bool> {
        self.columns.iter().map(|c| c.mutable).collect()
    }

    /// Complement of [`mutable_mask`](Self::mutable_mask); `true` marks
    /// dimensions that receive neither noise nor optimization updates.
    pub fn frozen_mask(&self) -> Vec<bool> {
        self.columns.iter().map(|c| !c.mutable).collect()
    }

    /// Min-max scales every continuous column to `[0, 1]` using the recorded
    /// raw ranges. One-hot columns pass through. Returns `self` unchanged if
    /// already normalized.
    pub fn normalize(&self) -> Result<Dataset> {
        if self.normalized {
            return Ok(self.clone());
        }
        // partial_cmp keeps NaN ranges in the rejected set.
        let constant: Vec<&str> = self
            .columns
            .iter()
            .filter(|c| {
                c.one_hot_group.is_none() && c.min.partial_cmp(&c.max) != Some(Ordering::Less)
            })
            .map(|c| c.name.as_str())
            .collect();
        if !constant.is_empty() {
            return Err(Error::Schema(format!(
                "constant feature(s) cannot be normalized: {}",
                constant.join(", ")
            )));
        }
        let mut out = self.clone();
        for (c, meta) in self.columns.iter().enumerate() {
            if meta.one_hot_group.is_some() {
                continue;
            }
            let span = meta.max - meta.min;
            for r in 0..self.rows {
                let v = &mut out.features[r * self.cols + c];
                *v = (*v - meta.min) / span;
            }
        }
        out.normalized = true;
        Ok(out)
    }

    /// Maps one normalized row back to raw units.
    pub fn denormalize_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.normalized {
            return Err(Error::Precondition(
                "denormalize_row called on a dataset that is not normalized".into(),
            ));
        }
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "vector has {} values, dataset has {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok(x.iter()
            .zip(&self.columns)
            .map(|(&v, meta)| {
                if meta.one_hot_group.is_some() {
                    v
                } else {
                    meta.min + v * (meta.max - meta.min)
                }
            })
            .collect())
    }

    /// Deterministic shuffled split into `(train, test)`; `fraction` is the
    /// train share. `fraction == 1.0` yields an empty test set (logged).
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!(
                "split fraction {fraction} is outside (0, 1]"
            )));
        }
        if fraction == 1.0 {
            log::warn!("split fraction 1.0 produces an empty test set");
        }
        let mut indices: Vec<usize> = (0..self.rows).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let n_train = (self.rows as f64 * fraction).floor() as usize;
        let take = |idx: &[usize]| -> Dataset {
            let mut features = Vec::with_capacity(idx.len() * self.cols);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx {
                features.extend_from_slice(self.row(i));
                labels.push(self.labels[i]);
            }
            Dataset {
                rows: idx.len(),
                cols: self.cols,
                features,
                labels,
                columns: self.columns.clone(),
                normalized: self.normalized,
            }
        };
        Ok((take(&indices[..n_train]), take(&indices[n_train..])))
    }
}

/// Loads an RFC-4180 CSV with a header row, one-hot encoding categorical
/// columns (levels sorted lexicographically, columns named `feature=level`).
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        },
        _ => Error::Parse(format!("{}: {e}", path.display())),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: header row: {e}", path.display())))?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in {}", path.display())))
    };

    let label_idx = col_index(&schema.label)?;
    let feature_idx: Vec<usize> = schema
        .features
        .iter()
        .map(|f| col_index(&f.name))
        .collect::<Result<_>>()?;

    // First pass in memory: raw cells per feature.
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.features.len()];
    let mut labels: Vec<u8> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("row {}: {e}", row_no + 1)))?;
        let label_cell = record.get(label_idx).unwrap_or("");
        labels.push(parse_label(label_cell, row_no + 1)?);
        for (f, &idx) in feature_idx.iter().enumerate() {
            raw[f].push(record.get(idx).unwrap_or("").to_string());
        }
    }

    // Build encoded columns.
    let mut columns: Vec<ColumnMeta> = Vec::new();
    let mut encoded: Vec<Vec<f64>> = Vec::new(); // column-major during encoding
    let mut group = 0usize;
    for (f, spec) in schema.features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Continuous => {
                let mut col = Vec::with_capacity(labels.len());
                for (row_no, cell) in raw[f].iter().enumerate() {
                    let v: f64 = cell.trim().parse().map_err(|_| {
                        Error::Parse(format!(
                            "continuous column '{}' row {}: '{}' is not numeric",
                            spec.name,
                            row_no + 1,
                            cell
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse(format!(
                            "continuous column '{}' row {}: non-finite value",
                            spec.name,
                            row_no + 1
                        )));
                    }
                    col.push(v);
                }
                columns.push(ColumnMeta::continuous(&spec.name, spec.mutable));
                encoded.push(col);
            }
            FeatureKind::Categorical => {
                let levels: Vec<String> = raw[f]
                    .iter()
                    .map(|c| c.trim().to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                for level in &levels {
                    let col = raw[f]
                        .iter()
                        .map(|c| if c.trim() == level.as_str() { 1.0 } else { 0.0 })
                        .collect();
                    columns.push(ColumnMeta::one_hot(&spec.name, level, group));
                    encoded.push(col);
                }
                group += 1;
            }
        }
    }

    // Transpose to rows.
    let n_rows = labels.len();
    let rows: Vec<Vec<f64>> = (0..n_rows)
        .map(|r| encoded.iter().map(|col| col[r]).collect())
        .collect();
    Dataset::from_rows(&rows, &labels, columns)
}

fn parse_label(cell: &str, row_no: usize) -> Result<u8> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("label row {row_no}: '{cell}' is not numeric")))?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Schema(format!(
            "label row {row_no}: value {v} is not binary (0/1)"
        )))
    }
}

/// Two isotropic unit-variance 2D Gaussian blobs, `n` points total, centers
/// `separation` apart along the diagonal. Class 0 sits at the low corner.
pub fn synth_two_gaussians(n: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Precondition("synthetic dataset with n = 0 rows".into()));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::Config(format!("separation {separation} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = separation / (2.0 * std::f64::consts::SQRT_2);
    let n0 = n / 2 + n % 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (center, label) = if i < n0 { (-half, 0u8) } else { (half, 1u8) };
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        rows.push(vec![center + dx, center + dy]);
        labels.push(label);
    }
    let columns = vec![
        ColumnMeta::continuous("x1", true),
        ColumnMeta::continuous("x2", true),
    ];
    Dataset::from_rows(&rows, &labels, columns)
}
