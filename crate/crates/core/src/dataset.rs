//! Embedded binary-classification datasets: loading, synthesis, validation.
//!
//! Two on-disk formats are supported:
//!
//! * CSV: one sample per row, column 1 the label (0/1), columns 2..d+1 the
//!   features. A header row is detected by attempting to parse the first
//!   line. Canonical output uses shortest round-trip float formatting and
//!   `\n` line endings, so `save ∘ load` is the identity on canonical files.
//! * Binary: magic `RIFD1`, little-endian `u64 n`, `u64 d`, then `n·(1+d)`
//!   little-endian `f64` values row-major, label first. Bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SampleMatrix;
use crate::rng::CounterRng;

pub const BINARY_MAGIC: &[u8; 5] = b"RIFD1";

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    features: SampleMatrix,
    labels: Vec<f64>,
    test_features: SampleMatrix,
    test_labels: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: SampleMatrix,
        labels: Vec<f64>,
        test_features: SampleMatrix,
        test_labels: Vec<f64>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            features,
            labels,
            test_features,
            test_labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let n = self.features.len();
        let d = self.features.dim();
        let m = self.test_features.len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 train samples, got {n}")));
        }
        if d < 1 {
            return Err(Error::InvalidData("need at least 1 feature".into()));
        }
        if self.labels.len() != n {
            return Err(Error::Dimension(format!(
                "{n} train samples but {} labels",
                self.labels.len()
            )));
        }
        if self.test_labels.len() != m {
            return Err(Error::Dimension(format!(
                "{m} test samples but {} test labels",
                self.test_labels.len()
            )));
        }
        if m > 0 && self.test_features.dim() != d {
            return Err(Error::Dimension(format!(
                "train dim {d} != test dim {}",
                self.test_features.dim()
            )));
        }
        for (what, labels) in [("train", &self.labels), ("test", &self.test_labels)] {
            for (i, &y) in labels.iter().enumerate() {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::InvalidData(format!(
                        "{what} label at row {i} is {y}, expected 0 or 1"
                    )));
                }
            }
        }
        for i in 0..n {
            if self.features.iter_sample(i).any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite feature in train row {i}")));
            }
        }
        for i in 0..m {
            if self.test_features.iter_sample(i).any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite feature in test row {i}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn test_n(&self) -> usize {
        self.test_features.len()
    }

    pub fn feature(&self, i: usize) -> faer::ColRef<'_, f64> {
        self.features.sample(i)
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn test_feature(&self, t: usize) -> faer::ColRef<'_, f64> {
        self.test_features.sample(t)
    }

    pub fn test_label(&self, t: usize) -> f64 {
        self.test_labels[t]
    }

    pub fn test_labels(&self) -> &[f64] {
        &self.test_labels
    }

    pub fn features(&self) -> &SampleMatrix {
        &self.features
    }

    pub fn test_features(&self) -> &SampleMatrix {
        &self.test_features
    }

    /// FNV-1a over dimensions and the raw bit patterns of all values;
    /// stable across runs and platforms, used for retrain-cache keys.
    pub fn content_hash(&self) -> u64 {
        let mut h = fnv_init();
        for dim in [self.n(), self.dim(), self.test_n()] {
            h = fnv_u64(h, dim as u64);
        }
        for i in 0..self.n() {
            h = fnv_u64(h, self.labels[i].to_bits());
            for v in self.features.iter_sample(i) {
                h = fnv_u64(h, v.to_bits());
            }
        }
        for t in 0..self.test_n() {
            h = fnv_u64(h, self.test_labels[t].to_bits());
            for v in self.test_features.iter_sample(t) {
                h = fnv_u64(h, v.to_bits());
            }
        }
        h
    }

    /// Standardize features to zero mean / unit variance, with statistics
    /// estimated on the training split and applied to both splits. Constant
    /// columns are left centered but unscaled.
    pub fn standardized(&self) -> Dataset {
        let (n, d, m) = (self.n(), self.dim(), self.test_n());
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (j, v) in self.features.iter_sample(i).enumerate() {
                mean[j] += v;
            }
        }
        for mj in &mut mean {
            *mj /= n as f64;
        }
        for i in 0..n {
            for (j, v) in self.features.iter_sample(i).enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|&v| {
                let s = (v / n as f64).sqrt();
                if s > 0.0 {
                    1.0 / s
                } else {
                    1.0
                }
            })
            .collect();
        let features = SampleMatrix::from_fn(d, n, |j, i| (self.features.get(i, j) - mean[j]) * scale[j]);
        let test_features =
            SampleMatrix::from_fn(d, m, |j, t| (self.test_features.get(t, j) - mean[j]) * scale[j]);
        Dataset {
            name: format!("{}-std", self.name),
            features,
            labels: self.labels.clone(),
            test_features,
            test_labels: self.test_labels.clone(),
        }
    }

    /// Uniform subsample of the training split (test split unchanged).
    pub fn subsample(&self, n_sub: usize, seed: u64) -> Result<Dataset> {
        if n_sub > self.n() {
            return Err(Error::Config(format!(
                "cannot subsample {n_sub} of {} train samples",
                self.n()
            )));
        }
        let mut rng = CounterRng::new(seed).substream(0x5353); // "SS"
        let idx = rng.sample_indices(self.n(), n_sub);
        let features = self.features.select(&idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(
            format!("{}-n{}", self.name, n_sub),
            features,
            labels,
            self.test_features.clone(),
            self.test_labels.clone(),
        )
    }

    /// Append one training row (used by the poisoning experiment).
    pub fn with_appended_train_row(&self, x: &[f64], y: f64) -> Result<Dataset> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "appended row has {} features, expected {}",
                x.len(),
                self.dim()
            )));
        }
        let n = self.n();
        let features = SampleMatrix::from_fn(self.dim(), n + 1, |j, i| {
            if i < n {
                self.features.get(i, j)
            } else {
                x[j]
            }
        });
        let mut labels = self.labels.clone();
        labels.push(y);
        Dataset::new(
            self.name.clone(),
            features,
            labels,
            self.test_features.clone(),
            self.test_labels.clone(),
        )
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv_init() -> u64 {
    FNV_OFFSET
}

pub(crate) fn fnv_u64(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub(crate) fn fnv_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// FNV-1a of a string, for config hashing.
pub fn fnv_str(s: &str) -> u64 {
    fnv_bytes(fnv_init(), s.as_bytes())
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Design {
    GaussianIsotropic,
    /// Per-coordinate standard deviations, length d.
    GaussianAnisotropic { spectrum: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThetaStar {
    Zero,
    Explicit { values: Vec<f64> },
    /// Uniform random direction scaled to the given norm, drawn from the
    /// spec seed's `theta` substream.
    RandomUnit { scale: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LabelModel {
    /// y ~ Bernoulli(sigmoid(⟨θ*, x⟩))
    Logistic { theta_star: ThetaStar },
    /// y = 1 if ⟨θ*, x⟩ + noise·ε ≥ 0 else 0 (linear teacher thresholded to
    /// keep labels binary).
    Linear { theta_star: ThetaStar, noise: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    /// Training-set size; an extra ⌈n/4⌉ samples are drawn for the 80/20
    /// test split.
    pub n: usize,
    pub d: usize,
    pub design: Design,
    pub label_model: LabelModel,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("synthetic n must be ≥ 2, got {}", self.n)));
        }
        if self.d < 1 {
            return Err(Error::Config("synthetic d must be ≥ 1".into()));
        }
        if let Design::GaussianAnisotropic { spectrum } = &self.design {
            if spectrum.len() != self.d {
                return Err(Error::Config(format!(
                    "anisotropic spectrum has {} entries, expected d = {}",
                    spectrum.len(),
                    self.d
                )));
            }
            if spectrum.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
                return Err(Error::Config("spectrum entries must be finite and ≥ 0".into()));
            }
        }
        if let LabelModel::Linear { noise, .. } = &self.label_model {
            if !(noise.is_finite() && *noise >= 0.0) {
                return Err(Error::Config("label noise must be finite and ≥ 0".into()));
            }
        }
        Ok(())
    }
}

// Substream tags for the synthesis draw order.
const TAG_THETA: u64 = 1;
const TAG_FEATURES: u64 = 2;
const TAG_LABELS: u64 = 3;

fn resolve_theta_star(t: &ThetaStar, d: usize, rng: &CounterRng) -> Result<Vec<f64>> {
    match t {
        ThetaStar::Zero => Ok(vec![0.0; d]),
        ThetaStar::Explicit { values } => {
            if values.len() != d {
                return Err(Error::Config(format!(
                    "theta_star has {} entries, expected d = {}",
                    values.len(),
                    d
                )));
            }
            Ok(values.clone())
        }
        ThetaStar::RandomUnit { scale } => {
            let mut r = rng.substream(TAG_THETA);
            let raw: Vec<f64> = (0..d).map(|_| r.next_normal()).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok(vec![0.0; d]);
            }
            Ok(raw.iter().map(|v| v / norm * scale).collect())
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Draw a dataset per the spec, deterministically in the seed.
///
/// Draw order: the teacher direction (if random), then all features
/// sample-major, then all labels. The first `n` samples form the training
/// split, the remaining ⌈n/4⌉ the test split (unstratified; samples are
/// i.i.d. so the head/tail split is itself a uniform split).
pub fn synthesize(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let m = n.div_ceil(4);
    let total = n + m;
    let base = CounterRng::new(spec.seed);

    let theta_star = match &spec.label_model {
        LabelModel::Logistic { theta_star } | LabelModel::Linear { theta_star, .. } => {
            resolve_theta_star(theta_star, d, &base)?
        }
    };

    let mut feat_rng = base.substream(TAG_FEATURES);
    let mut all = SampleMatrix::zeros(d, total);
    for i in 0..total {
        for j in 0..d {
            let mut v = feat_rng.next_normal();
            if let Design::GaussianAnisotropic { spectrum } = &spec.design {
                v *= spectrum[j];
            }
            all.set(i, j, v);
        }
    }

    let mut label_rng = base.substream(TAG_LABELS);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let z: f64 = (0..d).map(|j| theta_star[j] * all.get(i, j)).sum();
        let y = match &spec.label_model {
            LabelModel::Logistic { .. } => {
                if label_rng.next_f64() < sigmoid(z) {
                    1.0
                } else {
                    0.0
                }
            }
            LabelModel::Linear { noise, .. } => {
                let eps = label_rng.next_normal();
                if z + noise * eps >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        labels.push(y);
    }

    let train_idx: Vec<usize> = (0..n).collect();
    let test_idx: Vec<usize> = (n..total).collect();
    Dataset::new(
        format!("synthetic-n{}-d{}-seed{}", n, d, spec.seed),
        all.select(&train_idx),
        train_idx.iter().map(|&i| labels[i]).collect(),
        all.select(&test_idx),
        test_idx.iter().map(|&i| labels[i]).collect(),
    )
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Csv,
    Binary,
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub format: DataFormat,
    /// Map {−1, +1} labels to {0, 1} on input.
    pub map_pm_one: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            format: DataFormat::Csv,
            map_pm_one: false,
        }
    }
}

/// Raw rows of one file: (labels, feature rows).
fn read_rows(path: &Path, opts: &LoadOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    match opts.format {
        DataFormat::Csv => read_rows_csv(path, opts),
        DataFormat::Binary => read_rows_binary(path, opts),
    }
}

fn map_label(raw: f64, row: usize, opts: &LoadOptions) -> Result<f64> {
    let y = if opts.map_pm_one {
        match raw {
            -1.0 => 0.0,
            1.0 => 1.0,
            other => other,
        }
    } else {
        raw
    };
    if y == 0.0 || y == 1.0 {
        Ok(y)
    } else {
        Err(Error::Parse {
            row,
            msg: format!("label {raw} is not in {{0, 1}}"),
        })
    }
}

fn read_rows_csv(path: &Path, opts: &LoadOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected_cols: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if lineno == 0 => continue, // optional header
            Err(_) => {
                return Err(Error::Parse {
                    row,
                    msg: "non-numeric cell".into(),
                })
            }
        };
        if values.len() < 2 {
            return Err(Error::Parse {
                row,
                msg: format!("expected label plus at least 1 feature, got {} cells", values.len()),
            });
        }
        if let Some(c) = expected_cols {
            if values.len() != c {
                return Err(Error::Parse {
                    row,
                    msg: format!("expected {c} columns, got {}", values.len()),
                });
            }
        } else {
            expected_cols = Some(values.len());
        }
        labels.push(map_label(values[0], row, opts)?);
        rows.push(values[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    Ok((labels, rows))
}

fn read_rows_binary(path: &Path, opts: &LoadOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 21 || &bytes[..5] != BINARY_MAGIC {
        return Err(Error::InvalidData(format!(
            "{}: missing RIFD1 magic",
            path.display()
        )));
    }
    let n = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[13..21].try_into().unwrap()) as usize;
    let expected = 21 + n * (1 + d) * 8;
    if bytes.len() != expected {
        return Err(Error::InvalidData(format!(
            "{}: expected {expected} bytes for n={n}, d={d}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    let mut labels = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut off = 21;
    for i in 0..n {
        let mut read_f64 = || {
            let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
            v
        };
        labels.push(map_label(read_f64(), i + 1, opts)?);
        rows.push((0..d).map(|_| read_f64()).collect());
    }
    Ok((labels, rows))
}

/// Load a dataset from separate train/test files (test optional).
pub fn load_split(
    name: impl Into<String>,
    train: &Path,
    test: Option<&Path>,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let (labels, rows) = read_rows(train, opts)?;
    let features = SampleMatrix::from_rows(&rows)?;
    let (test_features, test_labels) = match test {
        Some(p) => {
            let (tl, tr) = read_rows(p, opts)?;
            (SampleMatrix::from_rows(&tr)?, tl)
        }
        None => (SampleMatrix::zeros(features.dim(), 0), Vec::new()),
    };
    Dataset::new(name, features, labels, test_features, test_labels)
}

#[derive(Serialize, Deserialize)]
struct SplitManifest {
    test_indices: Vec<usize>,
}

/// Load one file containing all samples plus a JSON manifest
/// `{"test_indices": [...]}` naming the rows that form the test split.
pub fn load_with_manifest(
    name: impl Into<String>,
    data: &Path,
    manifest: &Path,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let (labels, rows) = read_rows(data, opts)?;
    let manifest: SplitManifest = serde_json::from_str(&fs::read_to_string(manifest)?)
        .map_err(|e| Error::Config(format!("bad split manifest: {e}")))?;
    let mut is_test = vec![false; rows.len()];
    for &t in &manifest.test_indices {
        if t >= rows.len() {
            return Err(Error::Config(format!(
                "split manifest index {t} out of range ({} rows)",
                rows.len()
            )));
        }
        is_test[t] = true;
    }
    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_labels = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        if is_test[i] {
            test_rows.push(row);
            test_labels.push(labels[i]);
        } else {
            train_rows.push(row);
            train_labels.push(labels[i]);
        }
    }
    let features = SampleMatrix::from_rows(&train_rows)?;
    let dim = features.dim();
    let test_features = if test_rows.is_empty() {
        SampleMatrix::zeros(dim, 0)
    } else {
        SampleMatrix::from_rows(&test_rows)?
    };
    Dataset::new(name, features, train_labels, test_features, test_labels)
}

fn write_rows_csv(path: &Path, labels: &[f64], features: &SampleMatrix) -> Result<()> {
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&format!("{label}"));
        for v in features.iter_sample(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_rows_binary(path: &Path, labels: &[f64], features: &SampleMatrix) -> Result<()> {
    let n = features.len();
    let d = features.dim();
    let mut bytes = Vec::with_capacity(21 + n * (1 + d) * 8);
    bytes.extend_from_slice(BINARY_MAGIC);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(d as u64).to_le_bytes());
    for (i, label) in labels.iter().enumerate() {
        bytes.extend_from_slice(&label.to_le_bytes());
        for v in features.iter_sample(i) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Write an arbitrary vector collection in the binary container (used for
/// attribution sidecars: the leading value per row is the sample index).
pub fn save_matrix_binary(path: &Path, leading: &[f64], vectors: &SampleMatrix) -> Result<()> {
    if leading.len() != vectors.len() {
        return Err(Error::Dimension(format!(
            "{} leading values for {} vectors",
            leading.len(),
            vectors.len()
        )));
    }
    write_rows_binary(path, leading, vectors)
}

/// Write the training split (and the test split when a path is given).
pub fn save(
    ds: &Dataset,
    format: DataFormat,
    train: &Path,
    test: Option<&Path>,
) -> Result<()> {
    let write = match format {
        DataFormat::Csv => write_rows_csv,
        DataFormat::Binary => write_rows_binary,
    };
    write(train, &ds.labels, &ds.features)?;
    if let Some(p) = test {
        write(p, &ds.test_labels, &ds.test_features)?;
    }
    Ok(())
}
