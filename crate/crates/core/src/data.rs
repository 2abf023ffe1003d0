//! Dataset loading: IDX image archives, labeled CSV, and a seeded
//! two-Gaussian generator, plus seeded train/test splits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Batch;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Features, labels, and the sup-norm bound `C` of the features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    feature_bound: f64,
}

impl Dataset {
    /// Validates shapes, finiteness and label range, and computes `C`.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: features.nrows(), actual: labels.len() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset has non-finite features".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        let feature_bound = features.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Dataset { features, labels, class_count, feature_bound })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// `max_i ||x_i||_inf`.
    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let feature_bound = features.iter().fold(0.0f64, |m, v: &f64| m.max(v.abs()));
        Dataset { features, labels, class_count: self.class_count, feature_bound }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Writes a CSV with header `f0,...,f{d-1},label`; labels are class ids.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &y) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How CSV label strings become class ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMapping {
    /// Distinct labels numbered in order of first appearance.
    #[default]
    FirstAppearance,
    /// Labels are already non-negative integer class ids.
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub count: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        label_mapping: LabelMapping,
    },
    TwoGaussians(SyntheticSpec),
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Idx { images, labels, limit } => load_idx(images, labels, *limit),
        DataSource::Csv { path, label_column, label_mapping } => {
            read_csv(BufReader::new(File::open(path)?), label_column, *label_mapping)
        }
        DataSource::TwoGaussians(spec) => two_gaussians(spec),
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn check_magic(found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!(
            "IDX magic mismatch: expected {expected:#010x}, found {found:#010x}"
        )));
    }
    Ok(())
}

/// Reads an IDX3 image file; pixels are scaled to `[0, 1]`. Returns the
/// `N x (rows * cols)` matrix.
pub fn read_idx_images<R: Read>(mut r: R, limit: Option<usize>) -> Result<Array2<f64>> {
    check_magic(read_u32(&mut r)?, IDX_IMAGES_MAGIC)?;
    let count = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let d = rows * cols;
    let mut raw = vec![0u8; n * d];
    r.read_exact(&mut raw)?;
    Ok(Array2::from_shape_vec((n, d), raw.into_iter().map(|p| p as f64 / 255.0).collect())
        .expect("shape matches buffer"))
}

/// Reads an IDX1 label file.
pub fn read_idx_labels<R: Read>(mut r: R, limit: Option<usize>) -> Result<Vec<usize>> {
    check_magic(read_u32(&mut r)?, IDX_LABELS_MAGIC)?;
    let count = read_u32(&mut r)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let mut raw = vec![0u8; n];
    r.read_exact(&mut raw)?;
    Ok(raw.into_iter().map(usize::from).collect())
}

/// Writes images (values in `[0, 1]`, rounded to bytes) as IDX3.
pub fn write_idx_images<W: Write>(mut w: W, images: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != images.ncols() {
        return Err(Error::DimensionMismatch { expected: rows * cols, actual: images.ncols() });
    }
    w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    for v in [images.nrows(), rows, cols] {
        w.write_all(&(v as u32).to_be_bytes())?;
    }
    let bytes: Vec<u8> = images.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut w: W, labels: &[usize]) -> Result<()> {
    w.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    let bytes: Vec<u8> = labels.iter().map(|&y| y as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn load_idx(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let x = read_idx_images(BufReader::new(File::open(images)?), limit)?;
    let y = read_idx_labels(BufReader::new(File::open(labels)?), limit)?;
    let classes = y.iter().max().map_or(0, |m| m + 1).max(10);
    let ds = Dataset::new(x, y, classes)?;
    debug_assert!(ds.feature_bound() <= 1.0);
    Ok(ds)
}

/// Reads a CSV with a header row. Every column except `label_column` must be numeric.
pub fn read_csv<R: Read>(input: R, label_column: &str, mapping: LabelMapping) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse(format!("no column named '{label_column}'")))?;
    let d = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        // the csv reader rejects ragged rows itself
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            if j == label_idx {
                let id = match mapping {
                    LabelMapping::FirstAppearance => {
                        let next = ids.len();
                        *ids.entry(field.to_string()).or_insert(next)
                    }
                    LabelMapping::Numeric => field.trim().parse().map_err(|_| {
                        Error::Parse(format!("row {}: label '{field}' is not a class id", line + 1))
                    })?,
                };
                labels.push(id);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("row {}: non-numeric feature '{field}'", line + 1))
                })?;
                features.push(v);
            }
        }
        rows += 1;
    }
    let classes = match mapping {
        LabelMapping::FirstAppearance => ids.len(),
        LabelMapping::Numeric => labels.iter().max().map_or(0, |m| m + 1),
    };
    let x = Array2::from_shape_vec((rows, d), features).map_err(|e| Error::Parse(e.to_string()))?;
    Dataset::new(x, labels, classes)
}

/// Two isotropic unit-variance Gaussian classes with means `+-separation`
/// along the normalized all-ones direction. Labels alternate 0, 1, 0, ...
pub fn two_gaussians(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.dim == 0 || spec.count == 0 {
        return Err(Error::InvalidArgument("synthetic data needs positive dim and count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = spec.separation / (spec.dim as f64).sqrt();
    let labels: Vec<usize> = (0..spec.count).map(|i| i % 2).collect();
    let mut x = Array2::zeros((spec.count, spec.dim));
    for (mut row, &y) in x.rows_mut().into_iter().zip(&labels) {
        let mean = if y == 0 { -offset } else { offset };
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = mean + z;
        }
    }
    Dataset::new(x, labels, 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    /// Per-feature min-max to `[-1, 1]` using training statistics.
    MinMaxSymmetric,
}

/// Seeded split; normalization statistics come from the training side only.
pub fn split_and_normalize(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
    normalization: Normalization,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} must be in (0, 1)"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "split of {n} rows at {train_fraction} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = dataset.select(&idx[..n_train]);
    let mut test = dataset.select(&idx[n_train..]);
    if normalization == Normalization::MinMaxSymmetric {
        let mins = train.features.fold_axis(Axis(0), f64::INFINITY, |m, &v| m.min(v));
        let maxs = train.features.fold_axis(Axis(0), f64::NEG_INFINITY, |m, &v| m.max(v));
        for ds in [&mut train, &mut test] {
            for mut row in ds.features.rows_mut() {
                for ((v, &lo), &hi) in row.iter_mut().zip(&mins).zip(&maxs) {
                    *v = if hi > lo { 2.0 * (*v - lo) / (hi - lo) - 1.0 } else { 0.0 };
                }
            }
            ds.feature_bound = ds.features.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
    }
    Ok((train, test))
}
