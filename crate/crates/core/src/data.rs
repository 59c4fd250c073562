//! Synthetic regression data, MNIST IDX ingestion and evaluation metrics.
//!
//! Points and label noise come from independent ChaCha8 streams, so the
//! same point seed gives the same inputs at every noise level.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad IDX magic at byte 0: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX file truncated at byte {offset}: needed {needed} bytes in total")]
    TruncatedFile { offset: usize, needed: usize },
    #[error("IDX dimensions starting at byte {offset} overflow the addressable size")]
    DimensionOverflow { offset: usize },
    #[error("no digits 5 or 8 in the selection")]
    EmptySelection,
    #[error("length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point {index} has zero norm and cannot be normalized")]
    ZeroVector { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `n` points uniform on the unit sphere in `R^d`: normalized standard
/// Gaussian vectors.
pub fn sample_sphere(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 || d < 2 {
        return Err(DataError::InvalidParameter(format!(
            "sphere sampling needs n >= 1 and d >= 2, got n = {n}, d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r > 0.0 {
                break v.into_iter().map(|x| x / r).collect();
            }
        })
        .collect())
}

/// `n` points with coordinates i.i.d. uniform on `[-1, 1]`.
pub fn sample_cube(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 || d == 0 {
        return Err(DataError::InvalidParameter(format!(
            "cube sampling needs n, d >= 1, got n = {n}, d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetId {
    Zero,
    QuadraticNorm,
    External,
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetId::Zero => "zero",
            TargetId::QuadraticNorm => "quadratic_norm",
            TargetId::External => "external",
        })
    }
}

/// Regression function `f*`.
#[derive(Clone)]
pub enum TargetSpec {
    /// `f*(x) = 0`
    Zero,
    /// `f*(x) = xᵀx`
    QuadraticNorm,
    External(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TargetSpec::{}", self.id())
    }
}

impl TargetSpec {
    pub fn id(&self) -> TargetId {
        match self {
            TargetSpec::Zero => TargetId::Zero,
            TargetSpec::QuadraticNorm => TargetId::QuadraticNorm,
            TargetSpec::External(_) => TargetId::External,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TargetSpec::Zero => 0.0,
            TargetSpec::QuadraticNorm => x.iter().map(|v| v * v).sum(),
            TargetSpec::External(f) => f(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Sphere,
    Cube,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub clean_labels: Vec<f64>,
    pub noisy_labels: Vec<f64>,
    pub noise_sigma: f64,
    pub domain: DomainTag,
    pub target: TargetId,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Replaces the label noise: `y = f*(x) + σ z`, `z` i.i.d. standard
    /// normal from a ChaCha8 stream seeded with `seed`.
    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(DataError::InvalidParameter(format!(
                "noise level must be non-negative, got {sigma}"
            )));
        }
        self.noisy_labels = if sigma == 0.0 {
            self.clean_labels.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.clean_labels
                .iter()
                .map(|y| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y + sigma * z
                })
                .collect()
        };
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// The rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            clean_labels: indices.iter().map(|&i| self.clean_labels[i]).collect(),
            noisy_labels: indices.iter().map(|&i| self.noisy_labels[i]).collect(),
            noise_sigma: self.noise_sigma,
            domain: self.domain,
            target: self.target,
        }
    }

    /// `k` rows drawn without replacement.
    pub fn subsample(&self, k: usize, seed: u64) -> Result<Self> {
        if k > self.len() {
            return Err(DataError::InvalidParameter(format!(
                "cannot draw {k} rows from {}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(k);
        Ok(self.select(&idx))
    }

    /// Shuffled split into a leading `train_fraction` part and the rest.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let (a, b) = split_indices(self.len(), train_fraction, seed)?;
        Ok((self.select(&a), self.select(&b)))
    }

    /// Same rows with every input scaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        Ok(Self {
            inputs: normalize_unit(&self.inputs)?,
            ..self.clone()
        })
    }

    /// CSV with header `x_0,…,x_{d-1},y_clean,y_noisy`; floats use the
    /// shortest decimal that round-trips.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
        header.push("y_clean".into());
        header.push("y_noisy".into());
        w.write_record(&header)?;
        for ((x, c), y) in self.inputs.iter().zip(&self.clean_labels).zip(&self.noisy_labels) {
            let row: Vec<String> = x.iter().chain([c, y]).map(|v| v.to_string()).collect();
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Index split: `round(train_fraction · n)` shuffled indices, then the rest.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(DataError::InvalidParameter(format!(
            "train fraction must lie in [0, 1], got {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = (train_fraction * n as f64).round() as usize;
    let rest = idx.split_off(k);
    Ok((idx, rest))
}

pub fn normalize_unit(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r == 0.0 {
                Err(DataError::ZeroVector { index })
            } else {
                Ok(p.iter().map(|x| x / r).collect())
            }
        })
        .collect()
}

/// Labels `f*(x_i) + ε_i` with `ε_i ~ N(0, σ²)` drawn from `noise_seed`.
pub fn make_dataset(
    points: Vec<Vec<f64>>,
    domain: DomainTag,
    target: &TargetSpec,
    sigma: f64,
    noise_seed: u64,
) -> Result<Dataset> {
    let clean: Vec<f64> = points.iter().map(|x| target.eval(x)).collect();
    Dataset {
        inputs: points,
        noisy_labels: clean.clone(),
        clean_labels: clean,
        noise_sigma: 0.0,
        domain,
        target: target.id(),
    }
    .with_noise(sigma, noise_seed)
}

/// Root-mean-square distance between two equal-length vectors.
pub fn rms_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DataError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(DataError::InvalidParameter("no evaluation points".into()));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// `√((1/N) Σ (f̂(x̄_i) − f*(x̄_i))²)` over noiseless test points.
pub fn l2_error<F>(predictor: F, target: &TargetSpec, test_points: &[Vec<f64>]) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut predictor = predictor;
    let pred: Vec<f64> = test_points.iter().map(|x| predictor(x)).collect();
    let truth: Vec<f64> = test_points.iter().map(|x| target.eval(x)).collect();
    rms_distance(&pred, &truth)
}

/// Sign of a prediction under the tie rule `f̂ ≥ 0 ↦ +1`.
pub fn sign_label(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Fraction of predictions whose sign disagrees with `±1` labels.
pub fn misclassification_rate_values(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(DataError::DimensionMismatch {
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(DataError::InvalidParameter("no evaluation points".into()));
    }
    let wrong = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| sign_label(**p) != **y)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

pub fn misclassification_rate<F>(predictor: F, dataset: &Dataset) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut predictor = predictor;
    let pred: Vec<f64> = dataset.inputs.iter().map(|x| predictor(x)).collect();
    misclassification_rate_values(&pred, &dataset.clean_labels)
}

/// Raw IDX image tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` bytes, image-major, row-major within an image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let len = self.image_len();
        &self.pixels[i * len..(i + 1) * len]
    }

    /// Image `i` scaled to `[0, 1]` by `/255`.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&p| p as f64 / 255.0).collect()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or(DataError::TruncatedFile {
            offset: bytes.len(),
            needed: offset + 4,
        })?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, dims: &[usize]) -> Result<usize> {
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_add(header))
        .ok_or(DataError::DimensionOverflow { offset: 4 })?;
    if bytes.len() < len {
        return Err(DataError::TruncatedFile {
            offset: bytes.len(),
            needed: len,
        });
    }
    Ok(len)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let end = payload(bytes, 16, &[count, rows, cols])?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..end].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let end = payload(bytes, 8, &[count])?;
    Ok(bytes[8..end].to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_idx_images(&read_file(path.as_ref())?)
}

/// Images as length-`rows·cols` vectors with pixels scaled to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let raw = read_idx_images(path)?;
    Ok((0..raw.count).map(|i| raw.vector(i)).collect())
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&read_file(path.as_ref())?)
}

pub fn encode_idx_images(images: &IdxImages) -> Result<Vec<u8>> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(DataError::DimensionMismatch {
            expected: images.count * images.rows * images.cols,
            found: images.pixels.len(),
        });
    }
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IDX_IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_idx_images(images)?).map_err(io_err(path))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_idx_labels(labels)).map_err(io_err(path))
}

fn five_eight_dataset(
    selected: impl Iterator<Item = (Vec<f64>, u8)>,
    normalize: bool,
) -> Result<Dataset> {
    let (inputs, labels): (Vec<Vec<f64>>, Vec<f64>) = selected
        .filter(|(_, l)| *l == 5 || *l == 8)
        .map(|(x, l)| (x, if l == 5 { -1.0 } else { 1.0 }))
        .unzip();
    if inputs.is_empty() {
        return Err(DataError::EmptySelection);
    }
    let inputs = if normalize {
        normalize_unit(&inputs)?
    } else {
        inputs
    };
    Ok(Dataset {
        inputs,
        noisy_labels: labels.clone(),
        clean_labels: labels,
        noise_sigma: 0.0,
        domain: DomainTag::External,
        target: TargetId::External,
    })
}

/// Keeps digits 5 (label −1) and 8 (label +1). Inputs stay raw unless
/// `normalize` is set.
pub fn relabel_5v8(images: &[Vec<f64>], labels: &[u8], normalize: bool) -> Result<Dataset> {
    if images.len() != labels.len() {
        return Err(DataError::DimensionMismatch {
            expected: labels.len(),
            found: images.len(),
        });
    }
    five_eight_dataset(
        images.iter().cloned().zip(labels.iter().copied()),
        normalize,
    )
}

/// Reads an image/label IDX pair and keeps the 5s and 8s, converting only
/// the selected images to floats.
pub fn load_mnist_5v8(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    normalize: bool,
) -> Result<Dataset> {
    let images = read_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(DataError::DimensionMismatch {
            expected: labels.len(),
            found: images.count,
        });
    }
    let selected = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 5 || l == 8)
        .map(|(i, &l)| (images.vector(i), l));
    five_eight_dataset(selected, normalize)
}
