//! Datasets: IDX tensors and MNIST, binarization, deskewing, and the
//! synthetic spiral and Gaussian tasks.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Magic number of an unsigned-byte IDX file with three dimensions.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic number of an unsigned-byte IDX file with one dimension.
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const IDX_UBYTE: u8 = 0x08;

/// An unsigned-byte IDX tensor. All header fields are big-endian on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub magic: u32,
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<u32>, payload: Vec<u8>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 255 {
            return Err(Error::config(
                "an IDX tensor needs between 1 and 255 dimensions",
            ));
        }
        let expected = payload_len(&dims)?;
        if expected != payload.len() {
            return Err(Error::Dimension {
                what: "IDX payload",
                expected,
                got: payload.len(),
            });
        }
        let magic = u32::from(IDX_UBYTE) << 8 | dims.len() as u32;
        Ok(IdxTensor {
            magic,
            dims,
            payload,
        })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let header: [u8; 4] = bytes
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or(Error::TruncatedHeader("magic number"))?;
        let magic = u32::from_be_bytes(header);
        let ndims = header[3] as usize;
        if header[0] != 0 || header[1] != 0 || header[2] != IDX_UBYTE || ndims == 0 {
            return Err(Error::BadMagic(magic));
        }
        let header_len = 4 + 4 * ndims;
        let dim_bytes = bytes
            .get(4..header_len)
            .ok_or(Error::TruncatedHeader("dimension sizes"))?;
        let dims: Vec<u32> = dim_bytes
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let expected = payload_len(&dims)?;
        let found = bytes.len() - header_len;
        if found < expected {
            return Err(Error::TruncatedPayload { expected, found });
        }
        if found > expected {
            return Err(Error::TrailingBytes {
                found: found - expected,
            });
        }
        Ok(IdxTensor {
            magic,
            dims,
            payload: bytes[header_len..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.payload.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }
}

fn payload_len(dims: &[u32]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .filter(|&n| n <= isize::MAX as usize)
        .ok_or_else(|| Error::DimensionOverflow(dims.to_vec()))
}

pub fn load_idx(path: &Path) -> Result<IdxTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    IdxTensor::parse(&bytes)
}

pub fn write_idx(path: &Path, tensor: &IdxTensor) -> Result<()> {
    std::fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

/// A feature vector with its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn files(self) -> (&'static str, &'static str) {
        match self {
            MnistSplit::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            MnistSplit::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

/// Greyscale images (row-major bytes) with labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Keeps only the first `n` images.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.labels.truncate(n);
            self.pixels.truncate(n * self.rows * self.cols);
        }
    }
}

/// Builds an image set from an image tensor and a label tensor.
pub fn image_set(images: IdxTensor, labels: IdxTensor) -> Result<ImageSet> {
    if images.magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic(images.magic));
    }
    if labels.magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic(labels.magic));
    }
    if images.dims[0] != labels.dims[0] {
        return Err(Error::Dimension {
            what: "label count",
            expected: images.dims[0] as usize,
            got: labels.dims[0] as usize,
        });
    }
    Ok(ImageSet {
        rows: images.dims[1] as usize,
        cols: images.dims[2] as usize,
        pixels: images.payload,
        labels: labels.payload,
    })
}

/// Loads an MNIST split from the uncompressed IDX files in `dir`.
pub fn load_mnist(dir: &Path, split: MnistSplit) -> Result<ImageSet> {
    let (img, lbl) = split.files();
    image_set(load_idx(&dir.join(img))?, load_idx(&dir.join(lbl))?)
}

/// Paths of the MNIST files for `split` under `dir`.
pub fn mnist_paths(dir: &Path, split: MnistSplit) -> (PathBuf, PathBuf) {
    let (img, lbl) = split.files();
    (dir.join(img), dir.join(lbl))
}

/// Parses pre-binarized images stored as whitespace-separated 0/1 values, one
/// image per line.
pub fn parse_amat(text: &str, pixels: usize) -> Result<Vec<Vec<u8>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" | "0.0" => Ok(0u8),
                    "1" | "1.0" => Ok(1u8),
                    other => Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected a binary pixel, found {other:?}"),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            if row.len() != pixels {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {pixels} pixels, found {}", row.len()),
                });
            }
            Ok(row)
        })
        .collect()
}

pub fn load_amat(path: &Path, pixels: usize) -> Result<Vec<Vec<u8>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_amat(&text, pixels)
}

/// Default binarization threshold.
pub const DEFAULT_THRESHOLD: u8 = 128;

/// `1` where `pixel >= threshold`, else `0`, in the input order.
pub fn binarize(image: &[u8], threshold: u8) -> Result<Vec<u8>> {
    if threshold == 0 || threshold == 255 {
        return Err(Error::config(format!(
            "binarization threshold must lie in (0, 255), got {threshold}"
        )));
    }
    Ok(image.iter().map(|&p| u8::from(p >= threshold)).collect())
}

/// Intensity moments of an image: mass, centroid, and central second moments
/// `(mu_rr, mu_rc)` normalized by mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub row: f64,
    pub col: f64,
    pub mu_rr: f64,
    pub mu_rc: f64,
}

pub fn moments(image: &[f64], rows: usize, cols: usize) -> Moments {
    let mut mass = 0.0;
    let (mut sr, mut sc) = (0.0, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let v = image[r * cols + c];
            mass += v;
            sr += v * r as f64;
            sc += v * c as f64;
        }
    }
    if mass <= 0.0 {
        return Moments {
            mass,
            row: 0.0,
            col: 0.0,
            mu_rr: 0.0,
            mu_rc: 0.0,
        };
    }
    let (row, col) = (sr / mass, sc / mass);
    let (mut rr, mut rc) = (0.0, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let v = image[r * cols + c];
            let dr = r as f64 - row;
            rr += v * dr * dr;
            rc += v * dr * (c as f64 - col);
        }
    }
    Moments {
        mass,
        row,
        col,
        mu_rr: rr / mass,
        mu_rc: rc / mass,
    }
}

/// Removes the slant of a non-negative image: each row is shifted horizontally
/// by `alpha * (r - row_centroid)` with `alpha = mu_rc / mu_rr`, resampling
/// with linear interpolation (zero outside the image) and clamping to the
/// input's intensity range. Blank or single-row images are returned unchanged.
pub fn deskew(image: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if image.len() != rows * cols {
        return Err(Error::Dimension {
            what: "deskew image",
            expected: rows * cols,
            got: image.len(),
        });
    }
    if let Some(&bad) = image.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain {
            op: "deskew intensity",
            value: bad,
        });
    }
    let m = moments(image, rows, cols);
    if m.mass <= 0.0 || m.mu_rr <= 0.0 {
        return Ok(image.to_vec());
    }
    let alpha = m.mu_rc / m.mu_rr;
    let lo = image.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let shift = alpha * (r as f64 - m.row);
        let src_row = &image[r * cols..(r + 1) * cols];
        let at = |c: isize| -> f64 {
            if c < 0 || c as usize >= cols {
                0.0
            } else {
                src_row[c as usize]
            }
        };
        for c in 0..cols {
            let x = c as f64 + shift;
            let x0 = x.floor();
            let frac = x - x0;
            let v = (1.0 - frac) * at(x0 as isize) + frac * at(x0 as isize + 1);
            out[r * cols + c] = v.clamp(lo, hi);
        }
    }
    Ok(out)
}

/// Per-feature running mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    count: u64,
    mean: Vec<f64>,
}

impl RunningMean {
    pub fn new(dim: usize) -> Self {
        RunningMean {
            count: 0,
            mean: vec![0.0; dim],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn observe(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let k = self.count as f64;
        for (m, &v) in self.mean.iter_mut().zip(x) {
            *m += (v - *m) / k;
        }
    }

    /// `x - mean`, in place.
    pub fn subtract(&self, x: &mut [f64]) {
        for (v, m) in x.iter_mut().zip(&self.mean) {
            *v -= m;
        }
    }
}

/// Shape of the synthetic spiral task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub classes: usize,
    pub r_max: f64,
    /// Angle swept by each arm, in radians.
    pub theta_span: f64,
    /// Standard deviation of the angular noise.
    pub noise: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        SpiralParams {
            classes: 3,
            r_max: 1.0,
            theta_span: 4.0,
            noise: 0.1,
        }
    }
}

/// Point of arm `class` at arm parameter `s` with angular perturbation `jitter`.
pub fn spiral_point(params: &SpiralParams, class: usize, s: f64, jitter: f64) -> [f64; 2] {
    let r = s * params.r_max;
    let theta = TAU * class as f64 / params.classes as f64 + s * params.theta_span + jitter;
    [r * theta.cos(), r * theta.sin()]
}

/// `n_per_class` points per arm with `s ~ U[0, 1)`, shuffled.
pub fn spiral_dataset(
    n_per_class: usize,
    params: &SpiralParams,
    rng: &mut RandomSource,
) -> Result<Vec<LabeledExample>> {
    if n_per_class == 0 || params.classes == 0 {
        return Err(Error::config(
            "spiral dataset needs at least one point and one class",
        ));
    }
    if !(params.noise >= 0.0 && params.r_max > 0.0) {
        return Err(Error::config(
            "spiral noise must be non-negative and radius positive",
        ));
    }
    let mut out = Vec::with_capacity(n_per_class * params.classes);
    for class in 0..params.classes {
        for _ in 0..n_per_class {
            let s = rng.next_f64();
            let jitter = params.noise * rng.normal();
            out.push(LabeledExample {
                features: spiral_point(params, class, s, jitter).to_vec(),
                label: class,
            });
        }
    }
    rng.shuffle(&mut out);
    Ok(out)
}

/// Class of the noiseless arm passing closest to `point`, found by dense search.
pub fn nearest_arm(params: &SpiralParams, point: &[f64]) -> usize {
    let steps = 2000;
    let mut best = (f64::INFINITY, 0);
    for class in 0..params.classes {
        for i in 0..=steps {
            let s = i as f64 / steps as f64;
            let [x, y] = spiral_point(params, class, s, 0.0);
            let d = (x - point[0]).powi(2) + (y - point[1]).powi(2);
            if d < best.0 {
                best = (d, class);
            }
        }
    }
    best.1
}

/// Target of the Gaussian task.
pub fn gaussian_target(z: f64) -> f64 {
    (-0.5 * z * z).exp()
}

/// `z ~ U[-3, 3)`, `x ~ Bernoulli(exp(-z^2 / 2))`.
pub fn gaussian_task_sample(rng: &mut RandomSource) -> (f64, bool) {
    let z = rng.uniform(-3.0, 3.0);
    let x = rng.bernoulli(gaussian_target(z));
    (z, x)
}

/// Centred `2 x 2` quadrant task: `x = 1` iff `z_1 z_2 >= 0`, `z ~ U[-1, 1)^2`.
pub fn xor_task_sample(rng: &mut RandomSource) -> ([f64; 2], bool) {
    let z = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
    (z, z[0] * z[1] >= 0.0)
}
