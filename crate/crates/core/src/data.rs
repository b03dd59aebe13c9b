//! Dataset ingestion: IDX image and label files, binarization, 2×2
//! downsampling, train/validation splits, and synthetic factor-model data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{read_file, Error, Result};
use crate::math::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory with the IDX files.
pub const DATA_DIR_ENV: &str = "PVI_DATA_DIR";
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

/// `count` row-major `rows × cols` byte images, stored contiguously.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Images {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl Images {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn read_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or_else(|| Error::Length {
        path: path.to_string(),
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn check_magic(bytes: &[u8], expected: u32, path: &str) -> Result<()> {
    let found = read_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::Magic {
            path: path.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &str) -> Result<&'a [u8]> {
    if bytes.len() < header + len {
        return Err(Error::Length {
            path: path.to_string(),
            expected: header + len,
            found: bytes.len(),
        });
    }
    Ok(&bytes[header..header + len])
}

/// Parses an IDX3 image file held in memory; `path` only labels errors.
pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<Images> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let count = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let pixels = payload(bytes, 16, count * rows * cols, path)?.to_vec();
    Ok(Images {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let count = read_u32(bytes, 4, path)? as usize;
    Ok(payload(bytes, 8, count, path)?.to_vec())
}

pub fn encode_idx_images(images: &Images) -> Result<Vec<u8>> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(Error::Shape {
            context: "IDX images",
            expected: images.count * images.rows * images.cols,
            found: images.pixels.len(),
        });
    }
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Images> {
    let path = path.as_ref();
    parse_idx_images(&read_file(path)?, &path.display().to_string())
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&read_file(path)?, &path.display().to_string())
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &Images) -> Result<()> {
    fs::write(path, encode_idx_images(images)?)?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    fs::write(path, encode_idx_labels(labels))?;
    Ok(())
}

/// `pixel / 255 ≥ threshold → 1`, else 0.
pub fn binarize_pixels(pixels: &[u8], threshold: f64) -> Vec<f64> {
    pixels
        .iter()
        .map(|&p| {
            if p as f64 / 255.0 >= threshold {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

pub fn binarize(images: &Images, threshold: f64) -> Vec<Vec<f64>> {
    (0..images.count)
        .map(|i| binarize_pixels(images.image(i), threshold))
        .collect()
}

/// Averages non-overlapping 2×2 blocks (rounding half up); odd trailing
/// rows and columns are dropped.
pub fn downsample_2x2(images: &Images) -> Images {
    let (rows, cols) = (images.rows / 2, images.cols / 2);
    let mut pixels = Vec::with_capacity(images.count * rows * cols);
    for i in 0..images.count {
        let img = images.image(i);
        for r in 0..rows {
            for c in 0..cols {
                let at = |dr: usize, dc: usize| img[(2 * r + dr) * images.cols + 2 * c + dc] as u32;
                let sum = at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1);
                pixels.push(((sum + 2) / 4) as u8);
            }
        }
    }
    Images {
        count: images.count,
        rows,
        cols,
        pixels,
    }
}

/// Validation is the last `n_valid` items; training is the first `n_train`
/// of the remainder.
pub fn train_validation_split<T: Clone>(
    items: &[T],
    n_train: usize,
    n_valid: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    if n_train + n_valid > items.len() {
        return Err(Error::Config(format!(
            "requested {n_train} training + {n_valid} validation items but only {} available",
            items.len()
        )));
    }
    let split = items.len() - n_valid;
    Ok((items[..n_train].to_vec(), items[split..].to_vec()))
}

/// The directory named by `PVI_DATA_DIR`, or `data/mnist-subset`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mnist-subset"))
}

/// Loads the training image file from `dir`, optionally 2×2-downsampled,
/// and binarizes it.
pub fn load_binary_images(dir: &Path, downsample: bool, threshold: f64) -> Result<Vec<Vec<f64>>> {
    let mut images = load_idx_images(dir.join(TRAIN_IMAGES))?;
    if downsample {
        images = downsample_2x2(&images);
    }
    Ok(binarize(&images, threshold))
}

/// Samples `z_ik ~ Bernoulli(π)` and `x_i ~ N(Σ_k z_ik μ_k, σ² I)`.
pub fn synth_factor_data<R: Rng + ?Sized>(
    mu: &Matrix,
    pi: f64,
    sigma2: f64,
    n: usize,
    rng: &mut R,
) -> Result<(Matrix, Matrix)> {
    if !(0.0..=1.0).contains(&pi) || !(sigma2 >= 0.0) {
        return Err(Error::Config(format!("invalid π={pi} or σ²={sigma2}")));
    }
    let (k, d) = (mu.rows, mu.cols);
    let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut x = Matrix::zeros(n, d);
    let mut z = Matrix::zeros(n, k);
    for i in 0..n {
        for kk in 0..k {
            if rng.random::<f64>() < pi {
                z.set(i, kk, 1.0);
            }
        }
        for j in 0..d {
            let mean: f64 = (0..k).map(|kk| z.get(i, kk) * mu.get(kk, j)).sum();
            x.set(i, j, mean + noise.sample(rng));
        }
    }
    Ok((x, z))
}

/// Writes a header row `x0,x1,…` then one row per line.
pub fn write_csv(path: impl AsRef<Path>, x: &Matrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = (0..x.cols).map(|j| format!("x{j}")).collect();
    writeln!(f, "{}", header.join(","))?;
    for i in 0..x.rows {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = String::from_utf8(read_file(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty CSV", path.display())))?;
    let cols = header.split(',').count();
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Parse(format!(
                "{} line {}: {} fields, header has {cols}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        for f in fields {
            data.push(f.trim().parse::<f64>().map_err(|e| {
                Error::Parse(format!("{} line {}: {e}", path.display(), lineno + 2))
            })?);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}
