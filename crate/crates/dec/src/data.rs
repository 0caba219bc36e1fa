//! Dataset ingestion and preparation: IDX and CSV loaders, the global
//! scale normalization, deterministic train/validation splits, the
//! class-imbalance subsampling protocol, and a synthetic blob generator
//! for fast ground-truth experiments.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe partial content. Creates missing parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::argument(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Feature matrix plus optional ground-truth labels. Labels exist for
/// evaluation only; no training entry point accepts them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub name: String,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    if bytes.len() < offset + 4 {
        return Err(Error::format(
            path,
            format!("byte {}", offset),
            format!("truncated header: need 4 bytes, file has {}", bytes.len()),
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image file (and optionally its label file) into an
/// n x (rows*cols) matrix with pixel values scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let path_str = images_path.display().to_string();
    let bytes = std::fs::read(images_path)?;
    let magic = read_be_u32(&bytes, 0, &path_str)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            &path_str,
            "byte 0",
            format!("bad magic 0x{:08x}, expected 0x{:08x}", magic, IDX_IMAGES_MAGIC),
        ));
    }
    let n = read_be_u32(&bytes, 4, &path_str)? as usize;
    let height = read_be_u32(&bytes, 8, &path_str)? as usize;
    let width = read_be_u32(&bytes, 12, &path_str)? as usize;
    let dim = height * width;
    let expected = 16 + n * dim;
    if bytes.len() < expected {
        return Err(Error::format(
            &path_str,
            format!("byte {}", bytes.len()),
            format!(
                "truncated pixel data: header promises {} bytes, file has {}",
                expected,
                bytes.len()
            ),
        ));
    }
    let data: Vec<f64> = bytes[16..expected].iter().map(|&b| b as f64 / 255.0).collect();
    let features = Matrix::from_vec(n, dim, data)?;

    let labels = match labels_path {
        Some(lp) => Some(load_idx_labels(lp, n)?),
        None => None,
    };
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_string());
    Ok(Dataset {
        features,
        labels,
        name,
    })
}

fn load_idx_labels(path: &Path, expected_n: usize) -> Result<Vec<usize>> {
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path)?;
    let magic = read_be_u32(&bytes, 0, &path_str)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            &path_str,
            "byte 0",
            format!("bad magic 0x{:08x}, expected 0x{:08x}", magic, IDX_LABELS_MAGIC),
        ));
    }
    let n = read_be_u32(&bytes, 4, &path_str)? as usize;
    if n != expected_n {
        return Err(Error::format(
            &path_str,
            "byte 4",
            format!("label count {} does not match image count {}", n, expected_n),
        ));
    }
    if bytes.len() < 8 + n {
        return Err(Error::format(
            &path_str,
            format!("byte {}", bytes.len()),
            format!("truncated labels: need {} bytes, file has {}", 8 + n, bytes.len()),
        ));
    }
    Ok(bytes[8..8 + n].iter().map(|&b| b as usize).collect())
}

/// Loads a rectangular numeric CSV. A non-numeric first line is treated as
/// a header and skipped. `label_column` extracts that column (0-based) as
/// integer labels and excludes it from the features.
pub fn load_csv(path: &Path, label_column: Option<usize>) -> Result<Dataset> {
    let path_str = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.trim().parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && labels.is_empty() && width.is_none() => {
                // Header row.
                continue;
            }
            Err(_) => {
                let bad = cells
                    .iter()
                    .find(|c| c.trim().parse::<f64>().is_err())
                    .unwrap();
                return Err(Error::format(
                    &path_str,
                    format!("line {}", line_no),
                    format!("non-numeric cell {:?}", bad),
                ));
            }
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::format(
                    &path_str,
                    format!("line {}", line_no),
                    format!("ragged row: {} cells, expected {}", values.len(), w),
                ));
            }
            _ => {}
        }
        match label_column {
            Some(col) => {
                if col >= values.len() {
                    return Err(Error::format(
                        &path_str,
                        format!("line {}", line_no),
                        format!("label column {} out of range for {} cells", col, values.len()),
                    ));
                }
                let raw = values[col];
                if raw < 0.0 || raw.fract() != 0.0 {
                    return Err(Error::format(
                        &path_str,
                        format!("line {}", line_no),
                        format!("label cell {} is not a non-negative integer", raw),
                    ));
                }
                labels.push(raw as usize);
                let mut feat = values;
                feat.remove(col);
                rows.push(feat);
            }
            None => rows.push(values),
        }
    }
    if rows.is_empty() {
        return Err(Error::format(&path_str, "line 1", "no data rows"));
    }
    let features = Matrix::from_rows(&rows)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    Ok(Dataset {
        features,
        labels: if label_column.is_some() { Some(labels) } else { None },
        name,
    })
}

/// Writes features (and labels, as a final integer column) as CSV with
/// 17-significant-digit scientific notation, enough to round-trip 64-bit
/// values exactly.
pub fn save_csv(path: &Path, features: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != features.rows() {
            return Err(Error::argument(format!(
                "{} labels for {} rows",
                l.len(),
                features.rows()
            )));
        }
    }
    let mut out = String::new();
    for i in 0..features.rows() {
        let mut first = true;
        for &v in features.row(i) {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", v);
            first = false;
        }
        if let Some(l) = labels {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{}", l[i]);
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Scales all features by one global scalar s so that the mean over points
/// of (1/d)*||s*x_i||^2 equals 1. Returns s.
pub fn normalize(dataset: &mut Dataset) -> Result<f64> {
    let n = dataset.features.rows();
    let d = dataset.features.cols();
    if n == 0 || d == 0 {
        return Err(Error::DegenerateData("empty dataset cannot be normalized".to_string()));
    }
    let total_sq = dataset.features.frobenius_sq();
    if total_sq <= 0.0 {
        return Err(Error::DegenerateData(
            "all-zero dataset cannot be normalized".to_string(),
        ));
    }
    let s = ((n * d) as f64 / total_sq).sqrt();
    dataset.features.scale_inplace(s);
    Ok(s)
}

/// Keep-probability of class `c` out of `n_classes` under the linear
/// imbalance ramp: class 0 keeps r_min, the last class keeps 1.
pub fn keep_probability(c: usize, n_classes: usize, r_min: f64) -> f64 {
    if n_classes <= 1 {
        return 1.0;
    }
    r_min + c as f64 * (1.0 - r_min) / (n_classes - 1) as f64
}

/// Subsamples with per-class keep probabilities interpolating from r_min
/// (class 0) to 1 (last class), so expected class sizes are imbalanced by
/// a factor of 1/r_min between the extremes.
pub fn imbalanced_subsample(dataset: &Dataset, r_min: f64, rng: &mut RngState) -> Result<Dataset> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::argument("imbalanced subsampling needs labels"))?;
    if !(r_min > 0.0 && r_min <= 1.0) {
        return Err(Error::argument(format!(
            "r_min must be in (0, 1], got {}",
            r_min
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut keep_rows = Vec::new();
    let mut keep_labels = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        if rng.next_f64() < keep_probability(c, n_classes, r_min) {
            keep_rows.push(i);
            keep_labels.push(c);
        }
    }
    Ok(Dataset {
        features: dataset.features.gather_rows(&keep_rows),
        labels: Some(keep_labels),
        name: dataset.name.clone(),
    })
}

/// Lattice placement guaranteeing pairwise center distance >= separation:
/// distinct base-g digit vectors scaled by the separation.
fn blob_centers(k: usize, dim: usize, separation: f64) -> Matrix {
    let mut g = 1usize;
    while g.pow(dim as u32) < k {
        g += 1;
    }
    let mut centers = Matrix::zeros(k, dim);
    for c in 0..k {
        let mut rem = c;
        for d in 0..dim {
            centers.set(c, d, (rem % g) as f64 * separation);
            rem /= g;
        }
    }
    centers
}

/// k isotropic Gaussian clusters with per-axis deviation sigma around
/// centers at pairwise distance >= center_separation; labels record the
/// generating component. Rows are shuffled deterministically under seed.
pub fn make_blobs(
    n: usize,
    k: usize,
    dim: usize,
    center_separation: f64,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if k == 0 || dim == 0 {
        return Err(Error::argument("k and dim must be positive"));
    }
    if n < k {
        return Err(Error::argument(format!(
            "need at least one point per cluster: n={}, k={}",
            n, k
        )));
    }
    if !(center_separation > 0.0) {
        return Err(Error::argument(format!(
            "center_separation must be positive, got {}",
            center_separation
        )));
    }
    if sigma < 0.0 {
        return Err(Error::argument(format!("sigma must be non-negative, got {}", sigma)));
    }
    let centers = blob_centers(k, dim, center_separation);
    let mut rng = RngState::new(seed);
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // Round-robin keeps class sizes within one point of each other.
        let c = i % k;
        labels.push(c);
        let row = features.row_mut(i);
        for (d, v) in row.iter_mut().enumerate() {
            *v = centers.get(c, d) + sigma * rng.next_normal();
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let features = features.gather_rows(&perm);
    let labels = perm.iter().map(|&i| labels[i]).collect();
    Ok(Dataset {
        features,
        labels: Some(labels),
        name: "blobs".to_string(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Disjoint, exhaustive, deterministic train/validation split.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::argument(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = dataset.n();
    if n < 2 {
        return Err(Error::argument("need at least 2 points to split"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    RngState::new(spec.seed).shuffle(&mut perm);
    let train_count = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, val_idx) = perm.split_at(train_count);
    let pick = |idx: &[usize], suffix: &str| Dataset {
        features: dataset.features.gather_rows(idx),
        labels: dataset
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect()),
        name: format!("{}-{}", dataset.name, suffix),
    };
    Ok((pick(train_idx, "train"), pick(val_idx, "val")))
}
