//! Principal-component projection of embeddings to 2-D for plot-ready
//! output. Deterministic: cyclic Jacobi eigensolver plus a fixed sign
//! convention.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Eigenvalues (descending) and matching eigenvectors (one per row) of a
/// symmetric matrix, by cyclic Jacobi rotations.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let d = a.rows();
    if a.cols() != d {
        return Err(Error::shape(format!(
            "matrix must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if d == 0 {
        return Err(Error::argument("cannot decompose an empty matrix"));
    }
    let scale = a.data().iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    for i in 0..d {
        for j in 0..d {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-9 * scale.max(1.0) {
                return Err(Error::argument(format!(
                    "matrix is not symmetric at ({}, {})",
                    i, j
                )));
            }
        }
    }
    let mut m = a.clone();
    let mut vecs = Matrix::zeros(d, d);
    for i in 0..d {
        vecs.set(i, i, 1.0);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= 1e-14 * scale.max(1e-300) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (app, aqq) = (m.get(p, p), m.get(q, q));
                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for i in 0..d {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = m.get(i, p);
                    let aiq = m.get(i, q);
                    m.set(i, p, c * aip - s * aiq);
                    m.set(p, i, c * aip - s * aiq);
                    m.set(i, q, c * aiq + s * aip);
                    m.set(q, i, c * aiq + s * aip);
                }
                for i in 0..d {
                    let vip = vecs.get(i, p);
                    let viq = vecs.get(i, q);
                    vecs.set(i, p, c * vip - s * viq);
                    vecs.set(i, q, c * viq + s * vip);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut eigenvectors = Matrix::zeros(d, d);
    for (row, &col) in order.iter().enumerate() {
        for i in 0..d {
            eigenvectors.set(row, i, vecs.get(i, col));
        }
        // Sign convention: the entry of largest magnitude is positive.
        let r = eigenvectors.row(row);
        let lead = r
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if eigenvectors.get(row, lead) < 0.0 {
            for v in eigenvectors.row_mut(row) {
                *v = -*v;
            }
        }
    }
    Ok((eigenvalues, eigenvectors))
}

/// 2-D projection of row vectors onto the top two principal axes of their
/// covariance. Returns the n x 2 projection and the top-two eigenvalues
/// (explained variances); a 1-D input gets a zero second axis.
pub fn project_2d(points: &Matrix) -> Result<(Matrix, [f64; 2])> {
    let n = points.rows();
    let d = points.cols();
    if n == 0 || d == 0 {
        return Err(Error::argument("cannot project an empty matrix"));
    }
    let means = points.column_means();
    let mut centered = points.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    // Covariance (1/n) X^T X of the centered data.
    let mut cov = centered.matmul_transpose_a(&centered);
    cov.scale_inplace(1.0 / n as f64);
    let (eigenvalues, eigenvectors) = symmetric_eigen(&cov)?;

    let mut axes = Matrix::zeros(2, d);
    let mut variances = [0.0f64; 2];
    for c in 0..2.min(d) {
        axes.row_mut(c).copy_from_slice(eigenvectors.row(c));
        variances[c] = eigenvalues[c];
    }
    let projection = centered.matmul_transpose_b(&axes);
    Ok((projection, variances))
}
