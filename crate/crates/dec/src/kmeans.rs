//! Lloyd's k-means with probabilistic (k-means++ style) seeding and
//! multiple restarts; the best restart by inertia wins.
//!
//! Used to place initial centroids in the embedding space and as the
//! clustering half of the autoencoder + k-means baseline.

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng::RngState;

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansConfig {
    /// 20 restarts, best solution kept; generous iteration cap.
    fn default() -> Self {
        KMeansConfig {
            restarts: 20,
            max_iters: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// k x m centroid coordinates.
    pub centroids: Matrix,
    /// Index of the nearest centroid per point.
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
}

/// Nearest-centroid labels; ties go to the lowest centroid index.
pub fn assign(points: &Matrix, centroids: &Matrix) -> Result<Vec<usize>> {
    if points.cols() != centroids.cols() {
        return Err(Error::shape(format!(
            "points have {} columns, centroids {}",
            points.cols(),
            centroids.cols()
        )));
    }
    if centroids.rows() == 0 {
        return Err(Error::argument("need at least one centroid"));
    }
    Ok(points
        .row_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = squared_distance(p, centroids.row(0));
            for j in 1..centroids.rows() {
                let d = squared_distance(p, centroids.row(j));
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect())
}

fn inertia_of(points: &Matrix, centroids: &Matrix, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(points.row(i), centroids.row(a)))
        .sum()
}

/// k-means++ seeding: first center uniform, later centers drawn with
/// probability proportional to squared distance from the nearest chosen one.
fn seed_centroids(points: &Matrix, k: usize, rng: &mut RngState) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.next_below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));

    let mut dist_sq: Vec<f64> = points
        .row_iter()
        .map(|p| squared_distance(p, centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dist_sq.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass collapsed (duplicate points); fall back to
            // a uniform draw.
            rng.next_below(n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in dist_sq.iter_mut().enumerate() {
            let nd = squared_distance(points.row(i), centroids.row(c));
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Moves each empty cluster's centroid onto the point currently farthest
/// from its assigned centroid, excluding points already consumed this pass.
fn reseed_empty(
    points: &Matrix,
    centroids: &mut Matrix,
    assignments: &[usize],
    counts: &[usize],
) {
    let mut taken = vec![false; points.rows()];
    for j in 0..centroids.rows() {
        if counts[j] > 0 {
            continue;
        }
        let mut far_i = 0;
        let mut far_d = -1.0;
        for i in 0..points.rows() {
            if taken[i] {
                continue;
            }
            let d = squared_distance(points.row(i), centroids.row(assignments[i]));
            if d > far_d {
                far_d = d;
                far_i = i;
            }
        }
        centroids.row_mut(j).copy_from_slice(points.row(far_i));
        taken[far_i] = true;
    }
}

/// One seeded Lloyd run. Returns the result and the inertia recorded after
/// every assignment step; the trace is non-increasing.
pub fn kmeans_single(
    points: &Matrix,
    k: usize,
    max_iters: usize,
    rng: &mut RngState,
) -> Result<(KMeansResult, Vec<f64>)> {
    check_args(points, k)?;
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignments = assign(points, &centroids)?;
    let mut trace = vec![inertia_of(points, &centroids, &assignments)];
    for _ in 0..max_iters {
        // Update step: centroids move to the mean of their members.
        let mut sums = Matrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, &s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *c = s * inv;
                }
            }
        }
        reseed_empty(points, &mut centroids, &assignments, &counts);

        let next = assign(points, &centroids)?;
        trace.push(inertia_of(points, &centroids, &next));
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }
    let inertia = inertia_of(points, &centroids, &assignments);
    Ok((
        KMeansResult {
            centroids,
            assignments,
            inertia,
        },
        trace,
    ))
}

fn check_args(points: &Matrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    if points.rows() < k {
        return Err(Error::argument(format!(
            "need at least k={} points, got {}",
            k,
            points.rows()
        )));
    }
    Ok(())
}

/// Best of `restarts` independent seeded runs. Restart r draws from the RNG
/// stream derived as child r of `rng`, so results do not depend on
/// evaluation order.
pub fn kmeans(
    points: &Matrix,
    k: usize,
    restarts: usize,
    max_iters: usize,
    rng: &RngState,
) -> Result<KMeansResult> {
    check_args(points, k)?;
    if restarts == 0 {
        return Err(Error::argument("restarts must be at least 1"));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let mut stream = rng.derive(r as u64);
        let (result, _) = kmeans_single(points, k, max_iters, &mut stream)?;
        if best.as_ref().map_or(true, |b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart ran"))
}
