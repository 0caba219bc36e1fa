//! Unsupervised evaluation: optimal cluster-to-label matching for accuracy,
//! normalized mutual information, and the train/validation loss ratio used
//! for choosing the number of clusters.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Co-occurrence counts between two labelings over the same points.
/// Row indices compact the first labeling's distinct values in sorted
/// order, column indices the second's.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    counts: Vec<usize>,
    rows: usize,
    cols: usize,
    row_marginals: Vec<usize>,
    col_marginals: Vec<usize>,
    total: usize,
    row_values: Vec<usize>,
    col_values: Vec<usize>,
}

impl ContingencyTable {
    pub fn from_pairs(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::argument(format!(
                "labelings have different lengths: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(Error::argument("cannot tabulate zero points"));
        }
        let row_values = distinct_sorted(a);
        let col_values = distinct_sorted(b);
        let (rows, cols) = (row_values.len(), col_values.len());
        let mut counts = vec![0usize; rows * cols];
        for (&va, &vb) in a.iter().zip(b) {
            let i = row_values.binary_search(&va).unwrap();
            let j = col_values.binary_search(&vb).unwrap();
            counts[i * cols + j] += 1;
        }
        let mut row_marginals = vec![0usize; rows];
        let mut col_marginals = vec![0usize; cols];
        for i in 0..rows {
            for j in 0..cols {
                row_marginals[i] += counts[i * cols + j];
                col_marginals[j] += counts[i * cols + j];
            }
        }
        Ok(ContingencyTable {
            counts,
            rows,
            cols,
            row_marginals,
            col_marginals,
            total: a.len(),
            row_values,
            col_values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self, i: usize, j: usize) -> usize {
        self.counts[i * self.cols + j]
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn row_marginals(&self) -> &[usize] {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &[usize] {
        &self.col_marginals
    }

    /// Distinct original values behind the row indices.
    pub fn row_values(&self) -> &[usize] {
        &self.row_values
    }

    pub fn col_values(&self) -> &[usize] {
        &self.col_values
    }
}

fn distinct_sorted(xs: &[usize]) -> Vec<usize> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Minimum-cost perfect matching on a square cost matrix by potentials and
/// shortest augmenting paths, O(n^3). Returns the column matched to each
/// row and the total cost.
pub fn hungarian(cost: &Matrix) -> Result<(Vec<usize>, f64)> {
    if cost.rows() != cost.cols() {
        return Err(Error::argument(format!(
            "cost matrix must be square, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    if !cost.is_finite() {
        return Err(Error::argument("cost matrix contains non-finite entries"));
    }
    let n = cost.rows();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0f64; n]; // row potentials
    let mut v = vec![0.0f64; n + 1]; // column potentials, last is virtual
    let mut matched_row = vec![NONE; n + 1]; // per column, including virtual

    for i in 0..n {
        matched_row[n] = i;
        let mut j0 = n;
        let mut min_reduced = vec![f64::INFINITY; n + 1];
        let mut parent = vec![n; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j_next = NONE;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let reduced = cost.get(i0, j) - u[i0] - v[j];
                if reduced < min_reduced[j] {
                    min_reduced[j] = reduced;
                    parent[j] = j0;
                }
                if min_reduced[j] < delta {
                    delta = min_reduced[j];
                    j_next = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    if matched_row[j] != NONE {
                        u[matched_row[j]] += delta;
                    }
                    v[j] -= delta;
                } else {
                    min_reduced[j] -= delta;
                }
            }
            j0 = j_next;
            if matched_row[j0] == NONE {
                break;
            }
        }
        // Flip the augmenting path back to the virtual column.
        while j0 != n {
            let j_prev = parent[j0];
            matched_row[j0] = matched_row[j_prev];
            j0 = j_prev;
        }
    }

    let mut assignment = vec![0usize; n];
    let mut total = 0.0;
    for j in 0..n {
        let i = matched_row[j];
        assignment[i] = j;
        total += cost.get(i, j);
    }
    Ok((assignment, total))
}

/// Best one-to-one map from cluster values to label values: each pair lists
/// an original cluster value and its matched label value, `None` when the
/// cluster was matched against padding (more clusters than labels).
#[derive(Debug, Clone)]
pub struct AssignmentMapping {
    pub pairs: Vec<(usize, Option<usize>)>,
    pub matched_count: usize,
}

/// Solves the matching that maximizes agreement, as a min-cost assignment
/// on negated co-occurrence counts; rectangular tables are padded with
/// zero-benefit entries.
pub fn best_mapping(true_labels: &[usize], cluster_ids: &[usize]) -> Result<AssignmentMapping> {
    let table = ContingencyTable::from_pairs(cluster_ids, true_labels)?;
    let side = table.rows().max(table.cols());
    let mut cost = Matrix::zeros(side, side);
    for i in 0..table.rows() {
        for j in 0..table.cols() {
            cost.set(i, j, -(table.count(i, j) as f64));
        }
    }
    let (assignment, total) = hungarian(&cost)?;
    let matched_count = (-total).round() as usize;
    let pairs = (0..table.rows())
        .map(|i| {
            let j = assignment[i];
            let label = if j < table.cols() {
                Some(table.col_values()[j])
            } else {
                None
            };
            (table.row_values()[i], label)
        })
        .collect();
    Ok(AssignmentMapping {
        pairs,
        matched_count,
    })
}

/// Fraction of points whose label matches under the best one-to-one
/// cluster-to-label mapping.
pub fn clustering_accuracy(true_labels: &[usize], cluster_ids: &[usize]) -> Result<f64> {
    let mapping = best_mapping(true_labels, cluster_ids)?;
    Ok(mapping.matched_count as f64 / true_labels.len() as f64)
}

/// Mutual information normalized by the arithmetic mean of the two
/// entropies, natural logs. Two trivial single-cluster partitions count as
/// identical (1.0).
pub fn nmi(true_labels: &[usize], cluster_ids: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_pairs(true_labels, cluster_ids)?;
    let n = table.total() as f64;
    let h_rows = entropy(table.row_marginals(), n);
    let h_cols = entropy(table.col_marginals(), n);
    if h_rows == 0.0 && h_cols == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for i in 0..table.rows() {
        for j in 0..table.cols() {
            let nij = table.count(i, j) as f64;
            if nij > 0.0 {
                let ni = table.row_marginals()[i] as f64;
                let nj = table.col_marginals()[j] as f64;
                mi += (nij / n) * ((nij * n) / (ni * nj)).ln();
            }
        }
    }
    let value = mi / (0.5 * (h_rows + h_cols));
    Ok(value.clamp(0.0, 1.0))
}

fn entropy(marginals: &[usize], n: f64) -> f64 {
    marginals
        .iter()
        .filter(|&&m| m > 0)
        .map(|&m| {
            let p = m as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Train/validation loss ratio; small values mean the model fits training
/// data much better than held-out data.
pub fn generalizability(train_loss: f64, validation_loss: f64) -> Result<f64> {
    if !(validation_loss > 0.0) {
        return Err(Error::argument(format!(
            "validation loss must be positive, got {}",
            validation_loss
        )));
    }
    Ok(train_loss / validation_loss)
}
