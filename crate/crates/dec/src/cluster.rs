//! Joint embedding/centroid refinement: Student's-t soft assignments, the
//! sharpened self-training target distribution, the KL objective with its
//! analytic gradients, and the minibatch training loop with an
//! assignment-change stopping rule.

use serde::Serialize;

use crate::autoencoder::StackedAutoencoder;
use crate::error::{Error, Result};
use crate::kmeans::{self, KMeansConfig};
use crate::matrix::{squared_distance, Matrix};
use crate::metrics;
use crate::nn::{sgd_step, DenseLayer, LayerGrads, OptimizerState, SgdHyper};
use crate::rng::RngState;

pub const DEFAULT_ALPHA: f64 = 1.0;

/// Encoder stack plus cluster centroids living in its output space.
#[derive(Debug, Clone)]
pub struct DecModel {
    pub encoder: Vec<DenseLayer>,
    /// k x z_dim centroid coordinates.
    pub centroids: Matrix,
    /// Degrees of freedom of the kernel; 1 unless experimenting.
    pub alpha: f64,
}

impl DecModel {
    pub fn new(encoder: Vec<DenseLayer>, centroids: Matrix, alpha: f64) -> Result<Self> {
        if encoder.is_empty() {
            return Err(Error::argument("encoder needs at least one layer"));
        }
        let z_dim = encoder.last().unwrap().out_dim();
        if centroids.cols() != z_dim {
            return Err(Error::shape(format!(
                "centroids have {} columns, encoder emits {}",
                centroids.cols(),
                z_dim
            )));
        }
        if centroids.rows() == 0 {
            return Err(Error::argument("need at least one centroid"));
        }
        if !(alpha > 0.0) {
            return Err(Error::argument(format!("alpha must be positive, got {}", alpha)));
        }
        Ok(DecModel {
            encoder,
            centroids,
            alpha,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    /// Deterministic forward pass through the encoder stack.
    pub fn embed(&self, data: &Matrix) -> Result<Matrix> {
        let mut h = data.clone();
        for layer in &self.encoder {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Convenience: embed then soft-assign.
    pub fn soft_assign_data(&self, data: &Matrix) -> Result<SoftAssignment> {
        let z = self.embed(data)?;
        soft_assign(&z, &self.centroids, self.alpha)
    }
}

/// Row-stochastic n x k matrix of cluster membership probabilities.
#[derive(Debug, Clone)]
pub struct SoftAssignment {
    pub q: Matrix,
}

/// Sharpened target built from a soft assignment; constant during backprop.
#[derive(Debug, Clone)]
pub struct TargetDistribution {
    pub p: Matrix,
    /// Soft cluster frequencies f_j of the Q this was computed from.
    pub cluster_frequencies: Vec<f64>,
}

/// Kernel similarity q_ij = (1 + ||z_i - mu_j||^2 / alpha)^(-(alpha+1)/2),
/// normalized per row. Computed in log space with per-row max subtraction.
pub fn soft_assign(embeddings: &Matrix, centroids: &Matrix, alpha: f64) -> Result<SoftAssignment> {
    if embeddings.cols() != centroids.cols() {
        return Err(Error::shape(format!(
            "embeddings have {} columns, centroids {}",
            embeddings.cols(),
            centroids.cols()
        )));
    }
    if embeddings.rows() == 0 || centroids.rows() == 0 {
        return Err(Error::argument("need at least one point and one centroid"));
    }
    if !(alpha > 0.0) {
        return Err(Error::argument(format!("alpha must be positive, got {}", alpha)));
    }
    let n = embeddings.rows();
    let k = centroids.rows();
    let exponent = -(alpha + 1.0) / 2.0;
    let mut q = Matrix::zeros(n, k);
    for i in 0..n {
        let zi = embeddings.row(i);
        let row = q.row_mut(i);
        let mut max_log = f64::NEG_INFINITY;
        for j in 0..k {
            let d2 = squared_distance(zi, centroids.row(j));
            let log_kernel = exponent * (1.0 + d2 / alpha).ln();
            row[j] = log_kernel;
            if log_kernel > max_log {
                max_log = log_kernel;
            }
        }
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max_log).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    debug_assert!(q
        .row_iter()
        .all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    Ok(SoftAssignment { q })
}

/// p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j') with f_j = sum_i q_ij.
pub fn target_distribution(assignment: &SoftAssignment) -> Result<TargetDistribution> {
    let q = &assignment.q;
    let f = q.column_sums();
    if let Some(j) = f.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateCluster(format!(
            "cluster {} has zero soft frequency",
            j
        )));
    }
    let mut p = Matrix::zeros(q.rows(), q.cols());
    for i in 0..q.rows() {
        let qi = q.row(i);
        let pi = p.row_mut(i);
        let mut total = 0.0;
        for j in 0..qi.len() {
            pi[j] = qi[j] * qi[j] / f[j];
            total += pi[j];
        }
        for v in pi.iter_mut() {
            *v /= total;
        }
    }
    Ok(TargetDistribution {
        p,
        cluster_frequencies: f,
    })
}

/// KL divergence sum_i sum_j p_ij ln(p_ij / q_ij), summed over all points.
/// Zero-probability target entries contribute nothing; a zero q under
/// positive p yields +infinity rather than an error.
pub fn kl_loss(p: &Matrix, q: &Matrix) -> Result<f64> {
    if p.rows() != q.rows() || p.cols() != q.cols() {
        return Err(Error::shape(format!(
            "P is {}x{}, Q is {}x{}",
            p.rows(),
            p.cols(),
            q.rows(),
            q.cols()
        )));
    }
    let mut total = 0.0;
    for (&pv, &qv) in p.data().iter().zip(q.data()) {
        if pv > 0.0 {
            if qv <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += pv * (pv / qv).ln();
        }
    }
    Ok(total)
}

/// Shared kernel for both gradients. Each (i, j) pair contributes
/// coef * w_ij * (p_ij - q_ij) * (z_i - mu_j) positively to d/dz_i and
/// negatively to d/dmu_j, where w_ij = (1 + ||z_i - mu_j||^2/alpha)^(-1),
/// so the two gradient sums cancel by construction.
fn kl_grad_pair(
    z: &Matrix,
    centroids: &Matrix,
    p: &Matrix,
    q: &Matrix,
    alpha: f64,
) -> (Matrix, Matrix) {
    let n = z.rows();
    let k = centroids.rows();
    let dim = z.cols();
    debug_assert_eq!(centroids.cols(), dim);
    debug_assert_eq!(p.rows(), n);
    debug_assert_eq!(p.cols(), k);
    debug_assert_eq!(q.rows(), n);
    debug_assert_eq!(q.cols(), k);
    let coef = (alpha + 1.0) / alpha;
    let mut grad_z = Matrix::zeros(n, dim);
    let mut grad_mu = Matrix::zeros(k, dim);
    for i in 0..n {
        let zi = z.row(i);
        for j in 0..k {
            let mu = centroids.row(j);
            let d2 = squared_distance(zi, mu);
            let s = coef * (p.get(i, j) - q.get(i, j)) / (1.0 + d2 / alpha);
            let gz = grad_z.row_mut(i);
            for c in 0..dim {
                gz[c] += s * (zi[c] - mu[c]);
            }
            let gm = grad_mu.row_mut(j);
            for c in 0..dim {
                gm[c] -= s * (zi[c] - mu[c]);
            }
        }
    }
    (grad_z, grad_mu)
}

/// d(KL)/dz_i for one point, with the target row held constant:
/// ((alpha+1)/alpha) * sum_j (1 + d^2/alpha)^(-1) (p_ij - q_ij)(z_i - mu_j).
pub fn grad_embedding(
    z_i: &[f64],
    centroids: &Matrix,
    p_row: &[f64],
    q_row: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    if z_i.len() != centroids.cols() {
        return Err(Error::shape(format!(
            "point has {} dims, centroids {}",
            z_i.len(),
            centroids.cols()
        )));
    }
    if p_row.len() != centroids.rows() || q_row.len() != centroids.rows() {
        return Err(Error::shape(format!(
            "distribution rows have {}/{} entries, expected {}",
            p_row.len(),
            q_row.len(),
            centroids.rows()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::argument(format!("alpha must be positive, got {}", alpha)));
    }
    let z = Matrix::from_vec(1, z_i.len(), z_i.to_vec())?;
    let p = Matrix::from_vec(1, p_row.len(), p_row.to_vec())?;
    let q = Matrix::from_vec(1, q_row.len(), q_row.to_vec())?;
    let (gz, _) = kl_grad_pair(&z, centroids, &p, &q, alpha);
    Ok(gz.row(0).to_vec())
}

/// d(KL)/dmu_j for all centroids, target held constant:
/// -((alpha+1)/alpha) * sum_i (1 + d^2/alpha)^(-1) (p_ij - q_ij)(z_i - mu_j).
pub fn grad_centroids(
    embeddings: &Matrix,
    centroids: &Matrix,
    p: &Matrix,
    q: &Matrix,
    alpha: f64,
) -> Result<Matrix> {
    if embeddings.cols() != centroids.cols() {
        return Err(Error::shape(format!(
            "embeddings have {} columns, centroids {}",
            embeddings.cols(),
            centroids.cols()
        )));
    }
    let (n, k) = (embeddings.rows(), centroids.rows());
    if p.rows() != n || p.cols() != k || q.rows() != n || q.cols() != k {
        return Err(Error::shape(format!(
            "P is {}x{}, Q is {}x{}, expected {}x{}",
            p.rows(),
            p.cols(),
            q.rows(),
            q.cols(),
            n,
            k
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::argument(format!("alpha must be positive, got {}", alpha)));
    }
    let (_, gmu) = kl_grad_pair(embeddings, centroids, p, q, alpha);
    Ok(gmu)
}

/// Per-row argmax; ties go to the lowest cluster index.
pub fn hard_assign(assignment: &SoftAssignment) -> Vec<usize> {
    assignment
        .q
        .row_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_v = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Builds the initial model: the pretrained encoder plus centroids from
/// best-of-restarts k-means on the embedded dataset.
pub fn init_dec(
    sae: &StackedAutoencoder,
    data: &Matrix,
    k: usize,
    config: &KMeansConfig,
    rng: &RngState,
) -> Result<DecModel> {
    let z = sae.encode(data)?;
    let result = kmeans::kmeans(&z, k, config.restarts, config.max_iters, rng)?;
    DecModel::new(sae.encoder_layers().to_vec(), result.centroids, DEFAULT_ALPHA)
}

#[derive(Debug, Clone)]
pub struct DecTrainConfig {
    /// Constant learning rate; no schedule in this phase.
    pub learning_rate: f64,
    /// Plain SGD by default. Heavy momentum lets the encoder outrun the
    /// self-training targets and merge clusters (the degenerate optimum
    /// where every row of Q is identical), so enable with care.
    pub momentum: f64,
    pub batch_size: usize,
    /// Stop when fewer than this percentage of points change hard
    /// assignment between consecutive refreshes. Zero never stops early,
    /// giving a fixed budget of `max_epochs` refresh cycles.
    pub tol_percent: f64,
    /// Minibatch iterations between full-dataset target refreshes.
    /// `None` means one epoch: ceil(n / batch_size).
    pub target_refresh_interval: Option<usize>,
    /// Upper bound on refresh cycles if tolerance is never reached.
    pub max_epochs: usize,
    /// Update centroids only, leaving the encoder fixed.
    pub freeze_encoder: bool,
    pub seed: u64,
}

impl Default for DecTrainConfig {
    fn default() -> Self {
        DecTrainConfig {
            learning_rate: 0.01,
            momentum: 0.0,
            batch_size: 256,
            tol_percent: 0.1,
            target_refresh_interval: None,
            max_epochs: 100,
            freeze_encoder: false,
            seed: 0,
        }
    }
}

impl DecTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::argument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::argument("batch_size must be positive"));
        }
        if !(self.tol_percent >= 0.0) {
            return Err(Error::argument(format!(
                "tol_percent must be non-negative, got {}",
                self.tol_percent
            )));
        }
        if self.target_refresh_interval == Some(0) {
            return Err(Error::argument("target_refresh_interval must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::argument("max_epochs must be positive"));
        }
        Ok(())
    }
}

/// Ground-truth labels for snapshot metrics. Never touches the optimization:
/// training reads features only, the hook only feeds accuracy reporting.
#[derive(Debug, Clone, Copy)]
pub struct EvalHook<'a> {
    pub labels: &'a [usize],
}

/// One full-dataset refresh record; the training history is one of these
/// per refresh, starting with the pre-training state.
#[derive(Debug, Clone, Serialize)]
pub struct RefreshRecord {
    /// Minibatch iterations completed when this refresh ran.
    pub iteration: usize,
    /// Refresh index; 0 is the state before any update.
    pub epoch: usize,
    /// Full-dataset KL loss (summed over points) at this refresh.
    pub loss: f64,
    /// Same loss divided by n, comparable across dataset sizes.
    pub mean_loss: f64,
    /// Fraction of points whose hard assignment changed since the previous
    /// refresh; absent on the first record.
    pub changed_fraction: Option<f64>,
    /// Clustering accuracy against hook labels, when supplied.
    pub acc: Option<f64>,
    /// Clusters whose soft frequency collapsed and were re-seeded onto the
    /// farthest embedded point during this refresh.
    pub reseeded_clusters: Vec<usize>,
}

/// Full-dataset state recomputed at a refresh boundary.
struct RefreshState {
    p: TargetDistribution,
    hard: Vec<usize>,
    loss: f64,
    reseeded: Vec<usize>,
}

/// Soft frequencies below this fraction of the uniform share n/k mark a
/// cluster as dead.
const DEAD_CLUSTER_FRACTION: f64 = 1e-9;

fn refresh_state(model: &mut DecModel, data: &Matrix) -> Result<RefreshState> {
    let z = model.embed(data)?;
    if !z.is_finite() {
        return Err(Error::Numerical(
            "embeddings became non-finite during training".to_string(),
        ));
    }
    let mut reseeded = Vec::new();
    let mut q = soft_assign(&z, &model.centroids, model.alpha)?;
    // Dead clusters are revived rather than fatal: their centroid moves to
    // the embedded point farthest from its current centroid.
    let threshold = DEAD_CLUSTER_FRACTION * z.rows() as f64 / model.k() as f64;
    for _ in 0..model.k() {
        let f = q.q.column_sums();
        let dead: Vec<usize> = (0..model.k()).filter(|&j| f[j] < threshold).collect();
        if dead.is_empty() {
            break;
        }
        let hard = hard_assign(&q);
        let mut taken = vec![usize::MAX; dead.len()];
        for (slot, &j) in dead.iter().enumerate() {
            let mut far_i = 0;
            let mut far_d = -1.0;
            for i in 0..z.rows() {
                if taken[..slot].contains(&i) {
                    continue;
                }
                let d = squared_distance(z.row(i), model.centroids.row(hard[i]));
                if d > far_d {
                    far_d = d;
                    far_i = i;
                }
            }
            model.centroids.row_mut(j).copy_from_slice(z.row(far_i));
            taken[slot] = far_i;
            reseeded.push(j);
        }
        q = soft_assign(&z, &model.centroids, model.alpha)?;
    }
    let p = target_distribution(&q)?;
    let loss = kl_loss(&p.p, &q.q)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "KL loss became non-finite ({}) during training",
            loss
        )));
    }
    let hard = hard_assign(&q);
    Ok(RefreshState {
        hard,
        loss,
        p,
        reseeded,
    })
}

/// Joint refinement loop. Alternates full-dataset target refreshes with
/// minibatch SGD steps on the KL objective; targets stay fixed between
/// refreshes. Stops once the fraction of points changing hard assignment
/// between consecutive refreshes falls below `tol_percent`, or after
/// `max_epochs` refresh cycles. Returns one record per refresh.
pub fn train(
    model: &mut DecModel,
    data: &Matrix,
    config: &DecTrainConfig,
    rng: &mut RngState,
    eval: Option<EvalHook>,
) -> Result<Vec<RefreshRecord>> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(Error::argument("cannot train on an empty dataset"));
    }
    if data.cols() != model.input_dim() {
        return Err(Error::shape(format!(
            "data has {} columns, encoder expects {}",
            data.cols(),
            model.input_dim()
        )));
    }
    if let Some(hook) = &eval {
        if hook.labels.len() != data.rows() {
            return Err(Error::argument(format!(
                "eval hook has {} labels for {} points",
                hook.labels.len(),
                data.rows()
            )));
        }
    }
    let n = data.rows();
    let interval = config
        .target_refresh_interval
        .unwrap_or_else(|| n.div_ceil(config.batch_size))
        .max(1);
    let hyper = SgdHyper {
        learning_rate: config.learning_rate,
        momentum: config.momentum,
        weight_decay: 0.0,
    };
    let mut encoder_opt = OptimizerState::for_layers(&model.encoder, hyper);
    let mut centroid_velocity = Matrix::zeros(model.k(), model.embedding_dim());

    let snapshot_acc = |hard: &[usize]| -> Result<Option<f64>> {
        match &eval {
            Some(hook) => Ok(Some(metrics::clustering_accuracy(hook.labels, hard)?)),
            None => Ok(None),
        }
    };

    let mut state = refresh_state(model, data)?;
    let mut history = vec![RefreshRecord {
        iteration: 0,
        epoch: 0,
        loss: state.loss,
        mean_loss: state.loss / n as f64,
        changed_fraction: None,
        acc: snapshot_acc(&state.hard)?,
        reseeded_clusters: state.reseeded.clone(),
    }];

    for epoch in 1..=config.max_epochs {
        for _ in 0..interval {
            let idx: Vec<usize> = (0..config.batch_size).map(|_| rng.next_below(n)).collect();
            let batch = data.gather_rows(&idx);
            let p_batch = state.p.p.gather_rows(&idx);

            let mut activations = Vec::with_capacity(model.encoder.len() + 1);
            activations.push(batch);
            for layer in &model.encoder {
                let next = layer.forward(activations.last().unwrap())?;
                activations.push(next);
            }
            let z_batch = activations.last().unwrap();
            let q_batch = soft_assign(z_batch, &model.centroids, model.alpha)?;

            // Gradients of the KL objective restricted to the batch; the
            // learning rate absorbs the batch-size constant, as in plain
            // minibatch SGD.
            let (grad_z, grad_mu) =
                kl_grad_pair(z_batch, &model.centroids, &p_batch, &q_batch.q, model.alpha);

            sgd_step(
                model.centroids.data_mut(),
                grad_mu.data(),
                centroid_velocity.data_mut(),
                &hyper,
            )?;

            if !config.freeze_encoder {
                let mut grad = grad_z;
                let mut grads_rev: Vec<LayerGrads> = Vec::with_capacity(model.encoder.len());
                for (i, layer) in model.encoder.iter().enumerate().rev() {
                    let (grad_input, layer_grads) =
                        layer.backward_from_output(&activations[i], &activations[i + 1], &grad);
                    grads_rev.push(layer_grads);
                    grad = grad_input;
                }
                grads_rev.reverse();
                encoder_opt.step(&mut model.encoder, &grads_rev)?;
            }
        }

        let prev_hard = state.hard;
        state = refresh_state(model, data)?;
        let changed = state
            .hard
            .iter()
            .zip(&prev_hard)
            .filter(|(a, b)| a != b)
            .count() as f64
            / n as f64;
        history.push(RefreshRecord {
            iteration: epoch * interval,
            epoch,
            loss: state.loss,
            mean_loss: state.loss / n as f64,
            changed_fraction: Some(changed),
            acc: snapshot_acc(&state.hard)?,
            reseeded_clusters: state.reseeded.clone(),
        });
        if changed < config.tol_percent / 100.0 {
            break;
        }
    }
    Ok(history)
}
