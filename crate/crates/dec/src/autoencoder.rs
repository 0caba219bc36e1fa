//! Stacked denoising autoencoder: greedy layer-wise pretraining of
//! two-layer denoising pairs, assembly into a deep autoencoder, and
//! end-to-end finetuning without corruption.
//!
//! The encoder half is the initial nonlinear mapping handed to the
//! clustering phase.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{dropout_mask, Activation, DenseLayer, LayerGrads, OptimizerState, SgdHyper};
use crate::rng::RngState;

/// Two-layer denoising autoencoder trained to reconstruct its clean input
/// from a stochastically corrupted copy.
#[derive(Debug, Clone)]
pub struct DenoisingAEPair {
    pub encode_layer: DenseLayer,
    pub decode_layer: DenseLayer,
    pub input_dropout_rate: f64,
    pub hidden_dropout_rate: f64,
}

impl DenoisingAEPair {
    pub fn new(
        in_dim: usize,
        hidden_dim: usize,
        encode_activation: Activation,
        decode_activation: Activation,
        dropout_rate: f64,
        init_std: f64,
        rng: &mut RngState,
    ) -> Self {
        DenoisingAEPair {
            encode_layer: DenseLayer::new(in_dim, hidden_dim, encode_activation, init_std, rng),
            decode_layer: DenseLayer::new(hidden_dim, in_dim, decode_activation, init_std, rng),
            input_dropout_rate: dropout_rate,
            hidden_dropout_rate: dropout_rate,
        }
    }
}

/// Deep autoencoder: encoder layers followed by decoder layers that mirror
/// the encoder dims in reverse.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedAutoencoder {
    layers: Vec<DenseLayer>,
    n_encoder: usize,
}

impl StackedAutoencoder {
    pub fn from_layers(encoder: Vec<DenseLayer>, decoder: Vec<DenseLayer>) -> Result<Self> {
        if encoder.is_empty() || encoder.len() != decoder.len() {
            return Err(Error::shape(format!(
                "need equal nonzero encoder/decoder layer counts, got {}/{}",
                encoder.len(),
                decoder.len()
            )));
        }
        for (i, d) in decoder.iter().enumerate() {
            // Mirror rule: decoder layer i inverts encoder layer (last - i).
            let e = &encoder[encoder.len() - 1 - i];
            if d.in_dim() != e.out_dim() || d.out_dim() != e.in_dim() {
                return Err(Error::shape(format!(
                    "decoder layer {} is {}->{}, expected {}->{}",
                    i,
                    d.in_dim(),
                    d.out_dim(),
                    e.out_dim(),
                    e.in_dim()
                )));
            }
        }
        let n_encoder = encoder.len();
        let mut layers = encoder;
        layers.extend(decoder);
        Ok(StackedAutoencoder { layers, n_encoder })
    }

    pub fn encoder_layers(&self) -> &[DenseLayer] {
        &self.layers[..self.n_encoder]
    }

    pub fn decoder_layers(&self) -> &[DenseLayer] {
        &self.layers[self.n_encoder..]
    }

    /// Dims along the encoder: input, hidden sizes, embedding.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim()];
        dims.extend(self.encoder_layers().iter().map(|l| l.out_dim()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers[self.n_encoder - 1].out_dim()
    }

    /// Clean deterministic forward pass through the encoder half.
    pub fn encode(&self, data: &Matrix) -> Result<Matrix> {
        let mut h = data.clone();
        for layer in self.encoder_layers() {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Full encode-then-decode pass, no corruption.
    pub fn reconstruct(&self, data: &Matrix) -> Result<Matrix> {
        let mut h = data.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Mean per-sample squared reconstruction error over the whole matrix.
    pub fn reconstruction_loss(&self, data: &Matrix) -> Result<f64> {
        let y = self.reconstruct(data)?;
        Ok(mean_squared_loss(data, &y))
    }
}

/// Per-sample squared error `mean_i ||x_i - y_i||^2` (sum over dims, mean
/// over rows).
pub fn mean_squared_loss(x: &Matrix, y: &Matrix) -> f64 {
    debug_assert_eq!(x.rows(), y.rows());
    debug_assert_eq!(x.cols(), y.cols());
    let mut total = 0.0;
    for (a, b) in x.data().iter().zip(y.data()) {
        let d = a - b;
        total += d * d;
    }
    total / x.rows() as f64
}

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    /// Input dim first, embedding dim last.
    pub layer_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub iters_per_layer: usize,
    pub finetune_iters: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_drop_every: usize,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl PretrainConfig {
    /// Full-scale defaults: d-500-500-2000-10 dims, 20% dropout, 50000
    /// iterations per layer and 100000 finetune iterations at batch 256,
    /// learning rate 0.1 divided by 10 every 20000 iterations, no weight
    /// decay, weights drawn from N(0, 0.01^2).
    pub fn paper(input_dim: usize) -> Self {
        PretrainConfig {
            layer_dims: vec![input_dim, 500, 500, 2000, 10],
            dropout_rate: 0.2,
            iters_per_layer: 50_000,
            finetune_iters: 100_000,
            batch_size: 256,
            lr_initial: 0.1,
            lr_drop_every: 20_000,
            lr_drop_factor: 10.0,
            momentum: 0.9,
            weight_decay: 0.0,
            init_std: 0.01,
            seed: 0,
        }
    }

    /// Scaled-down preset for seconds-scale runs on small synthetic data.
    /// Same schedule shape as `paper`, smaller network, fewer iterations,
    /// and a gentler learning rate: the small stacks here sit outside the
    /// stable region of the full-scale 0.1 step with momentum 0.9.
    pub fn desk(input_dim: usize) -> Self {
        PretrainConfig {
            layer_dims: vec![input_dim, 64, 32, 10],
            dropout_rate: 0.2,
            iters_per_layer: 1_500,
            finetune_iters: 3_000,
            batch_size: 256,
            lr_initial: 0.01,
            lr_drop_every: 1_200,
            lr_drop_factor: 10.0,
            momentum: 0.9,
            weight_decay: 0.0,
            init_std: 0.05,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::argument(
                "layer_dims needs at least input and embedding dims",
            ));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::argument("layer dims must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::argument(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::argument("batch_size must be positive"));
        }
        if self.lr_initial <= 0.0 || !self.lr_initial.is_finite() {
            return Err(Error::argument(format!(
                "lr_initial must be positive, got {}",
                self.lr_initial
            )));
        }
        if self.lr_drop_every == 0 {
            return Err(Error::argument("lr_drop_every must be positive"));
        }
        if self.lr_drop_factor < 1.0 {
            return Err(Error::argument(format!(
                "lr_drop_factor must be >= 1, got {}",
                self.lr_drop_factor
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::argument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::argument("weight_decay must be non-negative"));
        }
        if self.init_std <= 0.0 {
            return Err(Error::argument("init_std must be positive"));
        }
        Ok(())
    }

    /// Step-decayed learning rate at a 0-based iteration within one phase.
    /// The schedule restarts for each layer pair and again for finetuning.
    fn lr_at(&self, iter: usize) -> f64 {
        self.lr_initial / self.lr_drop_factor.powi((iter / self.lr_drop_every) as i32)
    }

    fn hyper_at(&self, iter: usize) -> SgdHyper {
        SgdHyper {
            learning_rate: self.lr_at(iter),
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

fn sample_batch(data: &Matrix, batch_size: usize, rng: &mut RngState) -> Matrix {
    let n = data.rows();
    let idx: Vec<usize> = (0..batch_size).map(|_| rng.next_below(n)).collect();
    data.gather_rows(&idx)
}

/// Trains one denoising pair by minibatch SGD on the squared reconstruction
/// error of the clean batch. Returns the per-iteration batch loss trace.
pub fn pretrain_layer(
    pair: &mut DenoisingAEPair,
    inputs: &Matrix,
    config: &PretrainConfig,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    config.validate()?;
    if inputs.rows() == 0 {
        return Err(Error::argument("cannot pretrain on an empty dataset"));
    }
    if inputs.cols() != pair.encode_layer.in_dim() {
        return Err(Error::shape(format!(
            "pair expects {} input columns, got {}",
            pair.encode_layer.in_dim(),
            inputs.cols()
        )));
    }
    let mut optimizer = OptimizerState::for_layers(
        std::slice::from_ref(&pair.encode_layer),
        config.hyper_at(0),
    );
    // Separate buffers per layer; parameters update together each step.
    let mut dec_optimizer = OptimizerState::for_layers(
        std::slice::from_ref(&pair.decode_layer),
        config.hyper_at(0),
    );
    let mut trace = Vec::with_capacity(config.iters_per_layer);
    for iter in 0..config.iters_per_layer {
        let lr = config.lr_at(iter);
        optimizer.set_learning_rate(lr);
        dec_optimizer.set_learning_rate(lr);

        let x = sample_batch(inputs, config.batch_size, rng);
        let b = x.rows() as f64;

        let x_tilde = if pair.input_dropout_rate > 0.0 {
            let mask = dropout_mask(x.rows(), x.cols(), pair.input_dropout_rate, rng);
            let mut c = x.clone();
            c.mul_elementwise_inplace(&mask);
            c
        } else {
            x.clone()
        };
        let h = pair.encode_layer.forward(&x_tilde)?;
        let (h_tilde, hidden_mask) = if pair.hidden_dropout_rate > 0.0 {
            let mask = dropout_mask(h.rows(), h.cols(), pair.hidden_dropout_rate, rng);
            let mut c = h.clone();
            c.mul_elementwise_inplace(&mask);
            (c, Some(mask))
        } else {
            (h.clone(), None)
        };
        let y = pair.decode_layer.forward(&h_tilde)?;

        trace.push(mean_squared_loss(&x, &y));

        // d/dy of mean_i ||x_i - y_i||^2.
        let mut grad_y = y.sub(&x);
        grad_y.scale_inplace(2.0 / b);

        let (mut grad_h, dec_grads) =
            pair.decode_layer.backward_from_output(&h_tilde, &y, &grad_y);
        if let Some(mask) = &hidden_mask {
            grad_h.mul_elementwise_inplace(mask);
        }
        let (_, enc_grads) = pair.encode_layer.backward_from_output(&x_tilde, &h, &grad_h);

        optimizer.step(std::slice::from_mut(&mut pair.encode_layer), &[enc_grads])?;
        dec_optimizer.step(std::slice::from_mut(&mut pair.decode_layer), &[dec_grads])?;
    }
    Ok(trace)
}

/// Trains pairs in sequence, each on the previous encoder's clean output,
/// then assembles encoders followed by decoders in reverse training order.
///
/// Activation rule: every layer is ReLU except the first pair's decoder
/// (which writes input-space values) and the last pair's encoder (the
/// embedding layer), which are Identity.
pub fn greedy_pretrain(
    data: &Matrix,
    config: &PretrainConfig,
    rng: &mut RngState,
) -> Result<(StackedAutoencoder, Vec<Vec<f64>>)> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(Error::argument("cannot pretrain on an empty dataset"));
    }
    if data.cols() != config.layer_dims[0] {
        return Err(Error::shape(format!(
            "data has {} columns, layer_dims starts at {}",
            data.cols(),
            config.layer_dims[0]
        )));
    }
    let n_pairs = config.layer_dims.len() - 1;
    let mut encoders = Vec::with_capacity(n_pairs);
    let mut decoders = Vec::with_capacity(n_pairs);
    let mut traces = Vec::with_capacity(n_pairs);
    let mut current = data.clone();
    for t in 0..n_pairs {
        let enc_act = if t == n_pairs - 1 { Activation::Identity } else { Activation::Relu };
        let dec_act = if t == 0 { Activation::Identity } else { Activation::Relu };
        let mut pair = DenoisingAEPair::new(
            config.layer_dims[t],
            config.layer_dims[t + 1],
            enc_act,
            dec_act,
            config.dropout_rate,
            config.init_std,
            rng,
        );
        traces.push(pretrain_layer(&mut pair, &current, config, rng)?);
        // The next stage trains on uncorrupted codes.
        current = pair.encode_layer.forward(&current)?;
        encoders.push(pair.encode_layer);
        decoders.push(pair.decode_layer);
    }
    decoders.reverse();
    let sae = StackedAutoencoder::from_layers(encoders, decoders)?;
    Ok((sae, traces))
}

/// End-to-end reconstruction training of the assembled deep autoencoder.
/// No dropout is applied in this phase regardless of `config.dropout_rate`.
/// Returns the per-iteration batch loss trace.
pub fn finetune(
    sae: &mut StackedAutoencoder,
    data: &Matrix,
    config: &PretrainConfig,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(Error::argument("cannot finetune on an empty dataset"));
    }
    if data.cols() != sae.input_dim() {
        return Err(Error::shape(format!(
            "data has {} columns, autoencoder expects {}",
            data.cols(),
            sae.input_dim()
        )));
    }
    let mut optimizer = OptimizerState::for_layers(&sae.layers, config.hyper_at(0));
    let mut trace = Vec::with_capacity(config.finetune_iters);
    for iter in 0..config.finetune_iters {
        optimizer.set_learning_rate(config.lr_at(iter));
        let x = sample_batch(data, config.batch_size, rng);
        let b = x.rows() as f64;

        // Forward with cached per-layer outputs; activations[i] is the input
        // of layer i, activations[last] the reconstruction.
        let mut activations = Vec::with_capacity(sae.layers.len() + 1);
        activations.push(x.clone());
        for layer in &sae.layers {
            let next = layer.forward(activations.last().unwrap())?;
            activations.push(next);
        }
        let y = activations.last().unwrap();
        trace.push(mean_squared_loss(&x, y));

        let mut grad = y.sub(&x);
        grad.scale_inplace(2.0 / b);

        let mut grads_rev: Vec<LayerGrads> = Vec::with_capacity(sae.layers.len());
        for (i, layer) in sae.layers.iter().enumerate().rev() {
            let (grad_input, layer_grads) =
                layer.backward_from_output(&activations[i], &activations[i + 1], &grad);
            grads_rev.push(layer_grads);
            grad = grad_input;
        }
        grads_rev.reverse();
        optimizer.step(&mut sae.layers, &grads_rev)?;
    }
    Ok(trace)
}
