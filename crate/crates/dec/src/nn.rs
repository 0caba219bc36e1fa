//! Dense-network substrate: layers, backprop, dropout, SGD with momentum.
//!
//! All operations are pure with respect to hidden state; stochastic ones take
//! an explicit [`RngState`].

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            // Subgradient at 0 is defined as 0, see `derivative_from_output`.
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output. Valid because both
    /// supported activations are monotone with `y > 0 <=> x > 0` for ReLU.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

/// Fully connected layer `y = activation(x W^T + b)`.
///
/// Weights are row-major with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

/// Parameter gradients of one layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Gaussian-initialized weights (zero mean, `init_std`), zero bias.
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        init_std: f64,
        rng: &mut RngState,
    ) -> Self {
        let mut weights = Matrix::zeros(out_dim, in_dim);
        for v in weights.data_mut() {
            *v = init_std * rng.next_normal();
        }
        DenseLayer {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape(format!(
                "bias length {} does not match weight rows {}",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Matrix, &mut Vec<f64>) {
        (&mut self.weights, &mut self.bias)
    }

    /// Row-wise forward pass: `activation(input W^T + b)`.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "layer expects {} input columns, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut out = input.matmul_transpose_b(&self.weights);
        out.add_row_vector(&self.bias);
        let act = self.activation;
        out.map_inplace(|x| act.apply(x));
        Ok(out)
    }

    /// Gradients of the forward map. Recomputes the forward pass internally;
    /// training loops that already hold the output should use
    /// [`DenseLayer::backward_from_output`].
    pub fn backward(&self, input: &Matrix, grad_output: &Matrix) -> Result<(Matrix, LayerGrads)> {
        let output = self.forward(input)?;
        if grad_output.rows() != output.rows() || grad_output.cols() != output.cols() {
            return Err(Error::shape(format!(
                "grad_output is {}x{}, expected {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                output.rows(),
                output.cols()
            )));
        }
        Ok(self.backward_from_output(input, &output, grad_output))
    }

    /// Backprop given the cached forward output.
    pub fn backward_from_output(
        &self,
        input: &Matrix,
        output: &Matrix,
        grad_output: &Matrix,
    ) -> (Matrix, LayerGrads) {
        debug_assert_eq!(input.cols(), self.in_dim());
        debug_assert_eq!(output.cols(), self.out_dim());
        // delta = grad_output ⊙ activation'(pre-activation)
        let mut delta = grad_output.clone();
        let act = self.activation;
        for i in 0..delta.rows() {
            let out_row = output.row(i);
            for (d, &y) in delta.row_mut(i).iter_mut().zip(out_row) {
                *d *= act.derivative_from_output(y);
            }
        }
        let grad_input = delta.matmul(&self.weights);
        let grad_weights = delta.matmul_transpose_a(input);
        let grad_bias = delta.column_sums();
        (
            grad_input,
            LayerGrads {
                weights: grad_weights,
                bias: grad_bias,
            },
        )
    }
}

/// Inverted dropout: zero each entry with probability `rate`, scale survivors
/// by `1/(1-rate)` so the expectation is unchanged and inference needs no
/// rescaling. `rate == 0` returns the input bit-for-bit.
pub fn dropout(input: &Matrix, rate: f64, rng: &mut RngState) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::argument(format!(
            "dropout rate must be in [0, 1), got {}",
            rate
        )));
    }
    if rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.rows(), input.cols(), rate, rng);
    let mut out = input.clone();
    out.mul_elementwise_inplace(&mask);
    Ok(out)
}

/// Mask of `0` / `1/(1-rate)` entries; training keeps it to backpropagate
/// through the same corruption.
pub(crate) fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut RngState) -> Matrix {
    let scale = 1.0 / (1.0 - rate);
    let mut mask = Matrix::zeros(rows, cols);
    for v in mask.data_mut() {
        *v = if rng.next_f64() < rate { 0.0 } else { scale };
    }
    mask
}

#[derive(Debug, Clone, Copy)]
pub struct SgdHyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One momentum-SGD update on a flat parameter slice:
/// `v <- momentum*v - lr*(grad + weight_decay*param); param <- param + v`.
pub fn sgd_step(param: &mut [f64], grad: &[f64], velocity: &mut [f64], hyper: &SgdHyper) -> Result<()> {
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(Error::shape(format!(
            "sgd_step: param {}, grad {}, velocity {}",
            param.len(),
            grad.len(),
            velocity.len()
        )));
    }
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = hyper.momentum * *v - hyper.learning_rate * (g + hyper.weight_decay * *p);
        *p += *v;
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct LayerVelocity {
    weights: Matrix,
    bias: Vec<f64>,
}

/// Momentum buffers for a stack of layers, mirroring parameter shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    hyper: SgdHyper,
    velocities: Vec<LayerVelocity>,
}

impl OptimizerState {
    pub fn for_layers(layers: &[DenseLayer], hyper: SgdHyper) -> Self {
        let velocities = layers
            .iter()
            .map(|l| LayerVelocity {
                weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                bias: vec![0.0; l.out_dim()],
            })
            .collect();
        OptimizerState { hyper, velocities }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.hyper.learning_rate = lr;
    }

    pub fn learning_rate(&self) -> f64 {
        self.hyper.learning_rate
    }

    /// Applies one update to every layer from its gradient.
    pub fn step(&mut self, layers: &mut [DenseLayer], grads: &[LayerGrads]) -> Result<()> {
        if layers.len() != self.velocities.len() || grads.len() != layers.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} layers, got {} layers / {} grads",
                self.velocities.len(),
                layers.len(),
                grads.len()
            )));
        }
        for ((layer, grad), vel) in layers.iter_mut().zip(grads).zip(&mut self.velocities) {
            let (w, b) = layer.params_mut();
            sgd_step(w.data_mut(), grad.weights.data(), vel.weights.data_mut(), &self.hyper)?;
            sgd_step(b, &grad.bias, &mut vel.bias, &self.hyper)?;
        }
        Ok(())
    }
}
