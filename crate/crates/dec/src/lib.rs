//! Deep embedded clustering. The pipeline learns a feature mapping and
//! cluster centroids jointly: a stacked denoising autoencoder is pretrained
//! layer by layer and finetuned, k-means initializes centroids in the
//! learned embedding space, and a KL self-training loop then refines both
//! the encoder and the centroids by pushing each point's soft assignment
//! toward a sharpened, frequency-normalized target distribution.
//!
//! Modules are layered bottom-up: `matrix` and `rng` hold the numerical
//! kernels, `nn` the dense layers and SGD, `autoencoder` the pretraining
//! phases, `kmeans` the centroid initializer, `cluster` the refinement
//! loop, `metrics` the label-based scores, `data` dataset I/O and synthetic
//! generators, `pca` the 2-D projection, `checkpoint` model persistence,
//! and `cli` the command layer.

pub mod autoencoder;
pub mod checkpoint;
pub mod cli;
pub mod cluster;
pub mod data;
pub mod error;
pub mod kmeans;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod pca;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
