//! Versioned binary checkpoints for trained models. Parameters are stored
//! as little-endian 64-bit floats, so save/load round-trips are lossless
//! and byte-deterministic.

use std::path::Path;

use crate::autoencoder::StackedAutoencoder;
use crate::cluster::DecModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Activation, DenseLayer};

const MAGIC: &[u8; 4] = b"DECK";
const VERSION: u32 = 1;
const KIND_SAE: u8 = 1;
const KIND_DEC: u8 = 2;

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

fn write_layer(out: &mut Vec<u8>, layer: &DenseLayer) {
    out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
    out.push(activation_code(layer.activation()));
    for &v in layer.weights().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in layer.bias() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Sequential reader with positioned format errors.
struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &Path) -> Self {
        Reader {
            bytes,
            offset: 0,
            path: path.display().to_string(),
        }
    }

    fn fail(&self, detail: impl Into<String>) -> Error {
        Error::format(&self.path, format!("byte {}", self.offset), detail)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.offset + n {
            return Err(self.fail(format!(
                "truncated: need {} bytes, {} remain",
                n,
                self.bytes.len() - self.offset
            )));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn layer(&mut self) -> Result<DenseLayer> {
        let in_dim = self.u32()? as usize;
        let out_dim = self.u32()? as usize;
        let activation = match self.u8()? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            code => return Err(self.fail(format!("unknown activation code {}", code))),
        };
        let mut weights = Matrix::zeros(out_dim, in_dim);
        for v in weights.data_mut() {
            *v = self.f64()?;
        }
        let mut bias = vec![0.0; out_dim];
        for v in bias.iter_mut() {
            *v = self.f64()?;
        }
        DenseLayer::from_parts(weights, bias, activation)
    }

    fn header(&mut self, expected_kind: u8, kind_name: &str) -> Result<()> {
        let magic = self.take(4)?;
        if magic != MAGIC {
            return Err(Error::format(
                &self.path,
                "byte 0",
                format!("bad magic {:?}, expected {:?}", magic, MAGIC),
            ));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(self.fail(format!(
                "unsupported version {}, expected {}",
                version, VERSION
            )));
        }
        let kind = self.u8()?;
        if kind != expected_kind {
            return Err(self.fail(format!(
                "checkpoint holds kind {} but a {} checkpoint was requested",
                kind, kind_name
            )));
        }
        Ok(())
    }

    fn done(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(self.fail(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.offset
            )));
        }
        Ok(())
    }
}

pub fn save_sae(path: &Path, sae: &StackedAutoencoder) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(KIND_SAE);
    out.extend_from_slice(&(sae.encoder_layers().len() as u32).to_le_bytes());
    for layer in sae.encoder_layers().iter().chain(sae.decoder_layers()) {
        write_layer(&mut out, layer);
    }
    crate::data::write_atomic(path, &out)
}

pub fn load_sae(path: &Path) -> Result<StackedAutoencoder> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes, path);
    r.header(KIND_SAE, "autoencoder")?;
    let n_encoder = r.u32()? as usize;
    if n_encoder == 0 {
        return Err(r.fail("zero encoder layers"));
    }
    let mut encoder = Vec::with_capacity(n_encoder);
    for _ in 0..n_encoder {
        encoder.push(r.layer()?);
    }
    let mut decoder = Vec::with_capacity(n_encoder);
    for _ in 0..n_encoder {
        decoder.push(r.layer()?);
    }
    r.done()?;
    StackedAutoencoder::from_layers(encoder, decoder)
}

pub fn save_dec(path: &Path, model: &DecModel) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(KIND_DEC);
    out.extend_from_slice(&(model.encoder.len() as u32).to_le_bytes());
    for layer in &model.encoder {
        write_layer(&mut out, layer);
    }
    out.extend_from_slice(&(model.k() as u32).to_le_bytes());
    out.extend_from_slice(&(model.embedding_dim() as u32).to_le_bytes());
    for &v in model.centroids.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.alpha.to_le_bytes());
    crate::data::write_atomic(path, &out)
}

pub fn load_dec(path: &Path) -> Result<DecModel> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes, path);
    r.header(KIND_DEC, "cluster-model")?;
    let n_layers = r.u32()? as usize;
    if n_layers == 0 {
        return Err(r.fail("zero encoder layers"));
    }
    let mut encoder = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        encoder.push(r.layer()?);
    }
    let k = r.u32()? as usize;
    let z_dim = r.u32()? as usize;
    let mut centroids = Matrix::zeros(k, z_dim);
    for v in centroids.data_mut() {
        *v = r.f64()?;
    }
    let alpha = r.f64()?;
    r.done()?;
    DecModel::new(encoder, centroids, alpha)
}
