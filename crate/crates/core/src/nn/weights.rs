//! Binary weight file (`OODW`, version 1) and its textual sidecar manifest.
//!
//! All integers and floats are little-endian. After the magic, version and
//! layer count, each layer is a type tag followed by its scalar
//! hyper-parameters and then its parameter arrays. Every array is stored as
//! `u32 rank`, `u32 dims[rank]`, `u32 element_count`, then `element_count`
//! IEEE-754 `f32` values.
//!
//! | tag | layer     | scalars                     | arrays                          |
//! |-----|-----------|-----------------------------|---------------------------------|
//! | 0   | Conv2D    | `u32 stride`, `u32 padding` | weight `[o,i,kh,kw]`, bias `[o]` |
//! | 1   | BatchNorm | `f32 eps`                   | gamma, beta, mean, var `[c]`     |
//! | 2   | ELU       | `f32 alpha`                 |                                 |
//! | 3   | MaxPool2x2|                             |                                 |
//! | 4   | Flatten   |                             |                                 |
//! | 5   | Dense     |                             | weight `[o,i]`, bias `[o]`       |
//!
//! The manifest sits next to the weight file (`<file>.manifest`) and holds
//! `key=value` lines; `input_shape` and `latent_dim` are required.

use std::fs;
use std::path::{Path, PathBuf};

use super::layers::{BatchNorm, Conv2d, Dense, Layer};
use super::{Model, NnError, Tensor};

pub const MAGIC: &[u8; 4] = b"OODW";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_BN: u8 = 1;
const TAG_ELU: u8 = 2;
const TAG_POOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DENSE: u8 = 5;

/// Path of the sidecar manifest for a weight file.
pub fn manifest_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Loads a model from a weight file and its sidecar manifest.
pub fn load_weights(path: &Path) -> Result<Model, NnError> {
    let bytes = fs::read(path)?;
    let manifest = fs::read_to_string(manifest_path(path))?;
    let (input_shape, latent_dim) = parse_manifest(&manifest)?;
    let layers = decode_layers(&bytes)?;
    Model::new(layers, input_shape, latent_dim)
}

/// Writes the weight file and its manifest.
pub fn save_weights(model: &Model, path: &Path) -> Result<(), NnError> {
    fs::write(path, encode_layers(model.layers()))?;
    fs::write(manifest_path(path), render_manifest(model))?;
    Ok(())
}

pub fn render_manifest(model: &Model) -> String {
    let shape: Vec<String> = model.input_shape().iter().map(|d| d.to_string()).collect();
    format!(
        "format=OODW\nversion={VERSION}\ninput_shape={}\nlatent_dim={}\nlayers={}\n",
        shape.join(","),
        model.latent_dim(),
        model.layers().len()
    )
}

pub fn parse_manifest(text: &str) -> Result<(Vec<usize>, usize), NnError> {
    let mut shape = None;
    let mut latent = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| NnError::Manifest(format!("malformed line `{line}`")))?;
        match k.trim() {
            "input_shape" => {
                let dims = v
                    .split(',')
                    .map(|d| d.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| NnError::Manifest(format!("input_shape: {e}")))?;
                shape = Some(dims);
            }
            "latent_dim" => {
                latent = Some(
                    v.trim()
                        .parse::<usize>()
                        .map_err(|e| NnError::Manifest(format!("latent_dim: {e}")))?,
                );
            }
            _ => {}
        }
    }
    match (shape, latent) {
        (Some(s), Some(d)) => Ok((s, d)),
        _ => Err(NnError::Manifest(
            "manifest must define input_shape and latent_dim".into(),
        )),
    }
}

pub fn encode_layers(layers: &[Layer]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        match layer {
            Layer::Conv2d(c) => {
                out.push(TAG_CONV);
                put_u32(&mut out, c.stride as u32);
                put_u32(&mut out, c.padding as u32);
                put_array(&mut out, c.weight.shape(), c.weight.data());
                put_array(&mut out, c.bias.shape(), c.bias.data());
            }
            Layer::BatchNorm(b) => {
                out.push(TAG_BN);
                out.extend_from_slice(&b.eps.to_le_bytes());
                for v in [&b.gamma, &b.beta, &b.running_mean, &b.running_var] {
                    put_array(&mut out, &[v.len()], v);
                }
            }
            Layer::Elu { alpha } => {
                out.push(TAG_ELU);
                out.extend_from_slice(&alpha.to_le_bytes());
            }
            Layer::MaxPool2x2 => out.push(TAG_POOL),
            Layer::Flatten => out.push(TAG_FLATTEN),
            Layer::Dense(d) => {
                out.push(TAG_DENSE);
                put_array(&mut out, d.weight.shape(), d.weight.data());
                put_array(&mut out, d.bias.shape(), d.bias.data());
            }
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_array(out: &mut Vec<u8>, dims: &[usize], data: &[f32]) {
    put_u32(out, dims.len() as u32);
    for &d in dims {
        put_u32(out, d as u32);
    }
    put_u32(out, data.len() as u32);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).ok_or(NnError::Truncated)?;
        if end > self.buf.len() {
            return Err(NnError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, NnError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn array(&mut self, context: &str) -> Result<Tensor, NnError> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(NnError::Format(format!(
                "{context}: implausible rank {rank}"
            )));
        }
        let dims = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count = self.u32()? as usize;
        let expected: usize = dims.iter().product();
        if count != expected {
            return Err(NnError::ShapeMismatch {
                context: context.to_string(),
                expected: dims,
                actual_len: count,
            });
        }
        let raw = self.take(count.checked_mul(4).ok_or(NnError::Truncated)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(dims, data)
    }

    fn vector(&mut self, context: &str) -> Result<Vec<f32>, NnError> {
        let t = self.array(context)?;
        if t.shape().len() != 1 {
            return Err(NnError::Rank {
                expected: 1,
                actual: t.shape().len(),
            });
        }
        Ok(t.into_data())
    }
}

pub fn decode_layers(bytes: &[u8]) -> Result<Vec<Layer>, NnError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| NnError::BadMagic)? != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let tag = r.u8()?;
        let layer = match tag {
            TAG_CONV => {
                let stride = r.u32()? as usize;
                let padding = r.u32()? as usize;
                let weight = r.array(&format!("layer {i} conv weight"))?;
                let bias = r.array(&format!("layer {i} conv bias"))?;
                Layer::Conv2d(Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                })
            }
            TAG_BN => {
                let eps = r.f32()?;
                Layer::BatchNorm(BatchNorm {
                    eps,
                    gamma: r.vector(&format!("layer {i} bn gamma"))?,
                    beta: r.vector(&format!("layer {i} bn beta"))?,
                    running_mean: r.vector(&format!("layer {i} bn mean"))?,
                    running_var: r.vector(&format!("layer {i} bn var"))?,
                })
            }
            TAG_ELU => Layer::Elu { alpha: r.f32()? },
            TAG_POOL => Layer::MaxPool2x2,
            TAG_FLATTEN => Layer::Flatten,
            TAG_DENSE => Layer::Dense(Dense {
                weight: r.array(&format!("layer {i} dense weight"))?,
                bias: r.array(&format!("layer {i} dense bias"))?,
            }),
            other => return Err(NnError::Format(format!("layer {i}: unknown tag {other}"))),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format(format!(
            "{} trailing bytes after last layer",
            bytes.len() - r.pos
        )));
    }
    Ok(layers)
}
