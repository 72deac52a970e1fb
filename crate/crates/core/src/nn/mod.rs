//! Minimal CNN encoder inference: tensors, layers and the `OODW` weight format.

mod layers;
mod tensor;
pub mod weights;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use layers::{batchnorm, conv2d, dense, elu, maxpool2x2, BatchNorm, Conv2d, Dense, Layer};
pub use tensor::Tensor;
pub use weights::{load_weights, save_weights};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual_len} values")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual_len: usize,
    },
    #[error("expected rank {expected}, got rank {actual}")]
    Rank { expected: usize, actual: usize },
    #[error("channel mismatch: layer expects {expected}, input has {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("layer produces a non-positive output dimension")]
    NonPositiveOutput,
    #[error("max-pool needs even spatial dims, got {height}x{width}")]
    OddPoolInput { height: usize, width: usize },
    #[error("negative running variance in channel {channel}")]
    NegativeVariance { channel: usize },
    #[error("non-finite activation after layer {layer} ({name}) at element {index}")]
    NonFinite {
        layer: usize,
        name: &'static str,
        index: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bad magic, not an OODW weight file")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated")]
    Truncated,
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("model must emit {expected} values (2 x latent dim), emits {actual}")]
    LatentWidth { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-dimension posterior parameters emitted by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStats {
    pub mu: Vec<f32>,
    pub logvar: Vec<f32>,
}

impl LatentStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// An immutable encoder whose layer shapes were validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    latent_dim: usize,
}

impl Model {
    pub fn new(
        layers: Vec<Layer>,
        input_shape: Vec<usize>,
        latent_dim: usize,
    ) -> Result<Self, NnError> {
        if latent_dim == 0 {
            return Err(NnError::InvalidParameter("latent dim must be >= 1".into()));
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            if let Layer::Elu { alpha } = layer {
                if !(*alpha > 0.0) {
                    return Err(NnError::InvalidParameter("ELU alpha must be > 0".into()));
                }
            }
            if let Layer::BatchNorm(b) = layer {
                if !(b.eps >= 0.0) {
                    return Err(NnError::InvalidParameter(
                        "batchnorm eps must be >= 0".into(),
                    ));
                }
            }
            shape = layer.output_shape(&shape)?;
        }
        let width: usize = shape.iter().product();
        if shape.len() != 1 || width != 2 * latent_dim {
            return Err(NnError::LatentWidth {
                expected: 2 * latent_dim,
                actual: width,
            });
        }
        Ok(Self {
            layers,
            input_shape,
            latent_dim,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        weights::encode_layers(&self.layers)
    }

    /// Runs every layer in order and splits the output into `(mu, logvar)`.
    pub fn encode(&self, image: &Tensor) -> Result<LatentStats, NnError> {
        if image.shape() != self.input_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                context: "encoder input".into(),
                expected: self.input_shape.clone(),
                actual_len: image.len(),
            });
        }
        let mut x = image.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x)?;
            if let Some(index) = x.first_non_finite() {
                return Err(NnError::NonFinite {
                    layer: i,
                    name: layer.name(),
                    index,
                });
            }
        }
        let mut out = x.into_data();
        let logvar = out.split_off(self.latent_dim);
        Ok(LatentStats { mu: out, logvar })
    }
}

/// Encoder topology: repeated `conv(5x5) -> batchnorm -> ELU` blocks, optional
/// 2x2 max-pools after chosen blocks, then `flatten -> dense(hidden) -> ELU ->
/// dense(2 * latent)`.
#[derive(Debug, Clone)]
pub struct EncoderSpec {
    pub input_shape: [usize; 3],
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub padding: usize,
    pub pool_after: Vec<usize>,
    pub hidden: usize,
    pub latent_dim: usize,
}

impl Default for EncoderSpec {
    /// 3x48x128 lane crop, 32/64/128/128 filters with two pools, a
    /// 1568-unit hidden layer and a 30-dimensional latent space.
    fn default() -> Self {
        Self {
            input_shape: [3, 48, 128],
            conv_channels: vec![32, 64, 128, 128],
            kernel: 5,
            padding: 2,
            pool_after: vec![0, 1],
            hidden: 1568,
            latent_dim: 30,
        }
    }
}

impl EncoderSpec {
    /// Builds a model with seeded He-style random weights and randomised
    /// (but valid) batchnorm statistics.
    pub fn build_random(&self, seed: u64) -> Result<Model, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let [mut c, mut h, mut w] = self.input_shape;
        for (i, &co) in self.conv_channels.iter().enumerate() {
            let fan_in = (c * self.kernel * self.kernel) as f32;
            let scale = (2.0 / fan_in).sqrt();
            let weight = random_tensor(&mut rng, vec![co, c, self.kernel, self.kernel], scale);
            let bias = random_tensor(&mut rng, vec![co], 0.05);
            layers.push(Layer::Conv2d(Conv2d {
                weight,
                bias,
                stride: 1,
                padding: self.padding,
            }));
            layers.push(Layer::BatchNorm(BatchNorm {
                gamma: (0..co).map(|_| rng.random_range(0.8..1.2)).collect(),
                beta: (0..co).map(|_| rng.random_range(-0.1..0.1)).collect(),
                running_mean: (0..co).map(|_| rng.random_range(-0.1..0.1)).collect(),
                running_var: (0..co).map(|_| rng.random_range(0.5..1.5)).collect(),
                eps: 1e-5,
            }));
            layers.push(Layer::Elu { alpha: 1.0 });
            c = co;
            h = h + 2 * self.padding + 1 - self.kernel;
            w = w + 2 * self.padding + 1 - self.kernel;
            if self.pool_after.contains(&i) {
                layers.push(Layer::MaxPool2x2);
                h /= 2;
                w /= 2;
            }
        }
        layers.push(Layer::Flatten);
        let flat = c * h * w;
        layers.push(Layer::Dense(Dense {
            weight: random_tensor(
                &mut rng,
                vec![self.hidden, flat],
                (1.0 / flat as f32).sqrt(),
            ),
            bias: random_tensor(&mut rng, vec![self.hidden], 0.05),
        }));
        layers.push(Layer::Elu { alpha: 1.0 });
        layers.push(Layer::Dense(Dense {
            weight: random_tensor(
                &mut rng,
                vec![2 * self.latent_dim, self.hidden],
                (1.0 / self.hidden as f32).sqrt(),
            ),
            bias: random_tensor(&mut rng, vec![2 * self.latent_dim], 0.05),
        }));
        Model::new(layers, self.input_shape.to_vec(), self.latent_dim)
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.random_range(-1.0f32..1.0) * scale)
        .collect();
    Tensor::new(shape, data).expect("shape/product agree")
}
