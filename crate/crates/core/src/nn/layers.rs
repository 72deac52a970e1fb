//! Layer definitions and their inference-mode forward passes.
//!
//! Convolution is cross-correlation (no kernel flip), matching the usual ML
//! framework convention. Batch normalisation only uses running statistics.

use super::{NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels, kernel_h, kernel_w]`.
    pub weight: Tensor,
    /// `[out_channels]`.
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out_features, in_features]`.
    pub weight: Tensor,
    /// `[out_features]`.
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    BatchNorm(BatchNorm),
    Elu { alpha: f32 },
    MaxPool2x2,
    Flatten,
    Dense(Dense),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Elu { .. } => "elu",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::Conv2d(c) => conv2d(input, c),
            Layer::BatchNorm(b) => batchnorm(input, b),
            Layer::Elu { alpha } => Ok(elu(input, *alpha)),
            Layer::MaxPool2x2 => maxpool2x2(input),
            Layer::Flatten => Ok(input.clone().flatten()),
            Layer::Dense(d) => dense(input, d),
        }
    }

    /// Output shape for a given input shape, without running any arithmetic.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        match self {
            Layer::Conv2d(c) => {
                let (ci, h, w) = chw_of(input)?;
                let (co, ki, kh, kw) = c.dims()?;
                if ci != ki {
                    return Err(NnError::ChannelMismatch {
                        expected: ki,
                        actual: ci,
                    });
                }
                let oh = conv_out_dim(h, kh, c.padding, c.stride)?;
                let ow = conv_out_dim(w, kw, c.padding, c.stride)?;
                Ok(vec![co, oh, ow])
            }
            Layer::BatchNorm(b) => {
                let (c, _, _) = chw_of(input)?;
                b.check(c)?;
                Ok(input.to_vec())
            }
            Layer::Elu { .. } => Ok(input.to_vec()),
            Layer::MaxPool2x2 => {
                let (c, h, w) = chw_of(input)?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(NnError::OddPoolInput {
                        height: h,
                        width: w,
                    });
                }
                Ok(vec![c, h / 2, w / 2])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => {
                let (out, inp) = d.dims()?;
                if input.len() != 1 || input[0] != inp {
                    return Err(NnError::ShapeMismatch {
                        context: "dense input".into(),
                        expected: vec![inp],
                        actual_len: input.iter().product(),
                    });
                }
                Ok(vec![out])
            }
        }
    }
}

fn chw_of(shape: &[usize]) -> Result<(usize, usize, usize), NnError> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(NnError::Rank {
            expected: 3,
            actual: shape.len(),
        }),
    }
}

fn conv_out_dim(size: usize, k: usize, pad: usize, stride: usize) -> Result<usize, NnError> {
    if stride == 0 {
        return Err(NnError::InvalidParameter("conv stride must be >= 1".into()));
    }
    let padded = size + 2 * pad;
    if padded < k {
        return Err(NnError::NonPositiveOutput);
    }
    Ok((padded - k) / stride + 1)
}

impl Conv2d {
    /// `(out_channels, in_channels, kernel_h, kernel_w)`.
    pub fn dims(&self) -> Result<(usize, usize, usize, usize), NnError> {
        match *self.weight.shape() {
            [o, i, kh, kw] => {
                if self.bias.len() != o {
                    return Err(NnError::ShapeMismatch {
                        context: "conv bias".into(),
                        expected: vec![o],
                        actual_len: self.bias.len(),
                    });
                }
                Ok((o, i, kh, kw))
            }
            _ => Err(NnError::Rank {
                expected: 4,
                actual: self.weight.shape().len(),
            }),
        }
    }
}

impl BatchNorm {
    fn check(&self, channels: usize) -> Result<(), NnError> {
        for v in [
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        ] {
            if v.len() != channels {
                return Err(NnError::ChannelMismatch {
                    expected: v.len(),
                    actual: channels,
                });
            }
        }
        if let Some(c) = self.running_var.iter().position(|&v| v < 0.0) {
            return Err(NnError::NegativeVariance { channel: c });
        }
        Ok(())
    }
}

impl Dense {
    /// `(out_features, in_features)`.
    pub fn dims(&self) -> Result<(usize, usize), NnError> {
        match *self.weight.shape() {
            [o, i] => {
                if self.bias.len() != o {
                    return Err(NnError::ShapeMismatch {
                        context: "dense bias".into(),
                        expected: vec![o],
                        actual_len: self.bias.len(),
                    });
                }
                Ok((o, i))
            }
            _ => Err(NnError::Rank {
                expected: 2,
                actual: self.weight.shape().len(),
            }),
        }
    }
}

pub fn conv2d(input: &Tensor, layer: &Conv2d) -> Result<Tensor, NnError> {
    let out_shape = Layer::Conv2d(layer.clone()).output_shape(input.shape())?;
    let (_, h, w) = input.chw()?;
    let (co, ci, kh, kw) = layer.dims()?;
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let (stride, pad) = (layer.stride as isize, layer.padding as isize);
    let x = input.data();
    let k = layer.weight.data();
    let b = layer.bias.data();
    let mut out = vec![0.0f32; co * oh * ow];

    for o in 0..co {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..ci {
            let xin = &x[c * h * w..(c + 1) * h * w];
            let kern = &k[(o * ci + c) * kh * kw..(o * ci + c + 1) * kh * kw];
            for oy in 0..oh {
                let iy0 = oy as isize * stride - pad;
                for ox in 0..ow {
                    let ix0 = ox as isize * stride - pad;
                    let mut acc = 0.0f32;
                    for ky in 0..kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &xin[iy as usize * w..(iy as usize + 1) * w];
                        let krow = &kern[ky * kw..(ky + 1) * kw];
                        for (kx, &kv) in krow.iter().enumerate() {
                            let ix = ix0 + kx as isize;
                            if ix >= 0 && ix < w as isize {
                                acc += kv * row[ix as usize];
                            }
                        }
                    }
                    plane[oy * ow + ox] += acc;
                }
            }
        }
    }
    Tensor::new(out_shape, out)
}

pub fn batchnorm(input: &Tensor, layer: &BatchNorm) -> Result<Tensor, NnError> {
    let (c, h, w) = input.chw()?;
    layer.check(c)?;
    let hw = h * w;
    let mut out = input.clone();
    for (ch, plane) in out.data_mut().chunks_mut(hw.max(1)).enumerate().take(c) {
        let scale = layer.gamma[ch] / (layer.running_var[ch] + layer.eps).sqrt();
        let mean = layer.running_mean[ch];
        let shift = layer.beta[ch];
        for v in plane.iter_mut() {
            *v = scale * (*v - mean) + shift;
        }
    }
    Ok(out)
}

pub fn elu(input: &Tensor, alpha: f32) -> Tensor {
    input.map(|x| if x > 0.0 { x } else { alpha * x.exp_m1() })
}

pub fn maxpool2x2(input: &Tensor) -> Result<Tensor, NnError> {
    let out_shape = Layer::MaxPool2x2.output_shape(input.shape())?;
    let (c, h, w) = input.chw()?;
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i = base + 2 * oy * w + 2 * ox;
                let m = x[i].max(x[i + 1]).max(x[i + w]).max(x[i + w + 1]);
                out.push(m);
            }
        }
    }
    Tensor::new(out_shape, out)
}

pub fn dense(input: &Tensor, layer: &Dense) -> Result<Tensor, NnError> {
    let out_shape = Layer::Dense(layer.clone()).output_shape(input.shape())?;
    let (o, i) = layer.dims()?;
    let x = input.data();
    let wt = layer.weight.data();
    let b = layer.bias.data();
    let out = (0..o)
        .map(|r| {
            let row = &wt[r * i..(r + 1) * i];
            row.iter().zip(x).fold(b[r], |acc, (w, v)| acc + w * v)
        })
        .collect();
    Tensor::new(out_shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let input = t(&[1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let layer = Conv2d {
            weight: t(&[1, 1, 1, 1], &[1.0]),
            bias: t(&[1], &[0.0]),
            stride: 1,
            padding: 0,
        };
        assert_eq!(conv2d(&input, &layer).unwrap(), input);
    }

    #[test]
    fn all_ones_kernel_sums_entries() {
        let input = t(&[1, 2, 2], &[1., 2., 3., 4.]);
        let layer = Conv2d {
            weight: t(&[1, 1, 2, 2], &[1.0; 4]),
            bias: t(&[1], &[0.0]),
            stride: 1,
            padding: 0,
        };
        let out = conv2d(&input, &layer).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[10.0]);
    }

    #[test]
    fn conv_channel_mismatch_is_rejected() {
        let input = Tensor::zeros(vec![2, 4, 4]);
        let layer = Conv2d {
            weight: Tensor::zeros(vec![1, 3, 3, 3]),
            bias: Tensor::zeros(vec![1]),
            stride: 1,
            padding: 0,
        };
        assert!(matches!(
            conv2d(&input, &layer),
            Err(NnError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn conv_kernel_larger_than_input() {
        let input = Tensor::zeros(vec![1, 2, 2]);
        let layer = Conv2d {
            weight: Tensor::zeros(vec![1, 1, 5, 5]),
            bias: Tensor::zeros(vec![1]),
            stride: 1,
            padding: 0,
        };
        assert!(matches!(
            conv2d(&input, &layer),
            Err(NnError::NonPositiveOutput)
        ));
    }

    #[test]
    fn conv_padding_preserves_size_for_5x5() {
        let input = Tensor::zeros(vec![3, 48, 128]);
        let layer = Conv2d {
            weight: Tensor::zeros(vec![8, 3, 5, 5]),
            bias: Tensor::zeros(vec![8]),
            stride: 1,
            padding: 2,
        };
        assert_eq!(conv2d(&input, &layer).unwrap().shape(), &[8, 48, 128]);
    }

    #[test]
    fn batchnorm_identity_and_hand_arithmetic() {
        let input = t(&[1, 1, 2], &[-3.0, 5.5]);
        let id = BatchNorm {
            gamma: vec![1.0],
            beta: vec![0.0],
            running_mean: vec![0.0],
            running_var: vec![1.0],
            eps: 0.0,
        };
        assert_eq!(batchnorm(&input, &id).unwrap(), input);

        let bn = BatchNorm {
            gamma: vec![3.0],
            beta: vec![1.0],
            running_mean: vec![2.0],
            running_var: vec![4.0],
            eps: 0.0,
        };
        let out = batchnorm(&t(&[1, 1, 1], &[4.0]), &bn).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn batchnorm_rejects_negative_variance() {
        let bn = BatchNorm {
            gamma: vec![1.0],
            beta: vec![0.0],
            running_mean: vec![0.0],
            running_var: vec![-1.0],
            eps: 1e-5,
        };
        assert!(matches!(
            batchnorm(&Tensor::zeros(vec![1, 2, 2]), &bn),
            Err(NnError::NegativeVariance { channel: 0 })
        ));
    }

    #[test]
    fn elu_branches() {
        let out = elu(&Tensor::from_vec(vec![2.0, 0.0, -1.0]), 1.0);
        assert_eq!(out.data()[0], 2.0);
        assert_eq!(out.data()[1], 0.0);
        assert!((out.data()[2] - (-0.63212)).abs() < 1e-5);
    }

    #[test]
    fn maxpool_picks_window_max() {
        let out = maxpool2x2(&t(&[1, 2, 2], &[1., 2., 3., 4.])).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);

        let c = Tensor::new(vec![2, 4, 6], vec![0.25; 48]).unwrap();
        let out = maxpool2x2(&c).unwrap();
        assert_eq!(out.shape(), &[2, 2, 3]);
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        assert!(matches!(
            maxpool2x2(&Tensor::zeros(vec![1, 3, 4])),
            Err(NnError::OddPoolInput { .. })
        ));
    }

    #[test]
    fn dense_identity() {
        let layer = Dense {
            weight: t(&[2, 2], &[1., 0., 0., 1.]),
            bias: t(&[2], &[0., 0.]),
        };
        let v = Tensor::from_vec(vec![0.5, -2.0]);
        assert_eq!(dense(&v, &layer).unwrap(), v);
    }
}
