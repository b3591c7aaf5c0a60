use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::fan_in_uniform;
use super::{BnUpdate, Pass};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Padding, ParamId, ParamStore, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    BasicCnn,
    Resnet,
}

/// Geometry of a two-stage character encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharEncoderConfig {
    pub kind: EncoderKind,
    /// Rows of the character image (padded word length).
    pub word_len: usize,
    /// Columns of the character image (character embedding width).
    pub d_c: usize,
    pub conv1: (usize, usize),
    pub conv2: (usize, usize),
    pub channels: (usize, usize),
    pub out_dim: usize,
    pub dropout: f64,
}

impl CharEncoderConfig {
    /// Width of the flattened feature map after both pooling steps.
    pub fn flat_dim(&self) -> usize {
        let pooled = |n: usize| n.div_ceil(2).div_ceil(2);
        pooled(self.word_len) * pooled(self.d_c) * self.channels.1
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Stage {
    kernel: ParamId,
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
    c_in: usize,
    c_out: usize,
}

impl Stage {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<f32>,
        prefix: &str,
        (kh, kw): (usize, usize),
        c_in: usize,
        c_out: usize,
        bn_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let kernel = fan_in_uniform(&[kh, kw, c_in, c_out], kh * kw * c_in, rng);
        Ok(Stage {
            kernel: store.insert(format!("{prefix}.kernel"), kernel, true)?,
            gamma: store.insert(
                format!("{prefix}.bn_gamma"),
                Tensor::full([bn_channels], 1.0),
                true,
            )?,
            beta: store.insert(
                format!("{prefix}.bn_beta"),
                Tensor::zeros([bn_channels]),
                true,
            )?,
            mean: store.insert(
                format!("{prefix}.bn_mean"),
                Tensor::zeros([bn_channels]),
                false,
            )?,
            var: store.insert(
                format!("{prefix}.bn_var"),
                Tensor::full([bn_channels], 1.0),
                false,
            )?,
            c_in,
            c_out,
        })
    }

    fn batch_norm<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        let store = g.store().expect("encoder graph has a parameter store");
        let running = (store.get(self.mean).data(), store.get(self.var).data());
        let (y, stats) = g.batch_norm(x, gamma, beta, pass.mode, Some(running))?;
        if let Some(stats) = stats {
            pass.bn_updates.push(BnUpdate {
                mean: self.mean,
                var: self.var,
                stats,
            });
        }
        Ok(y)
    }

    /// conv → BN → ReLU → dropout → pool.
    fn basic<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        p: f64,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        let k = g.param(self.kernel);
        let y = g.conv2d(x, k, None, Padding::Same)?;
        let y = self.batch_norm(g, y, pass)?;
        let y = g.relu(y);
        let y = g.dropout(y, p, pass.mode, pass.rng)?;
        g.maxpool2d(y)
    }

    /// Pre-activation residual unit, then pool:
    /// `pool(pad(x) + conv(dropout(relu(bn(x)))))`, where `pad` appends zero
    /// channels when the unit widens the channel count.
    fn residual<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        p: f64,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        let f = self.batch_norm(g, x, pass)?;
        let f = g.relu(f);
        let f = g.dropout(f, p, pass.mode, pass.rng)?;
        let k = g.param(self.kernel);
        let branch = g.conv2d(f, k, None, Padding::Same)?;
        let shortcut = pad_channels(g, x, self.c_in, self.c_out)?;
        let y = g.add(shortcut, branch)?;
        g.maxpool2d(y)
    }
}

/// Appends `c_out − c_in` zero channels to an NHWC tensor; the identity when
/// the counts agree.
fn pad_channels<T: Real>(g: &mut Graph<'_, T>, x: Var, c_in: usize, c_out: usize) -> Result<Var> {
    if c_in == c_out {
        return Ok(x);
    }
    let shape = g.shape(x).to_vec();
    let rows = g.value(x).outer_len();
    let flat = g.reshape(x, [rows, c_in])?;
    let embed = g.constant(Tensor::from_fn([c_in, c_out], |i| {
        if i / c_out == i % c_out {
            T::one()
        } else {
            T::zero()
        }
    }));
    let wide = g.matmul(flat, embed)?;
    let mut out_shape = shape;
    *out_shape.last_mut().unwrap() = c_out;
    g.reshape(wide, out_shape)
}

/// Two convolution stages (plain or residual), flatten, dense projection.
#[derive(Clone, Debug, PartialEq)]
pub struct CharEncoder {
    pub config: CharEncoderConfig,
    stages: [Stage; 2],
    pub dense_w: ParamId,
    pub dense_b: ParamId,
}

impl CharEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<f32>,
        prefix: &str,
        config: CharEncoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.word_len == 0 || config.d_c == 0 || config.out_dim == 0 {
            return Err(Error::Config(
                "character encoder extents must be positive".into(),
            ));
        }
        let (c1, c2) = config.channels;
        let resnet = config.kind == EncoderKind::Resnet;
        let s1 = Stage::new(
            store,
            &format!("{prefix}.stage1"),
            config.conv1,
            1,
            c1,
            if resnet { 1 } else { c1 },
            rng,
        )?;
        let s2 = Stage::new(
            store,
            &format!("{prefix}.stage2"),
            config.conv2,
            c1,
            c2,
            if resnet { c1 } else { c2 },
            rng,
        )?;
        let flat = config.flat_dim();
        let dense_w = store.insert(
            format!("{prefix}.dense_w"),
            fan_in_uniform(&[flat, config.out_dim], flat, rng),
            true,
        )?;
        let dense_b = store.insert(
            format!("{prefix}.dense_b"),
            Tensor::zeros([config.out_dim]),
            true,
        )?;
        Ok(CharEncoder {
            config,
            stages: [s1, s2],
            dense_w,
            dense_b,
        })
    }

    /// Kernels of the two convolution stages (the residual branches for a
    /// ResNet encoder).
    pub fn conv_kernels(&self) -> [ParamId; 2] {
        [self.stages[0].kernel, self.stages[1].kernel]
    }

    /// Flattened feature maps, `n × flat_dim`, for `n × word_len × d_c × 1`
    /// character images.
    pub fn features<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        images: Var,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        let c = &self.config;
        let shape = g.shape(images).to_vec();
        if shape.len() != 4 || shape[1..] != [c.word_len, c.d_c, 1] {
            if shape.len() == 4 && shape[1] == 0 {
                return Err(Error::Contract("word length 0".into()));
            }
            return Err(Error::dim(
                "character encoder",
                format!(
                    "expected n×{}×{}×1 images, got {shape:?}",
                    c.word_len, c.d_c
                ),
            ));
        }
        let mut x = images;
        for stage in &self.stages {
            x = match c.kind {
                EncoderKind::BasicCnn => stage.basic(g, x, c.dropout, pass)?,
                EncoderKind::Resnet => stage.residual(g, x, c.dropout, pass)?,
            };
        }
        g.reshape(x, [shape[0], c.flat_dim()])
    }

    pub fn encode<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        images: Var,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        let f = self.features(g, images, pass)?;
        let w = g.param(self.dense_w);
        let b = g.param(self.dense_b);
        let y = g.matmul(f, w)?;
        g.add_bias(y, b)
    }
}

/// Looks up `ids` (`n · word_len` character indices) in `table` and shapes
/// the result as `n × word_len × d_c × 1` images.
pub fn char_image<T: Real>(
    g: &mut Graph<'_, T>,
    table: Var,
    ids: &[usize],
    word_len: usize,
) -> Result<Var> {
    if word_len == 0 || ids.is_empty() || !ids.len().is_multiple_of(word_len) {
        return Err(Error::Contract(format!(
            "{} character indices do not form words of length {word_len}",
            ids.len()
        )));
    }
    let d_c = g.shape(table)[1];
    let rows = g.embedding_bag(table, ids.iter().map(|&i| vec![i]).collect())?;
    g.reshape(rows, [ids.len() / word_len, word_len, d_c, 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_dim_arithmetic() {
        let c = CharEncoderConfig {
            kind: EncoderKind::BasicCnn,
            word_len: 16,
            d_c: 64,
            conv1: (4, 8),
            conv2: (4, 4),
            channels: (8, 16),
            out_dim: 64,
            dropout: 0.5,
        };
        assert_eq!(c.flat_dim(), 4 * 16 * 16);
        let c = CharEncoderConfig { word_len: 25, ..c };
        assert_eq!(c.flat_dim(), 7 * 16 * 16);
    }
}
