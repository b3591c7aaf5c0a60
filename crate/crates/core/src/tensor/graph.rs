use std::borrow::Cow;
use std::collections::HashMap;

use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Batch-norm variance floor.
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    MulConst(Var, Vec<T>),
    Scale(Var, T),
    OneMinus(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatLast(Vec<Var>),
    ConcatRows(Vec<Var>),
    EmbeddingBag {
        table: Var,
        bags: Vec<Vec<usize>>,
    },
    SelectRows {
        src: Var,
        rows: Vec<Option<usize>>,
    },
    Reshape(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    BatchNormTrain {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    BatchNormEval {
        input: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    SoftmaxXent {
        logits: Var,
        probs: Vec<T>,
        targets: Vec<Option<usize>>,
        weight: T,
    },
    Sum(Var),
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Per-channel statistics of a training-mode batch-norm call, for the
/// caller to fold into running averages.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased (n−1) variance.
    pub var: Vec<T>,
}

/// A recorded forward computation. Nodes are appended in execution order,
/// which is a topological order, and `backward` walks them in reverse once.
pub struct Graph<'a, T: Real> {
    params: Option<&'a ParamStore<T>>,
    param_vars: HashMap<ParamId, Var>,
    perturbation: Option<(ParamId, usize, T)>,
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Real> Graph<'a, T> {
    /// A graph with no parameter store; only inputs and constants.
    pub fn detached() -> Self {
        Graph {
            params: None,
            param_vars: HashMap::new(),
            perturbation: None,
            nodes: Vec::new(),
        }
    }

    pub fn new(params: &'a ParamStore<T>) -> Self {
        Graph {
            params: Some(params),
            ..Self::detached()
        }
    }

    /// Like [`Graph::new`], but coordinate `coord` of parameter `id` reads as
    /// its stored value plus `delta`. Used by finite-difference checks.
    pub fn perturbed(params: &'a ParamStore<T>, id: ParamId, coord: usize, delta: T) -> Self {
        Graph {
            perturbation: Some((id, coord, delta)),
            ..Self::new(params)
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Cow::Owned(value), op, needs)
    }

    /// The parameter store this graph reads from, if any.
    pub fn store(&self) -> Option<&'a ParamStore<T>> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    /// The node for a stored parameter; repeated calls share one node so
    /// gradients from every use accumulate in one place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.params.expect("graph has no parameter store");
        let value = match self.perturbation {
            Some((pid, coord, delta)) if pid == id => {
                let mut t = store.get(id).clone();
                t.data_mut()[coord] = t.data()[coord] + delta;
                Cow::Owned(t)
            }
            _ => Cow::Borrowed(store.get(id)),
        };
        let v = self.push(value, Op::Param, store.is_trainable(id));
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(
                "matmul",
                format!("cannot multiply {sa:?} by {sb:?}"),
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push_op(Tensor::new([m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!(
                    "operands {:?} and {:?} differ",
                    self.shape(a),
                    self.shape(b)
                ),
            ));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor {
            shape: ta.shape().to_vec(),
            data,
        }
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let t = self.value(a);
        Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push_op(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push_op(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push_op(t, Op::Mul(a, b), &[a, b]))
    }

    /// `x + b` with `b` broadcast along every axis but the last.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.shape(b) != [d] {
            return Err(Error::dim(
                "add_bias",
                format!(
                    "bias {:?} does not match last axis of {:?}",
                    self.shape(b),
                    self.shape(x)
                ),
            ));
        }
        let bias = self.value(b).data().to_vec();
        let mut t = self.value(x).clone();
        for row in t.data_mut().chunks_mut(d) {
            for (v, &bv) in row.iter_mut().zip(&bias) {
                *v = *v + bv;
            }
        }
        Ok(self.push_op(t, Op::AddBias(x, b), &[x, b]))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&mut self, x: Var, c: Vec<T>) -> Result<Var> {
        if c.len() != self.value(x).len() {
            return Err(Error::dim(
                "mul_const",
                format!("constant of length {} against {:?}", c.len(), self.shape(x)),
            ));
        }
        let t = {
            let tx = self.value(x);
            Tensor {
                shape: tx.shape().to_vec(),
                data: tx.data().iter().zip(&c).map(|(&a, &b)| a * b).collect(),
            }
        };
        Ok(self.push_op(t, Op::MulConst(x, c), &[x]))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let t = self.map(x, |v| v * c);
        self.push_op(t, Op::Scale(x, c), &[x])
    }

    /// `1 − x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| T::one() - v);
        self.push_op(t, Op::OneMinus(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| if v > T::zero() { v } else { T::zero() });
        self.push_op(t, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map(x, sigmoid);
        self.push_op(t, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| v.tanh());
        self.push_op(t, Op::Tanh(x), &[x])
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::dim("concat", "nothing to concatenate"))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::dim(
                    "concat",
                    format!("leading axes {:?} and {:?} differ", self.shape(first), s),
                ));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let rows = self.value(first).outer_len();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push_op(
            Tensor::new(shape, data)?,
            Op::ConcatLast(parts.to_vec()),
            parts,
        ))
    }

    /// Concatenation along the first axis; trailing axes must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::dim("concat_rows", "nothing to concatenate"))?;
        let tail = self.shape(first)[1..].to_vec();
        let mut n = 0;
        for &p in parts {
            if self.shape(p)[1..] != tail[..] {
                return Err(Error::dim(
                    "concat_rows",
                    format!(
                        "trailing axes {:?} and {:?} differ",
                        self.shape(first),
                        self.shape(p)
                    ),
                ));
            }
            n += self.shape(p)[0];
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![n];
        shape.extend(tail);
        Ok(self.push_op(
            Tensor::new(shape, data)?,
            Op::ConcatRows(parts.to_vec()),
            parts,
        ))
    }

    /// Row `i` of the result is the sum of the table rows listed in
    /// `bags[i]`. Index 0 is the padding row: it contributes nothing and
    /// never receives gradient. An empty bag yields a zero row.
    pub fn embedding_bag(&mut self, table: Var, bags: Vec<Vec<usize>>) -> Result<Var> {
        let ts = self.shape(table);
        if ts.len() != 2 {
            return Err(Error::dim(
                "embedding_bag",
                format!("table must be 2-D, got {ts:?}"),
            ));
        }
        let (rows, d) = (ts[0], ts[1]);
        if bags.is_empty() {
            return Err(Error::dim("embedding_bag", "no rows requested"));
        }
        let tv = self.value(table);
        let mut data = vec![T::zero(); bags.len() * d];
        for (out, bag) in data.chunks_mut(d).zip(&bags) {
            for &ix in bag {
                if ix >= rows {
                    return Err(Error::Index {
                        what: "embedding table",
                        index: ix,
                        size: rows,
                    });
                }
                if ix == 0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(tv.row(ix)) {
                    *o = *o + v;
                }
            }
        }
        let t = Tensor::new([bags.len(), d], data)?;
        Ok(self.push_op(t, Op::EmbeddingBag { table, bags }, &[table]))
    }

    /// Gathers first-axis slices; `None` yields zeros.
    pub fn select_rows(&mut self, src: Var, rows: Vec<Option<usize>>) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        let width: usize = shape[1..].iter().product();
        if rows.is_empty() {
            return Err(Error::dim("select_rows", "no rows requested"));
        }
        let sv = self.value(src).data();
        let mut data = vec![T::zero(); rows.len() * width];
        for (out, r) in data.chunks_mut(width).zip(&rows) {
            if let Some(r) = *r {
                if r >= shape[0] {
                    return Err(Error::Index {
                        what: "select_rows source",
                        index: r,
                        size: shape[0],
                    });
                }
                out.copy_from_slice(&sv[r * width..(r + 1) * width]);
            }
        }
        let mut out_shape = vec![rows.len()];
        out_shape.extend_from_slice(&shape[1..]);
        Ok(self.push_op(
            Tensor::new(out_shape, data)?,
            Op::SelectRows { src, rows },
            &[src],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push_op(t, Op::Reshape(x), &[x]))
    }

    /// Cross-correlation of NHWC (or HWC) images with an HWIO kernel.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        padding: Padding,
    ) -> Result<Var> {
        let is = self.shape(input).to_vec();
        let ks = self.shape(kernel).to_vec();
        let (n, h, w, ci) = match is[..] {
            [h, w, c] => (1, h, w, c),
            [n, h, w, c] => (n, h, w, c),
            _ => {
                return Err(Error::dim(
                    "conv2d",
                    format!("input must be HWC or NHWC, got {is:?}"),
                ))
            }
        };
        let [kh, kw, kci, co] = ks[..] else {
            return Err(Error::dim(
                "conv2d",
                format!("kernel must be HWIO, got {ks:?}"),
            ));
        };
        if kci != ci {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {ks:?} expects {kci} input channels, input {is:?} has {ci}"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [co] {
                return Err(Error::dim(
                    "conv2d",
                    format!("bias {:?} for {co} channels", self.shape(b)),
                ));
            }
        }
        let geom = match padding {
            Padding::Same => ConvGeom::same(n, h, w, ci, kh, kw, co),
            Padding::Valid => ConvGeom::valid(n, h, w, ci, kh, kw, co).ok_or_else(|| {
                Error::dim(
                    "conv2d",
                    format!("kernel {kh}×{kw} larger than unpadded input {h}×{w}"),
                )
            })?,
        };
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let shape = if is.len() == 3 {
            vec![geom.oh, geom.ow, co]
        } else {
            vec![n, geom.oh, geom.ow, co]
        };
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        Ok(self.push_op(
            Tensor::new(shape, out)?,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            &inputs,
        ))
    }

    /// 2×2 stride-2 max pooling over NHWC (or HWC) images.
    pub fn maxpool2d(&mut self, input: Var) -> Result<Var> {
        let is = self.shape(input).to_vec();
        let (n, h, w, c) = match is[..] {
            [h, w, c] => (1, h, w, c),
            [n, h, w, c] => (n, h, w, c),
            _ => {
                return Err(Error::dim(
                    "maxpool2d",
                    format!("input must be HWC or NHWC, got {is:?}"),
                ))
            }
        };
        let (out, argmax) = kernels::maxpool2x2_forward(self.value(input).data(), n, h, w, c);
        let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
        let shape = if is.len() == 3 {
            vec![oh, ow, c]
        } else {
            vec![n, oh, ow, c]
        };
        Ok(self.push_op(
            Tensor::new(shape, out)?,
            Op::MaxPool { input, argmax },
            &[input],
        ))
    }

    /// Batch normalization over the last axis (channels), pooling every other
    /// axis. Training mode normalizes by the batch statistics and returns them;
    /// evaluation mode uses `running = (mean, var)`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: Mode,
        running: Option<(&[T], &[T])>,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let c = self.value(x).last_dim();
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(p) != [c] {
                return Err(Error::dim(
                    "batch_norm",
                    format!("{name} {:?} for {c} channels", self.shape(p)),
                ));
            }
        }
        let eps = T::of(BN_EPSILON);
        let m = self.value(x).outer_len();
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        match mode {
            Mode::Train => {
                if m < 2 {
                    return Err(Error::Contract(
                        "batch_norm in training mode needs at least 2 values per channel".into(),
                    ));
                }
                let xv = self.value(x).data();
                let mf = T::of(m as f64);
                let mut mean = vec![T::zero(); c];
                for row in xv.chunks(c) {
                    for (s, &v) in mean.iter_mut().zip(row) {
                        *s = *s + v;
                    }
                }
                mean.iter_mut().for_each(|s| *s = *s / mf);
                let mut var = vec![T::zero(); c];
                for row in xv.chunks(c) {
                    for ((s, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                        *s = *s + (v - mu) * (v - mu);
                    }
                }
                var.iter_mut().for_each(|s| *s = *s / mf);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut xhat = Vec::with_capacity(xv.len());
                let mut out = Vec::with_capacity(xv.len());
                for row in xv.chunks(c) {
                    for ch in 0..c {
                        let xh = (row[ch] - mean[ch]) * inv_std[ch];
                        xhat.push(xh);
                        out.push(g[ch] * xh + b[ch]);
                    }
                }
                let shape = self.shape(x).to_vec();
                let unbias = T::of(m as f64 / (m as f64 - 1.0));
                let stats = BatchStats {
                    mean,
                    var: var.iter().map(|&v| v * unbias).collect(),
                };
                let v = self.push_op(
                    Tensor::new(shape, out)?,
                    Op::BatchNormTrain {
                        input: x,
                        gamma,
                        beta,
                        xhat,
                        inv_std,
                    },
                    &[x, gamma, beta],
                );
                Ok((v, Some(stats)))
            }
            Mode::Eval => {
                let (rm, rv) = running.ok_or_else(|| {
                    Error::Contract("batch_norm in evaluation mode needs running statistics".into())
                })?;
                if rm.len() != c || rv.len() != c {
                    return Err(Error::dim(
                        "batch_norm",
                        "running statistics do not match channels",
                    ));
                }
                let inv_std: Vec<T> = rv.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let xv = self.value(x).data();
                let mut out = Vec::with_capacity(xv.len());
                for row in xv.chunks(c) {
                    for ch in 0..c {
                        out.push(g[ch] * ((row[ch] - rm[ch]) * inv_std[ch]) + b[ch]);
                    }
                }
                let shape = self.shape(x).to_vec();
                let v = self.push_op(
                    Tensor::new(shape, out)?,
                    Op::BatchNormEval {
                        input: x,
                        gamma,
                        beta,
                        mean: rm.to_vec(),
                        inv_std,
                    },
                    &[x, gamma, beta],
                );
                Ok((v, None))
            }
        }
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1−p)`. Evaluation mode
    /// and `p = 0` return `x` itself.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        check_rate(p)?;
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.value(x).len(), p, rng);
        self.mul_const(x, mask)
    }

    /// Sum of per-row cross-entropies `weight · Σ −log softmax(logits_r)[gold_r]`
    /// over rows whose target is `Some`. Rows with `None` are masked out and
    /// receive exactly zero gradient.
    pub fn softmax_xent(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        weight: T,
    ) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        let c = *s.last().unwrap();
        if c < 2 {
            return Err(Error::dim(
                "softmax_xent",
                format!("need at least 2 classes, got {c}"),
            ));
        }
        let rows = self.value(logits).outer_len();
        if targets.len() != rows {
            return Err(Error::dim(
                "softmax_xent",
                format!("{} targets for {rows} rows of {s:?}", targets.len()),
            ));
        }
        let lv = self.value(logits);
        let mut probs = vec![T::zero(); lv.len()];
        let mut loss = T::zero();
        for (r, target) in targets.iter().enumerate() {
            let Some(gold) = *target else { continue };
            if gold >= c {
                return Err(Error::Index {
                    what: "class",
                    index: gold,
                    size: c,
                });
            }
            let row = lv.row(r);
            let p = &mut probs[r * c..(r + 1) * c];
            let lse = softmax_into(row, p);
            loss = loss + (lse - row[gold]);
        }
        let t = Tensor::scalar(loss * weight);
        Ok(self.push_op(
            t,
            Op::SoftmaxXent {
                logits,
                probs,
                targets: targets.to_vec(),
                weight,
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params = HashMap::new();
        for (&pid, &v) in &self.param_vars {
            if let Some(g) = grads[v.0].take() {
                params.insert(pid, g);
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn propagate(&self, node: &Node<'a, T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if wants(*a) {
                    accumulate(grads, *a, kernels::matmul_grad_lhs(g, val(*b), m, k, n));
                }
                if wants(*b) {
                    accumulate(grads, *b, kernels::matmul_grad_rhs(val(*a), g, m, k, n));
                }
            }
            Op::Add(a, b) => {
                accumulate_slice(grads, *a, g, wants(*a));
                accumulate_slice(grads, *b, g, wants(*b));
            }
            Op::Sub(a, b) => {
                accumulate_slice(grads, *a, g, wants(*a));
                if wants(*b) {
                    accumulate(grads, *b, g.iter().map(|&v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    accumulate(
                        grads,
                        *a,
                        g.iter().zip(val(*b)).map(|(&d, &y)| d * y).collect(),
                    );
                }
                if wants(*b) {
                    accumulate(
                        grads,
                        *b,
                        g.iter().zip(val(*a)).map(|(&d, &x)| d * x).collect(),
                    );
                }
            }
            Op::AddBias(x, b) => {
                accumulate_slice(grads, *x, g, wants(*x));
                if wants(*b) {
                    let d = self.value(*b).len();
                    let mut db = vec![T::zero(); d];
                    for row in g.chunks(d) {
                        for (s, &v) in db.iter_mut().zip(row) {
                            *s = *s + v;
                        }
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::MulConst(x, c) => {
                if wants(*x) {
                    accumulate(grads, *x, g.iter().zip(c).map(|(&d, &m)| d * m).collect());
                }
            }
            Op::Scale(x, c) => {
                if wants(*x) {
                    accumulate(grads, *x, g.iter().map(|&d| d * *c).collect());
                }
            }
            Op::OneMinus(x) => {
                if wants(*x) {
                    accumulate(grads, *x, g.iter().map(|&d| -d).collect());
                }
            }
            Op::Relu(x) => {
                if wants(*x) {
                    let gx = g
                        .iter()
                        .zip(val(*x))
                        .map(|(&d, &v)| if v > T::zero() { d } else { T::zero() })
                        .collect();
                    accumulate(grads, *x, gx);
                }
            }
            Op::Sigmoid(x) => {
                if wants(*x) {
                    let y = node.value.data();
                    accumulate(
                        grads,
                        *x,
                        g.iter()
                            .zip(y)
                            .map(|(&d, &s)| d * s * (T::one() - s))
                            .collect(),
                    );
                }
            }
            Op::Tanh(x) => {
                if wants(*x) {
                    let y = node.value.data();
                    accumulate(
                        grads,
                        *x,
                        g.iter()
                            .zip(y)
                            .map(|(&d, &t)| d * (T::one() - t * t))
                            .collect(),
                    );
                }
            }
            Op::ConcatLast(parts) => {
                let total = node.value.last_dim();
                let rows = node.value.outer_len();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    if wants(p) {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(grads, p, gp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    accumulate_slice(grads, p, &g[offset..offset + n], wants(p));
                    offset += n;
                }
            }
            Op::EmbeddingBag { table, bags } => {
                if wants(*table) {
                    let d = self.value(*table).last_dim();
                    let mut gt = vec![T::zero(); self.value(*table).len()];
                    for (gr, bag) in g.chunks(d).zip(bags) {
                        for &ix in bag.iter().filter(|&&ix| ix != 0) {
                            for (s, &v) in gt[ix * d..(ix + 1) * d].iter_mut().zip(gr) {
                                *s = *s + v;
                            }
                        }
                    }
                    accumulate(grads, *table, gt);
                }
            }
            Op::SelectRows { src, rows } => {
                if wants(*src) {
                    let st = self.value(*src);
                    let width = st.len() / st.shape()[0];
                    let mut gs = vec![T::zero(); st.len()];
                    for (gr, r) in g.chunks(width).zip(rows) {
                        if let Some(r) = *r {
                            for (s, &v) in gs[r * width..(r + 1) * width].iter_mut().zip(gr) {
                                *s = *s + v;
                            }
                        }
                    }
                    accumulate(grads, *src, gs);
                }
            }
            Op::Reshape(x) => accumulate_slice(grads, *x, g, wants(*x)),
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                if wants(*input) {
                    accumulate(
                        grads,
                        *input,
                        kernels::conv2d_grad_input(g, val(*kernel), geom),
                    );
                }
                let want_b = bias.is_some_and(wants);
                if wants(*kernel) || want_b {
                    let (dk, db) = kernels::conv2d_grad_params(val(*input), g, geom);
                    if wants(*kernel) {
                        accumulate(grads, *kernel, dk);
                    }
                    if let (Some(b), true) = (bias, want_b) {
                        accumulate(grads, *b, db);
                    }
                }
            }
            Op::MaxPool { input, argmax } => {
                if wants(*input) {
                    let mut gi = vec![T::zero(); self.value(*input).len()];
                    for (&ix, &d) in argmax.iter().zip(g) {
                        gi[ix] = gi[ix] + d;
                    }
                    accumulate(grads, *input, gi);
                }
            }
            Op::BatchNormTrain {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = inv_std.len();
                let gam = val(*gamma);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for (gr, xr) in g.chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        dgamma[ch] = dgamma[ch] + gr[ch] * xr[ch];
                        dbeta[ch] = dbeta[ch] + gr[ch];
                    }
                }
                if wants(*input) {
                    let m = T::of((g.len() / c) as f64);
                    let mut gi = Vec::with_capacity(g.len());
                    for (gr, xr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for ch in 0..c {
                            // dx = γ·σ⁻¹/m · (m·dy − Σdy − x̂·Σ(dy·x̂))
                            let v = gam[ch] * inv_std[ch] / m
                                * (m * gr[ch] - dbeta[ch] - xr[ch] * dgamma[ch]);
                            gi.push(v);
                        }
                    }
                    accumulate(grads, *input, gi);
                }
                if wants(*gamma) {
                    accumulate(grads, *gamma, dgamma);
                }
                if wants(*beta) {
                    accumulate(grads, *beta, dbeta);
                }
            }
            Op::BatchNormEval {
                input,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let c = inv_std.len();
                let gam = val(*gamma);
                let xv = val(*input);
                if wants(*input) {
                    let gi = g
                        .iter()
                        .enumerate()
                        .map(|(i, &d)| d * gam[i % c] * inv_std[i % c])
                        .collect();
                    accumulate(grads, *input, gi);
                }
                if wants(*gamma) || wants(*beta) {
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for (gr, xr) in g.chunks(c).zip(xv.chunks(c)) {
                        for ch in 0..c {
                            dgamma[ch] = dgamma[ch] + gr[ch] * (xr[ch] - mean[ch]) * inv_std[ch];
                            dbeta[ch] = dbeta[ch] + gr[ch];
                        }
                    }
                    if wants(*gamma) {
                        accumulate(grads, *gamma, dgamma);
                    }
                    if wants(*beta) {
                        accumulate(grads, *beta, dbeta);
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                probs,
                targets,
                weight,
            } => {
                if wants(*logits) {
                    let c = self.value(*logits).last_dim();
                    let scale = g[0] * *weight;
                    let mut gl = vec![T::zero(); probs.len()];
                    for (r, t) in targets.iter().enumerate() {
                        let Some(gold) = *t else { continue };
                        for j in 0..c {
                            let onehot = if j == gold { T::one() } else { T::zero() };
                            gl[r * c + j] = scale * (probs[r * c + j] - onehot);
                        }
                    }
                    accumulate(grads, *logits, gl);
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    accumulate(grads, *x, vec![g[0]; self.value(*x).len()]);
                }
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_slice<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, g: &[T], wanted: bool) {
    if !wanted {
        return;
    }
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    nodes: Vec<Option<Vec<T>>>,
    params: HashMap<ParamId, Vec<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to a graph node, if any flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].as_deref()
    }

    /// Gradient of a parameter. `None` means the parameter took no part in
    /// the loss, which is distinct from a zero gradient.
    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params.get(&id).map(Vec::as_slice)
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.keys().copied()
    }

    /// Adds another set of parameter gradients into this one.
    pub fn merge_params(&mut self, other: Gradients<T>) {
        for (id, g) in other.params {
            match self.params.get_mut(&id) {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b),
                None => {
                    self.params.insert(id, g);
                }
            }
        }
    }

    /// Zeroes the given rows of a 2-D parameter's gradient.
    pub fn zero_rows(&mut self, id: ParamId, row_len: usize, rows: &[usize]) {
        if let Some(g) = self.params.get_mut(&id) {
            for &r in rows {
                g[r * row_len..(r + 1) * row_len]
                    .iter_mut()
                    .for_each(|v| *v = T::zero());
            }
        }
    }
}

pub(crate) fn check_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter {
            name: "dropout rate",
            detail: format!("{p} is outside [0, 1)"),
        });
    }
    Ok(())
}

/// Inverted-dropout multipliers: 0 with probability `p`, else `1/(1−p)`.
pub(crate) fn dropout_mask<T: Real, R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Writes `softmax(row)` into `out` and returns `logsumexp(row)`.
pub(crate) fn softmax_into<T: Real>(row: &[T], out: &mut [T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        z = z + *o;
    }
    out.iter_mut().for_each(|o| *o = *o / z);
    max + z.ln()
}

/// Numerically stable softmax of one vector.
pub fn softmax<T: Real>(row: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); row.len()];
    softmax_into(row, &mut out);
    out
}
