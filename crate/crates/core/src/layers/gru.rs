use rand::Rng;

use super::init::{fan_in_uniform, orthogonal};
use super::Pass;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Real, Tensor, Var};

const GATES: [&str; 3] = ["z", "r", "h"];

/// Parameters of one GRU layer. Index 0, 1, 2 of each array is the update
/// gate, the reset gate and the candidate state.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w: [ParamId; 3],
    pub u: [ParamId; 3],
    pub b: [ParamId; 3],
    pub d_in: usize,
    pub d_h: usize,
}

impl GruParams {
    /// Fan-in uniform input weights, orthogonal recurrent weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<f32>,
        prefix: &str,
        d_in: usize,
        d_h: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut ids =
            |kind: &str, make: &mut dyn FnMut(&mut R) -> Tensor<f32>| -> Result<[ParamId; 3]> {
                let mut out = Vec::with_capacity(3);
                for gate in GATES {
                    out.push(store.insert(format!("{prefix}.{kind}_{gate}"), make(rng), true)?);
                }
                Ok([out[0], out[1], out[2]])
            };
        let w = ids("w", &mut |r| fan_in_uniform(&[d_in, d_h], d_in, r))?;
        let u = ids("u", &mut |r| orthogonal(d_h, r))?;
        let b = ids("b", &mut |_| Tensor::zeros([d_h]))?;
        Ok(GruParams { w, u, b, d_in, d_h })
    }

    fn check<T: Real>(&self, g: &Graph<'_, T>, x: Var, h: Var) -> Result<()> {
        let (xs, hs) = (g.shape(x), g.shape(h));
        if xs.len() != 2 || xs[1] != self.d_in {
            return Err(Error::dim(
                "gru gates z, r, h (input weights)",
                format!("input {xs:?} does not have width {}", self.d_in),
            ));
        }
        if hs.len() != 2 || hs[1] != self.d_h || hs[0] != xs[0] {
            return Err(Error::dim(
                "gru gates z, r, h (recurrent weights)",
                format!(
                    "state {hs:?} does not match {} rows of width {}",
                    xs[0], self.d_h
                ),
            ));
        }
        Ok(())
    }

    /// One step on a batch of rows: `x` is `b × d_in`, `h_prev` is `b × d_h`.
    pub fn step<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, h_prev: Var) -> Result<Var> {
        self.check(g, x, h_prev)?;
        let proj = self.input_projections(g, x)?;
        self.recur(g, proj, h_prev, h_prev)
    }

    fn input_projections<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<[Var; 3]> {
        let mut out = [x; 3];
        for k in 0..3 {
            let w = g.param(self.w[k]);
            let b = g.param(self.b[k]);
            let xw = g.matmul(x, w)?;
            out[k] = g.add_bias(xw, b)?;
        }
        Ok(out)
    }

    /// Gates from precomputed input projections. `h_in` feeds the recurrent
    /// matrices (it may be a dropped-out copy of `h_prev`).
    fn recur<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        [xz, xr, xh]: [Var; 3],
        h_in: Var,
        h_prev: Var,
    ) -> Result<Var> {
        let [uz, ur, uh] = self.u.map(|id| g.param(id));
        let hz = g.matmul(h_in, uz)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let hr = g.matmul(h_in, ur)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let rh = g.mul(r, h_in)?;
        let hh = g.matmul(rh, uh)?;
        let cand = g.add(xh, hh)?;
        let cand = g.tanh(cand);
        let keep = g.one_minus(z);
        let old = g.mul(keep, h_prev)?;
        let new = g.mul(z, cand)?;
        g.add(old, new)
    }

    /// Runs the layer over a time-major `(s·b) × d_in` sequence (row
    /// `t·b + i` is step `t` of sentence `i`), in reverse when asked.
    /// Positions with a false mask keep the previous state.
    pub fn run<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        b: usize,
        s: usize,
        mask_tm: &[bool],
        reverse: bool,
        dropout: f64,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        let xs = g.shape(x).to_vec();
        if s == 0 || b == 0 {
            return Err(Error::Contract("gru over an empty sequence".into()));
        }
        if xs != [s * b, self.d_in] || mask_tm.len() != s * b {
            return Err(Error::dim(
                "gru gates z, r, h (input weights)",
                format!(
                    "sequence {xs:?} with mask of {} for {b}×{s} positions of width {}",
                    mask_tm.len(),
                    self.d_in
                ),
            ));
        }
        let x = g.dropout(x, dropout, pass.mode, pass.rng)?;
        let proj = self.input_projections(g, x)?;
        let mut h = g.constant(Tensor::zeros([b, self.d_h]));
        let mut outputs = vec![None; s];
        let order: Vec<usize> = if reverse {
            (0..s).rev().collect()
        } else {
            (0..s).collect()
        };
        for t in order {
            let rows: Vec<Option<usize>> = (t * b..(t + 1) * b).map(Some).collect();
            let mut step_proj = proj;
            for k in 0..3 {
                step_proj[k] = g.select_rows(proj[k], rows.clone())?;
            }
            let h_in = g.dropout(h, dropout, pass.mode, pass.rng)?;
            let next = self.recur(g, step_proj, h_in, h)?;
            let m = &mask_tm[t * b..(t + 1) * b];
            h = if m.iter().all(|&v| v) {
                next
            } else {
                let on: Vec<T> = m
                    .iter()
                    .flat_map(|&v| {
                        std::iter::repeat_n(if v { T::one() } else { T::zero() }, self.d_h)
                    })
                    .collect();
                let off: Vec<T> = on.iter().map(|&v| T::one() - v).collect();
                let a = g.mul_const(next, on)?;
                let c = g.mul_const(h, off)?;
                g.add(a, c)?
            };
            outputs[t] = Some(h);
        }
        let outputs: Vec<Var> = outputs
            .into_iter()
            .map(|v| v.expect("every step ran"))
            .collect();
        g.concat_rows(&outputs)
    }
}

/// Row permutation from sentence-major (`i·s + t`) to time-major (`t·b + i`).
pub fn to_time_major(b: usize, s: usize) -> Vec<Option<usize>> {
    (0..s)
        .flat_map(|t| (0..b).map(move |i| Some(i * s + t)))
        .collect()
}

/// Inverse of [`to_time_major`].
pub fn from_time_major(b: usize, s: usize) -> Vec<Option<usize>> {
    (0..b)
        .flat_map(|i| (0..s).map(move |t| Some(t * b + i)))
        .collect()
}

/// Stacked forward and backward GRUs: each direction runs all its layers
/// (layer `k+1` reads layer `k`'s states) and the two top layers are
/// concatenated once at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct BiGru {
    pub fwd: Vec<GruParams>,
    pub bwd: Vec<GruParams>,
    pub hidden: usize,
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<f32>,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut make = |dir: &str, rng: &mut R| -> Result<Vec<GruParams>> {
            (0..layers)
                .map(|l| {
                    let din = if l == 0 { d_in } else { hidden };
                    GruParams::new(store, &format!("{prefix}.{dir}{l}"), din, hidden, rng)
                })
                .collect()
        };
        let fwd = make("fwd", rng)?;
        let bwd = make("bwd", rng)?;
        Ok(BiGru { fwd, bwd, hidden })
    }

    pub fn out_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `x` is sentence-major `(b·s) × d_in`; so is the `(b·s) × 2h` result.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        b: usize,
        s: usize,
        mask: &[bool],
        dropout: f64,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        if b * s == 0 {
            return Err(Error::Contract("bi-gru over an empty sequence".into()));
        }
        if mask.len() != b * s {
            return Err(Error::dim(
                "bi-gru",
                format!("mask of {} for {b}×{s} positions", mask.len()),
            ));
        }
        let x_tm = g.select_rows(x, to_time_major(b, s))?;
        let mask_tm: Vec<bool> = to_time_major(b, s)
            .into_iter()
            .map(|r| mask[r.unwrap()])
            .collect();
        let mut tops = Vec::with_capacity(2);
        for (layers, reverse) in [(&self.fwd, false), (&self.bwd, true)] {
            let mut h = x_tm;
            for layer in layers {
                h = layer.run(g, h, b, s, &mask_tm, reverse, dropout, pass)?;
            }
            tops.push(h);
        }
        let both = g.concat_last(&tops)?;
        g.select_rows(both, from_time_major(b, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_invert() {
        let (b, s) = (3, 4);
        let to = to_time_major(b, s);
        let from = from_time_major(b, s);
        for (i, r) in from.iter().enumerate() {
            assert_eq!(to[r.unwrap()], Some(i));
        }
    }
}
