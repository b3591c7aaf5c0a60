use rand::Rng;

use super::init::fan_in_uniform;
use crate::config::BypassMode;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Real, Var};

/// Joins character representations into the penultimate layer, skipping the
/// recurrent trunk.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBypass {
    pub mode: BypassMode,
    /// Projection to the penultimate width; absent when the widths agree or
    /// in concatenation mode.
    pub proj: Option<ParamId>,
    pub d_p: usize,
    pub d_b: usize,
}

impl ResidualBypass {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<f32>,
        prefix: &str,
        mode: BypassMode,
        d_p: usize,
        d_b: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let proj = if mode == BypassMode::Add && d_b != d_p {
            Some(store.insert(
                format!("{prefix}.proj"),
                fan_in_uniform(&[d_b, d_p], d_b, rng),
                true,
            )?)
        } else {
            None
        };
        Ok(ResidualBypass {
            mode,
            proj,
            d_p,
            d_b,
        })
    }

    /// Width of the combined representation.
    pub fn out_dim(&self) -> usize {
        match self.mode {
            BypassMode::Add => self.d_p,
            BypassMode::Concat => self.d_p + self.d_b,
        }
    }

    /// `penult + P(chars)` (or their concatenation), row by row.
    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, penult: Var, chars: Var) -> Result<Var> {
        let (ps, cs) = (g.shape(penult).to_vec(), g.shape(chars).to_vec());
        if ps.len() != 2 || cs.len() != 2 || ps[0] != cs[0] {
            return Err(Error::dim(
                "residual bypass",
                format!("penultimate {ps:?} and bypassed {cs:?} differ in sequence length"),
            ));
        }
        if ps[1] != self.d_p || cs[1] != self.d_b {
            return Err(Error::dim(
                "residual bypass",
                format!(
                    "expected widths {} and {}, got {ps:?} and {cs:?}",
                    self.d_p, self.d_b
                ),
            ));
        }
        match self.mode {
            BypassMode::Add => {
                let c = match self.proj {
                    Some(p) => {
                        let w = g.param(p);
                        g.matmul(chars, w)?
                    }
                    None => chars,
                };
                g.add(penult, c)
            }
            BypassMode::Concat => g.concat_last(&[penult, chars]),
        }
    }
}
