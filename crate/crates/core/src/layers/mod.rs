//! Network building blocks over [`Graph`](crate::tensor::Graph): word and
//! character embeddings, the GRU stack, character CNN/ResNet encoders and the
//! residual bypass.

mod bypass;
mod cnn;
mod embedding;
mod gru;
pub mod init;

use rand_chacha::ChaCha8Rng;

use crate::tensor::{BatchStats, Mode, ParamId, ParamStore, Real};

pub use bypass::ResidualBypass;
pub use cnn::{char_image, CharEncoder, CharEncoderConfig, EncoderKind};
pub use embedding::{
    init_embeddings, parse_embeddings, EmbeddingSource, EmbeddingTable, RANDOM_INIT,
};
pub use gru::{from_time_major, to_time_major, BiGru, GruParams};

/// Batch-norm running-average momentum.
pub const BN_MOMENTUM: f64 = 0.9;

/// State threaded through one forward pass.
pub struct Pass<'r, T: Real> {
    pub mode: Mode,
    pub rng: &'r mut ChaCha8Rng,
    /// Batch statistics observed in training mode, to be folded into the
    /// running averages once the step is done.
    pub bn_updates: Vec<BnUpdate<T>>,
}

impl<'r, T: Real> Pass<'r, T> {
    pub fn new(mode: Mode, rng: &'r mut ChaCha8Rng) -> Self {
        Pass {
            mode,
            rng,
            bn_updates: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BnUpdate<T> {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats<T>,
}

/// `running ← momentum·running + (1 − momentum)·batch` for every update.
pub fn apply_bn_updates<T: Real, U: Real>(store: &mut ParamStore<U>, updates: &[BnUpdate<T>]) {
    let mom = U::of(BN_MOMENTUM);
    let rest = U::of(1.0 - BN_MOMENTUM);
    for u in updates {
        for (id, batch) in [(u.mean, &u.stats.mean), (u.var, &u.stats.var)] {
            for (r, &b) in store.get_mut(id).data_mut().iter_mut().zip(batch) {
                *r = mom * *r + rest * U::of(b.as_f64());
            }
        }
    }
}
