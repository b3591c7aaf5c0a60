use rand::Rng;

use super::{Arch, ModelConfig};
use crate::config::BypassMode;
use crate::data::{Batch, PAD};
use crate::error::{Error, Result};
use crate::layers::init::fan_in_uniform;
use crate::layers::{
    char_image, BiGru, CharEncoder, CharEncoderConfig, Pass, ResidualBypass, RANDOM_INIT,
};
use crate::tensor::{Graph, ParamId, ParamStore, Real, Tensor, Var};

/// One softmax layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub w: ParamId,
    pub b: ParamId,
    pub classes: usize,
}

impl Head {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<f32>,
        name: &str,
        d: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Head {
            w: store.insert(
                format!("{name}.w"),
                fan_in_uniform(&[d, classes], d, rng),
                true,
            )?,
            b: store.insert(format!("{name}.b"), Tensor::zeros([classes]), true)?,
            classes,
        })
    }

    fn logits<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}

/// Parameter handles of an assembled tagger; the values live in a
/// [`ParamStore`], which may be `f32` for training or `f64` for checking.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub arch: Arch,
    pub word_table: Option<ParamId>,
    pub char_table: Option<ParamId>,
    pub encoder: Option<CharEncoder>,
    pub gru: BiGru,
    pub bypass: Option<ResidualBypass>,
    pub main_head: Head,
    pub aux_head: Option<Head>,
    pub dropout_rnn: f64,
    pub word_len: usize,
}

/// Logits over every padded position, shaped `b × s × classes`.
pub struct Logits {
    pub main: Var,
    pub aux: Option<Var>,
}

/// A scalar training objective and its unweighted per-head means.
pub struct LossParts {
    pub total: Var,
    pub main: Option<f64>,
    pub aux: Option<f64>,
}

impl Network {
    /// Registers every parameter in `store`. `words` is the initial word
    /// table; `n_chars` the character vocabulary size.
    pub(crate) fn build<R: Rng + ?Sized>(
        config: &ModelConfig,
        words: Option<Tensor<f32>>,
        n_chars: Option<usize>,
        store: &mut ParamStore<f32>,
        rng: &mut R,
    ) -> Result<Self> {
        let h = &config.hyper;
        let arch = config.arch;
        if arch.uses_words() != words.is_some() {
            return Err(Error::Config(format!(
                "architecture {arch} {} word embeddings",
                if arch.uses_words() {
                    "requires"
                } else {
                    "does not use"
                }
            )));
        }
        if arch.uses_chars() != n_chars.is_some() {
            return Err(Error::Config(format!(
                "architecture {arch} {} a character vocabulary",
                if arch.uses_chars() {
                    "requires"
                } else {
                    "does not use"
                }
            )));
        }
        let mut d_in = 0;
        let word_table = match words {
            Some(t) => {
                if t.shape().len() != 2 || t.shape()[1] != h.d_w {
                    return Err(Error::Config(format!(
                        "word embeddings {:?} do not have width d_w = {}",
                        t.shape(),
                        h.d_w
                    )));
                }
                d_in += h.d_w;
                Some(store.insert("word.embeddings", t, true)?)
            }
            None => None,
        };
        let bypass_add = arch.uses_bypass() && h.bypass_mode == BypassMode::Add;
        let char_out = if bypass_add { 2 * h.gru_hidden } else { h.d_c };
        let (char_table, encoder) = match (n_chars, arch.encoder()) {
            (Some(n), Some(kind)) => {
                let mut table =
                    crate::layers::init::uniform(&[n, h.d_c], -RANDOM_INIT, RANDOM_INIT, rng);
                table.data_mut()[PAD * h.d_c..(PAD + 1) * h.d_c].fill(0.0);
                let table = store.insert("char.embeddings", table, true)?;
                let enc_cfg = CharEncoderConfig {
                    kind,
                    word_len: h.padded_word_len,
                    d_c: h.d_c,
                    conv1: h.conv1,
                    conv2: h.conv2,
                    channels: h.channels,
                    out_dim: char_out,
                    dropout: h.dropout_cnn,
                };
                d_in += char_out;
                (
                    Some(table),
                    Some(CharEncoder::new(store, "char.encoder", enc_cfg, rng)?),
                )
            }
            _ => (None, None),
        };
        let gru = BiGru::new(store, "gru", d_in, h.gru_hidden, h.gru_layers, rng)?;
        let bypass = if arch.uses_bypass() {
            Some(ResidualBypass::new(
                store,
                "bypass",
                h.bypass_mode,
                gru.out_dim(),
                char_out,
                rng,
            )?)
        } else {
            None
        };
        let d_pen = bypass.as_ref().map_or(gru.out_dim(), |b| b.out_dim());
        let main_head = Head::new(store, "head.main", d_pen, config.main_tagset_size, rng)?;
        let aux_head = if config.use_aux {
            Some(Head::new(
                store,
                "head.aux",
                d_pen,
                config.aux_tagset_size,
                rng,
            )?)
        } else {
            None
        };
        Ok(Network {
            arch,
            word_table,
            char_table,
            encoder,
            gru,
            bypass,
            main_head,
            aux_head,
            dropout_rnn: h.dropout_rnn,
            word_len: h.padded_word_len,
        })
    }

    /// The same network with the bypass switched off and every parameter
    /// shared. Only meaningful in additive mode, where widths agree.
    pub fn without_bypass(&self) -> Result<Network> {
        match &self.bypass {
            Some(b) if b.mode == BypassMode::Concat => Err(Error::Config(
                "a concatenating bypass cannot be removed at equal parameters".into(),
            )),
            _ => Ok(Network {
                bypass: None,
                ..self.clone()
            }),
        }
    }

    /// The same network without the auxiliary head.
    pub fn without_aux(&self) -> Network {
        Network {
            aux_head: None,
            ..self.clone()
        }
    }

    /// Character representations of every padded position (`(b·s) × d`,
    /// zero rows at padding). The encoder only sees real tokens.
    pub fn char_reps<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &Batch,
        pass: &mut Pass<'_, T>,
    ) -> Result<Option<Var>> {
        let (Some(table), Some(enc)) = (self.char_table, &self.encoder) else {
            return Ok(None);
        };
        let wl = self.word_len;
        if batch.word_len != wl || batch.chars.len() != batch.positions() * wl {
            return Err(Error::Contract(format!(
                "architecture {} needs the character stream padded to {wl}",
                self.arch
            )));
        }
        let mut ids = Vec::with_capacity(batch.real_tokens() * wl);
        let mut rows = vec![None; batch.positions()];
        for (k, pos) in batch.real_positions().enumerate() {
            ids.extend_from_slice(&batch.chars[pos * wl..(pos + 1) * wl]);
            rows[pos] = Some(k);
        }
        let table = g.param(table);
        let images = char_image(g, table, &ids, wl)?;
        let reps = enc.encode(g, images, pass)?;
        Ok(Some(g.select_rows(reps, rows)?))
    }

    /// Penultimate representation, `(b·s) × d`.
    pub fn penultimate<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &Batch,
        pass: &mut Pass<'_, T>,
    ) -> Result<Var> {
        let (b, s) = (batch.batch_size, batch.seq_len);
        let mut parts = Vec::with_capacity(2);
        if let Some(table) = self.word_table {
            if batch.words.len() != batch.positions() {
                return Err(Error::Contract(format!(
                    "architecture {} needs the word stream",
                    self.arch
                )));
            }
            let t = g.param(table);
            parts.push(g.embedding_bag(t, batch.words.clone())?);
        }
        let chars = self.char_reps(g, batch, pass)?;
        parts.extend(chars);
        let x = if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_last(&parts)?
        };
        let penult = self
            .gru
            .forward(g, x, b, s, &batch.mask, self.dropout_rnn, pass)?;
        match (&self.bypass, chars) {
            (Some(bp), Some(c)) => bp.apply(g, penult, c),
            _ => Ok(penult),
        }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &Batch,
        pass: &mut Pass<'_, T>,
    ) -> Result<Logits> {
        let pen = self.penultimate(g, batch, pass)?;
        let shape = |n: usize| [batch.batch_size, batch.seq_len, n];
        let main = self.main_head.logits(g, pen)?;
        let main = g.reshape(main, shape(self.main_head.classes))?;
        let aux = match &self.aux_head {
            Some(h) => {
                let a = h.logits(g, pen)?;
                Some(g.reshape(a, shape(h.classes))?)
            }
            None => None,
        };
        Ok(Logits { main, aux })
    }

    /// `main_weight · mean CE(main) + aux_weight · mean CE(aux)`, each head
    /// contributing only when the batch labels it. A head without labels
    /// takes no part in the graph, so its parameters get no gradient.
    pub fn loss<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &Batch,
        pass: &mut Pass<'_, T>,
        main_weight: f64,
        aux_weight: f64,
    ) -> Result<LossParts> {
        let count = |labels: &[Option<usize>]| labels.iter().filter(|l| l.is_some()).count();
        let (n_main, n_aux) = (count(&batch.main_labels), count(&batch.aux_labels));
        let aux_head = match (&self.aux_head, n_aux) {
            (_, 0) => None,
            (Some(h), _) => Some(h),
            (None, _) => None,
        };
        if n_main == 0 && aux_head.is_none() {
            return Err(Error::Contract(
                "batch carries no labels for this model's heads".into(),
            ));
        }
        let pen = self.penultimate(g, batch, pass)?;
        let mut terms = Vec::new();
        let mut parts = (None, None);
        if n_main > 0 {
            let logits = self.main_head.logits(g, pen)?;
            let l = g.softmax_xent(logits, &batch.main_labels, T::of(1.0 / n_main as f64))?;
            parts.0 = Some(g.value(l).data()[0].as_f64());
            terms.push(g.scale(l, T::of(main_weight)));
        }
        if let Some(h) = aux_head {
            let logits = h.logits(g, pen)?;
            let l = g.softmax_xent(logits, &batch.aux_labels, T::of(1.0 / n_aux as f64))?;
            parts.1 = Some(g.value(l).data()[0].as_f64());
            terms.push(g.scale(l, T::of(aux_weight)));
        }
        let total = match terms[..] {
            [t] => t,
            [a, b] => g.add(a, b)?,
            _ => unreachable!("at least one head is active"),
        };
        Ok(LossParts {
            total,
            main: parts.0,
            aux: parts.1,
        })
    }
}
