//! The tagger: architecture variants, parameter assembly, prediction and the
//! on-disk container.

mod arch;
mod container;
mod network;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::data::{pad_batch, Batch, LabelScheme, Sentence, TagSet, TaskTag, Token, Vocab};
use crate::error::{Error, LoadError, Result};
use crate::layers::{EmbeddingTable, Pass};
use crate::tensor::{Graph, Mode, ParamStore, Tensor};

pub use arch::Arch;
pub use container::{load_model, save_model, FORMAT_VERSION, MAGIC};
pub use network::{Head, Logits, LossParts, Network};

/// What the heads predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TaskSetup {
    /// One tagset; the auxiliary head, if any, predicts its coarse level.
    Single { tags: TagSet },
    /// Joint POS + semantic tagging: the main head predicts POS, the
    /// auxiliary head semantic tags.
    Joint { pos: TagSet, st: TagSet },
}

impl TaskSetup {
    pub fn main_tags(&self) -> &TagSet {
        match self {
            TaskSetup::Single { tags } => tags,
            TaskSetup::Joint { pos, .. } => pos,
        }
    }

    /// Class names of the auxiliary head.
    pub fn aux_classes(&self) -> &[String] {
        match self {
            TaskSetup::Single { tags } => tags.coarse_tags(),
            TaskSetup::Joint { st, .. } => st.fine_tags(),
        }
    }

    pub fn label_scheme(&self, use_aux: bool) -> LabelScheme<'_> {
        match self {
            TaskSetup::Single { tags } => LabelScheme::Single {
                tags,
                coarse_aux: use_aux,
            },
            TaskSetup::Joint { pos, st } => LabelScheme::Joint { pos, st },
        }
    }

    pub fn is_joint(&self) -> bool {
        matches!(self, TaskSetup::Joint { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub use_aux: bool,
    pub main_tagset_size: usize,
    pub aux_tagset_size: usize,
    pub hyper: HyperParams,
}

impl ModelConfig {
    pub fn new(arch: Arch, use_aux: bool, setup: &TaskSetup, hyper: HyperParams) -> Result<Self> {
        let c = ModelConfig {
            arch,
            use_aux,
            main_tagset_size: setup.main_tags().fine_tags().len(),
            aux_tagset_size: if use_aux {
                setup.aux_classes().len()
            } else {
                0
            },
            hyper,
        };
        c.validate()?;
        if setup.is_joint() && !use_aux {
            return Err(Error::Config(
                "joint POS + semantic tagging needs the auxiliary head".into(),
            ));
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.main_tagset_size < 2 {
            return Err(Error::Config(format!(
                "main tagset has {} tags; at least 2 are needed",
                self.main_tagset_size
            )));
        }
        if self.use_aux && self.aux_tagset_size < 2 {
            return Err(Error::Config(format!(
                "auxiliary head needs at least 2 classes, got {}",
                self.aux_tagset_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_dev_loss: Option<f64>,
}

/// A tagger with its parameters and everything needed to encode input and
/// decode output.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub setup: TaskSetup,
    pub words: Option<Vocab>,
    pub chars: Option<Vocab>,
    pub params: ParamStore<f32>,
    pub net: Network,
    pub seed: u64,
    pub training: TrainingMeta,
    /// Effective settings of the run that produced the model, as `key = value`
    /// pairs; informational only.
    pub run_config: BTreeMap<String, String>,
}

/// Assembles an untrained model. Word embeddings must be given exactly when
/// the architecture reads words, and a character vocabulary exactly when it
/// reads characters. Initialization is a function of `seed` alone.
pub fn build_model(
    config: ModelConfig,
    setup: TaskSetup,
    embeddings: Option<EmbeddingTable>,
    chars: Option<Vocab>,
    seed: u64,
) -> Result<TrainedModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let (words, matrix) = match embeddings {
        Some(t) => (Some(t.vocab), Some(t.matrix)),
        None => (None, None),
    };
    let net = Network::build(
        &config,
        matrix,
        chars.as_ref().map(Vocab::len),
        &mut params,
        &mut rng,
    )?;
    Ok(TrainedModel {
        config,
        setup,
        words,
        chars,
        params,
        net,
        seed,
        training: TrainingMeta::default(),
        run_config: BTreeMap::new(),
    })
}

impl TrainedModel {
    /// Trainable scalar count.
    pub fn census(&self) -> usize {
        self.params.census()
    }

    pub fn label_scheme(&self) -> LabelScheme<'_> {
        self.setup.label_scheme(self.config.use_aux)
    }

    /// Pads sentences into a batch for this model, with or without targets.
    pub fn batch(&self, sentences: &[&Sentence], labeled: bool) -> Result<Batch> {
        let scheme = if labeled {
            self.label_scheme()
        } else {
            LabelScheme::Unlabeled
        };
        pad_batch(
            sentences,
            self.words.as_ref(),
            self.chars.as_ref(),
            self.config.hyper.padded_word_len,
            scheme,
        )
    }

    /// Evaluation-mode logits for a batch, `b × s × classes` per head.
    pub fn logits(&self, batch: &Batch) -> Result<(Tensor<f32>, Option<Tensor<f32>>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pass = Pass::new(Mode::Eval, &mut rng);
        let mut g = Graph::new(&self.params);
        let out = self.net.forward(&mut g, batch, &mut pass)?;
        Ok((
            g.value(out.main).clone(),
            out.aux.map(|a| g.value(a).clone()),
        ))
    }

    /// Main-head tag sequences, one per sentence.
    pub fn predict_sentences(&self, sentences: &[Sentence]) -> Result<Vec<Vec<String>>> {
        self.decode(sentences, false)
    }

    /// Auxiliary-head tag sequences; a capability error for main-only models.
    pub fn predict_aux(&self, sentences: &[Sentence]) -> Result<Vec<Vec<String>>> {
        if self.net.aux_head.is_none() {
            return Err(LoadError::Capability("this model has no auxiliary head").into());
        }
        self.decode(sentences, true)
    }

    /// Tags for one tokenized sentence.
    pub fn predict(&self, tokens: &[&str]) -> Result<Vec<String>> {
        if tokens.is_empty() {
            return Err(Error::Contract("cannot tag an empty sentence".into()));
        }
        let s = Sentence::new(
            tokens.iter().map(|t| Token::new(*t, "")).collect(),
            TaskTag::MainSt,
        );
        Ok(self.predict_sentences(&[s])?.remove(0))
    }

    fn decode(&self, sentences: &[Sentence], aux: bool) -> Result<Vec<Vec<String>>> {
        if let Some(s) = sentences.iter().find(|s| s.is_empty()) {
            return Err(Error::Contract(format!(
                "cannot tag an empty sentence {}",
                s.source
            )));
        }
        let names: &[String] = if aux {
            self.setup.aux_classes()
        } else {
            self.setup.main_tags().fine_tags()
        };
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(self.config.hyper.batch_size) {
            let refs: Vec<&Sentence> = chunk.iter().collect();
            let batch = self.batch(&refs, false)?;
            let (main, aux_logits) = self.logits(&batch)?;
            let logits = if aux {
                aux_logits.expect("aux head checked")
            } else {
                main
            };
            let c = logits.last_dim();
            for (i, sent) in chunk.iter().enumerate() {
                let tags = (0..sent.len())
                    .map(|t| names[argmax(logits.row(i * batch.seq_len + t))].clone())
                    .collect();
                out.push(tags);
            }
            debug_assert_eq!(c, names.len());
        }
        Ok(out)
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
