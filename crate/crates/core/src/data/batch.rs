//! Zero-padded, index-encoded batches.

use super::vocab::{Vocab, PAD};
use super::{Sentence, TagSet, TaskTag};
use crate::error::{Error, Result};

/// How token tags become per-head class indices.
#[derive(Clone, Copy, Debug)]
pub enum LabelScheme<'a> {
    /// One tagset; optionally its coarse level as the auxiliary target.
    Single { tags: &'a TagSet, coarse_aux: bool },
    /// Joint POS + semantic tagging: POS sentences label the main head (and
    /// the auxiliary head when they carry a secondary tag column), semantic
    /// tag sentences label only the auxiliary head.
    Joint { pos: &'a TagSet, st: &'a TagSet },
    /// No targets; tags are ignored.
    Unlabeled,
}

/// One padded batch, flattened row-major over `(sentence, position)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub word_len: usize,
    /// Word-embedding rows to sum per position; padding is `[0]`.
    pub words: Vec<Vec<usize>>,
    /// `batch_size × seq_len × word_len` character indices; padding is 0.
    pub chars: Vec<usize>,
    pub mask: Vec<bool>,
    pub main_labels: Vec<Option<usize>>,
    pub aux_labels: Vec<Option<usize>>,
    pub surfaces: Vec<String>,
    pub lengths: Vec<usize>,
    /// The common task marker, or `None` for a mixed batch.
    pub task: Option<TaskTag>,
}

impl Batch {
    pub fn positions(&self) -> usize {
        self.batch_size * self.seq_len
    }

    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Flat positions of real tokens in row-major order.
    pub fn real_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }
}

/// Pads `sentences` to the longest one and encodes words (multi-word tokens
/// as constituent bags), characters (truncated or padded to `word_len`),
/// the padding mask and both label streams.
pub fn pad_batch(
    sentences: &[&Sentence],
    words: Option<&Vocab>,
    chars: Option<&Vocab>,
    word_len: usize,
    labels: LabelScheme<'_>,
) -> Result<Batch> {
    if sentences.is_empty() {
        return Err(Error::Contract("cannot pad an empty batch".into()));
    }
    if let Some(s) = sentences.iter().find(|s| s.is_empty()) {
        return Err(Error::Contract(format!("empty sentence {}", s.source)));
    }
    let b = sentences.len();
    let s_len = sentences.iter().map(|s| s.len()).max().unwrap_or(0);
    let n = b * s_len;
    let mut batch = Batch {
        batch_size: b,
        seq_len: s_len,
        word_len,
        words: vec![vec![PAD]; n],
        chars: vec![PAD; if chars.is_some() { n * word_len } else { 0 }],
        mask: vec![false; n],
        main_labels: vec![None; n],
        aux_labels: vec![None; n],
        surfaces: vec![String::new(); n],
        lengths: sentences.iter().map(|s| s.len()).collect(),
        task: None,
    };
    let first = sentences[0].task;
    batch.task = sentences.iter().all(|s| s.task == first).then_some(first);

    for (bi, sent) in sentences.iter().enumerate() {
        for (t, tok) in sent.tokens.iter().enumerate() {
            let pos = bi * s_len + t;
            batch.mask[pos] = true;
            batch.surfaces[pos] = tok.surface.clone();
            if let Some(v) = words {
                batch.words[pos] = v.word_bag(&tok.surface);
            }
            if let Some(cv) = chars {
                batch.chars[pos * word_len..(pos + 1) * word_len]
                    .copy_from_slice(&cv.char_ids(&tok.surface, word_len));
            }
            let (main, aux) = encode_labels(sent.task, tok, labels)?;
            batch.main_labels[pos] = main;
            batch.aux_labels[pos] = aux;
        }
    }
    Ok(batch)
}

fn index(ts: &TagSet, tag: &str, surface: &str) -> Result<usize> {
    ts.fine_index(tag).ok_or_else(|| Error::UnknownTag {
        tag: tag.to_string(),
        context: Some(format!("token {surface:?}, tagset {}", ts.name())),
    })
}

fn encode_labels(
    task: TaskTag,
    tok: &super::Token,
    labels: LabelScheme<'_>,
) -> Result<(Option<usize>, Option<usize>)> {
    Ok(match labels {
        LabelScheme::Single { tags, coarse_aux } => {
            let fine = index(tags, &tok.tag, &tok.surface)?;
            (Some(fine), coarse_aux.then(|| tags.parent(fine)))
        }
        LabelScheme::Joint { pos, st } => match task {
            TaskTag::MainPos => {
                let main = index(pos, &tok.tag, &tok.surface)?;
                let aux = match &tok.aux_tag {
                    Some(a) => Some(index(st, a, &tok.surface)?),
                    None => None,
                };
                (Some(main), aux)
            }
            TaskTag::MainSt => (None, Some(index(st, &tok.tag, &tok.surface)?)),
        },
        LabelScheme::Unlabeled => (None, None),
    })
}
