use std::collections::HashSet;
use std::path::Path;

use rand::Rng;

use super::init::uniform;
use crate::data::{Vocab, PAD};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Random embedding rows are drawn from `[-RANDOM_INIT, RANDOM_INIT)`.
pub const RANDOM_INIT: f64 = 0.05;

/// Vocabulary plus one row per entry; row [`PAD`] is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vocab,
    pub matrix: Tensor<f32>,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocab, matrix: Tensor<f32>) -> Result<Self> {
        if matrix.shape().len() != 2 || matrix.shape()[0] != vocab.len() {
            return Err(Error::dim(
                "embedding table",
                format!(
                    "{} vocabulary entries but matrix {:?}",
                    vocab.len(),
                    matrix.shape()
                ),
            ));
        }
        let mut t = EmbeddingTable { vocab, matrix };
        t.zero_pad_row();
        Ok(t)
    }

    /// Rows uniform in `[-0.05, 0.05)`, padding row zeroed.
    pub fn random<R: Rng + ?Sized>(vocab: Vocab, dim: usize, rng: &mut R) -> Self {
        let matrix = uniform(&[vocab.len(), dim], -RANDOM_INIT, RANDOM_INIT, rng);
        let mut t = EmbeddingTable { vocab, matrix };
        t.zero_pad_row();
        t
    }

    fn zero_pad_row(&mut self) {
        let d = self.dim();
        self.matrix.data_mut()[PAD * d..(PAD + 1) * d].fill(0.0);
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.matrix.row(i)
    }

    /// Exact row of a known token; otherwise the sum of constituent rows for
    /// a multi-word token; otherwise the unknown row.
    pub fn embed_word(&self, token: &str) -> Vec<f32> {
        let mut out = vec![0.0; self.dim()];
        for ix in self.vocab.word_bag(token) {
            out.iter_mut().zip(self.row(ix)).for_each(|(o, v)| *o += v);
        }
        out
    }
}

/// Where initial word vectors come from.
#[derive(Clone, Copy, Debug)]
pub enum EmbeddingSource<'p> {
    Random,
    /// Text file: optional `<count> <dim>` header, then `token v1 … vd` lines.
    Pretrained(&'p Path),
}

/// Embedding table over `base` (and, for pretrained vectors, every token the
/// file adds). Pretrained rows are copied verbatim; all other rows are random.
pub fn init_embeddings<R: Rng + ?Sized>(
    source: EmbeddingSource<'_>,
    base: &Vocab,
    dim: usize,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    match source {
        EmbeddingSource::Random => Ok(EmbeddingTable::random(base.clone(), dim, rng)),
        EmbeddingSource::Pretrained(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let vectors = parse_embeddings(&text, &path.display().to_string(), dim)?;
            Ok(merge_pretrained(base, vectors, dim, rng))
        }
    }
}

/// Parses the text format, checking every row has `dim` values.
pub fn parse_embeddings(text: &str, origin: &str, dim: usize) -> Result<Vec<(String, Vec<f32>)>> {
    let fmt_err = |line: usize, detail: String| Error::Format {
        path: origin.to_string(),
        line,
        detail,
    };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let header_dim: usize = fields[1].parse().unwrap_or(0);
            if header_dim != dim {
                return Err(fmt_err(
                    lineno,
                    format!("header declares dimension {header_dim}, expected {dim}"),
                ));
            }
            continue;
        }
        let (token, values) = fields.split_first().expect("nonempty line");
        if values.len() != dim {
            return Err(fmt_err(
                lineno,
                format!(
                    "vector for {token:?} has {} values, expected {dim}",
                    values.len()
                ),
            ));
        }
        let vec = values
            .iter()
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| fmt_err(lineno, format!("bad value for {token:?}: {e}")))?;
        if seen.insert(token.to_string()) {
            out.push((token.to_string(), vec));
        }
    }
    Ok(out)
}

fn merge_pretrained<R: Rng + ?Sized>(
    base: &Vocab,
    vectors: Vec<(String, Vec<f32>)>,
    dim: usize,
    rng: &mut R,
) -> EmbeddingTable {
    let vocab = Vocab::from_items(
        base.items()[2..]
            .iter()
            .cloned()
            .chain(vectors.iter().map(|(t, _)| t.clone())),
    );
    let mut table = EmbeddingTable::random(vocab, dim, rng);
    for (token, v) in vectors {
        let ix = table.vocab.lookup(&token);
        if ix == PAD {
            continue;
        }
        table.matrix.data_mut()[ix * dim..(ix + 1) * dim].copy_from_slice(&v);
    }
    table.zero_pad_row();
    table
}
