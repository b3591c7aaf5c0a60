use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Corpus;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Characters that join the constituents of a multi-word token.
pub const MWE_SEPARATORS: &[char] = &[' ', '~'];

/// String→index map with padding at 0 and the unknown symbol at 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocab { items, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    /// Vocabulary over `items` in the given order, after the reserved slots.
    /// Duplicates keep their first position.
    pub fn from_items<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::from(vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]);
        for it in items {
            v.push(it.into());
        }
        v
    }

    fn push(&mut self, s: String) {
        if !self.index.contains_key(&s) {
            self.index.insert(s.clone(), self.items.len());
            self.items.push(s);
        }
    }

    /// Index of `s`, or [`UNK`].
    pub fn lookup(&self, s: &str) -> usize {
        self.index.get(s).copied().unwrap_or(UNK)
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn contains(&self, s: &str) -> bool {
        self.index.contains_key(s)
    }

    pub fn item(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.len() <= 2
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Rows summed to embed `token`: the token itself when known; otherwise,
    /// for a multi-word token, each constituent (unknown ones as [`UNK`]);
    /// otherwise [`UNK`].
    pub fn word_bag(&self, token: &str) -> Vec<usize> {
        if let Some(i) = self.get(token) {
            return vec![i];
        }
        let parts: Vec<&str> = split_mwe(token).collect();
        if parts.len() > 1 {
            parts.iter().map(|p| self.lookup(p)).collect()
        } else {
            vec![UNK]
        }
    }

    /// Character indices of `surface`, truncated or zero-padded to `len`.
    pub fn char_ids(&self, surface: &str, len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = surface
            .chars()
            .take(len)
            .map(|c| self.lookup(c.encode_utf8(&mut [0; 4])))
            .collect();
        ids.resize(len, PAD);
        ids
    }
}

pub fn split_mwe(token: &str) -> impl Iterator<Item = &str> {
    token.split(MWE_SEPARATORS).filter(|p| !p.is_empty())
}

/// Counts strings and indexes those seen at least `min_count` times by
/// descending frequency, ties in lexicographic order.
pub fn build_vocab_from<'a, I>(items: I, min_count: usize) -> Vocab
where
    I: IntoIterator<Item = &'a str>,
{
    let min_count = min_count.max(1);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in items {
        *counts.entry(s).or_default() += 1;
    }
    let mut entries: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab::from_items(entries.into_iter().map(|(s, _)| s))
}

/// Surface vocabulary of a corpus.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Vocab {
    build_vocab_from(
        corpus.sentences.iter().flat_map(|s| s.surfaces()),
        min_count,
    )
}

/// Word-embedding vocabulary: single-word surfaces plus the constituents of
/// multi-word tokens. Multi-word tokens never get rows of their own; they
/// are embedded as sums.
pub fn build_word_vocab(corpus: &Corpus, min_count: usize) -> Vocab {
    build_vocab_from(
        corpus
            .sentences
            .iter()
            .flat_map(|s| s.surfaces())
            .flat_map(split_mwe),
        min_count,
    )
}

/// Character vocabulary over every surface in the corpus.
pub fn build_char_vocab(corpus: &Corpus) -> Vocab {
    let chars: Vec<String> = corpus
        .sentences
        .iter()
        .flat_map(|s| s.surfaces())
        .flat_map(|w| w.chars())
        .map(String::from)
        .collect();
    build_vocab_from(chars.iter().map(String::as_str), 1)
}
