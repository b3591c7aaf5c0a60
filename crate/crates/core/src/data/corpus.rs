//! Tab-separated token/tag corpora.
//!
//! One token per line as `surface<TAB>tag`, optionally followed by a third
//! column carrying a secondary tag (e.g. silver semantic tags on POS data).
//! A blank line ends a sentence. Surfaces may contain spaces: a
//! multi-word expression is a single token.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TagSet;
use crate::error::{Error, Result};

/// Which objective a sentence trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTag {
    MainSt,
    MainPos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    /// Reject any tag outside the inventory.
    #[default]
    Strict,
    /// Replace out-of-inventory tags by the tagset's fallback and record a
    /// warning.
    Lenient,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub tag: String,
    pub aux_tag: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, tag: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            tag: tag.into(),
            aux_tag: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub task: TaskTag,
    /// Where the sentence came from, e.g. `train.tsv:14`.
    pub source: String,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>, task: TaskTag) -> Self {
        Sentence {
            tokens,
            task,
            source: String::new(),
        }
    }

    /// Convenience constructor from `(surface, tag)` pairs.
    pub fn from_pairs(pairs: &[(&str, &str)], task: TaskTag) -> Self {
        Sentence::new(
            pairs.iter().map(|(s, t)| Token::new(*s, *t)).collect(),
            task,
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    pub fn tags(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.tag.clone()).collect()
    }
}

/// `(sentences, tokens, distinct tags)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Census {
    pub sentences: usize,
    pub tokens: usize,
    pub distinct_tags: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub split: Split,
    /// Lenient-mode substitutions, one message per replaced tag.
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>, split: Split) -> Self {
        Corpus {
            sentences,
            split,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn census(&self) -> Census {
        corpus_census(self)
    }

    /// Appends `other`'s sentences.
    pub fn extend(&mut self, other: Corpus) {
        self.sentences.extend(other.sentences);
        self.warnings.extend(other.warnings);
    }

    pub fn with_task(mut self, task: TaskTag) -> Self {
        for s in &mut self.sentences {
            s.task = task;
        }
        self
    }
}

/// Exact sentence, token and distinct-tag counts.
pub fn corpus_census(corpus: &Corpus) -> Census {
    let tags: BTreeSet<&str> = corpus
        .sentences
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.tag.as_str()))
        .collect();
    Census {
        sentences: corpus.sentences.len(),
        tokens: corpus.sentences.iter().map(Sentence::len).sum(),
        distinct_tags: tags.len(),
    }
}

pub fn load_conll(
    path: &Path,
    tagset: &TagSet,
    validation: Validation,
    split: Split,
    task: TaskTag,
) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(
        &text,
        &path.display().to_string(),
        tagset,
        validation,
        split,
        task,
    )
}

pub fn parse_conll(
    text: &str,
    origin: &str,
    tagset: &TagSet,
    validation: Validation,
    split: Split,
    task: TaskTag,
) -> Result<Corpus> {
    if text.trim().is_empty() {
        return Err(Error::Format {
            path: origin.to_string(),
            line: 0,
            detail: "empty corpus file".into(),
        });
    }
    let mut corpus = Corpus::new(Vec::new(), split);
    let mut tokens = Vec::new();
    let mut start = 1;
    let flush = |tokens: &mut Vec<Token>, start: usize, corpus: &mut Corpus| {
        if !tokens.is_empty() {
            corpus.sentences.push(Sentence {
                tokens: std::mem::take(tokens),
                task,
                source: format!("{origin}:{start}"),
            });
        }
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, start, &mut corpus);
            continue;
        }
        if tokens.is_empty() {
            start = line_no;
        }
        let mut cols = line.split('\t');
        let surface = cols.next().unwrap_or_default();
        let Some(tag) = cols.next() else {
            return Err(Error::Format {
                path: origin.to_string(),
                line: line_no,
                detail: format!("expected surface<TAB>tag, got {line:?}"),
            });
        };
        let aux = cols.next().map(str::trim).filter(|a| !a.is_empty());
        if surface.is_empty() {
            return Err(Error::Format {
                path: origin.to_string(),
                line: line_no,
                detail: "empty token surface".into(),
            });
        }
        let tag = tag.trim();
        let tag = if tagset.contains(tag) {
            tag.to_string()
        } else {
            match validation {
                Validation::Strict => {
                    return Err(Error::UnknownTag {
                        tag: tag.to_string(),
                        context: Some(format!("{origin}:{line_no}, tagset {}", tagset.name())),
                    })
                }
                Validation::Lenient => {
                    corpus.warnings.push(format!(
                        "{origin}:{line_no}: tag {tag:?} replaced by {:?}",
                        tagset.fallback()
                    ));
                    tagset.fallback().to_string()
                }
            }
        };
        tokens.push(Token {
            surface: surface.to_string(),
            tag,
            aux_tag: aux.map(str::to_string),
        });
    }
    flush(&mut tokens, start, &mut corpus);
    Ok(corpus)
}

/// Serializes sentences in the format read by [`parse_conll`].
pub fn write_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for t in &s.tokens {
            out.push_str(&t.surface);
            out.push('\t');
            out.push_str(&t.tag);
            if let Some(a) = &t.aux_tag {
                out.push('\t');
                out.push_str(a);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, v: Validation) -> Result<Corpus> {
        parse_conll(
            text,
            "t.tsv",
            &TagSet::semtag(),
            v,
            Split::Train,
            TaskTag::MainSt,
        )
    }

    #[test]
    fn two_sentences() {
        let c = parse(
            "These\tPRX\ncats\tCON\n\nUkraine\tGPE\n's\tHAS\nglory\tCON\n",
            Validation::Strict,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.sentences[0].len(), 2);
        assert_eq!(c.sentences[1].len(), 3);
        assert_eq!(c.sentences[1].source, "t.tsv:4");
    }

    #[test]
    fn multiword_surface_is_one_token() {
        let c = parse(
            "International Organization for Migration\tORG\n",
            Validation::Strict,
        )
        .unwrap();
        assert_eq!(
            c.sentences[0].tokens[0].surface,
            "International Organization for Migration"
        );
        assert_eq!(c.census().tokens, 1);
    }

    #[test]
    fn strict_rejects_unknown_tag_with_line() {
        let err = parse("a\tPRX\nb\tXYZ\n", Validation::Strict)
            .unwrap_err()
            .to_string();
        assert!(err.contains("XYZ") && err.contains("t.tsv:2"), "{err}");
    }

    #[test]
    fn lenient_substitutes_fallback() {
        let c = parse("a\tPRX\nb\tXYZ\n", Validation::Lenient).unwrap();
        assert_eq!(c.sentences[0].tokens[1].tag, "NIL");
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn malformed_and_empty_files() {
        match parse("a\tPRX\nno-tab-here\n", Validation::Strict) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse("\n\n", Validation::Strict).is_err());
    }

    #[test]
    fn census_of_one_sentence() {
        let c = parse(
            "These\tPRX\ncats\tCON\nlive\tENS\nhere\tCON\n",
            Validation::Strict,
        )
        .unwrap();
        assert_eq!(
            c.census(),
            Census {
                sentences: 1,
                tokens: 4,
                distinct_tags: 3
            }
        );
    }

    #[test]
    fn aux_column_round_trips() {
        let text = "dogs\tNOUN\tCON\nbark\tVERB\n";
        let c = parse_conll(
            text,
            "p",
            &TagSet::ud_pos(),
            Validation::Strict,
            Split::Train,
            TaskTag::MainPos,
        )
        .unwrap();
        assert_eq!(c.sentences[0].tokens[0].aux_tag.as_deref(), Some("CON"));
        assert_eq!(write_conll(&c.sentences), text);
    }
}
