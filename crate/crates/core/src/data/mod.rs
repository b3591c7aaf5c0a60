//! Tag inventories, corpus ingestion, vocabularies and batch padding.

mod batch;
mod corpus;
mod tagset;
mod vocab;

pub use batch::{pad_batch, Batch, LabelScheme};
pub use corpus::{
    corpus_census, load_conll, parse_conll, write_conll, Census, Corpus, Sentence, Split, TaskTag,
    Token, Validation,
};
pub use tagset::{load_tagset, BuiltinTagset, TagSet, TagSource};
pub use vocab::{
    build_char_vocab, build_vocab, build_vocab_from, build_word_vocab, split_mwe, Vocab,
    MWE_SEPARATORS, PAD, UNK,
};
