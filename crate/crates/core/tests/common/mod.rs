#![allow(dead_code)]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semtag::config::HyperParams;
use semtag::data::{
    build_char_vocab, build_word_vocab, load_conll, load_tagset, Corpus, Sentence, Split, TagSet,
    TagSource, TaskTag, Validation,
};
use semtag::layers::EmbeddingTable;
use semtag::model::{build_model, Arch, ModelConfig, TaskSetup, TrainedModel};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn toy_tagset() -> TagSet {
    load_tagset(TagSource::File(&fixture("toy_tagset.txt"))).unwrap()
}

pub fn load(name: &str, tags: &TagSet) -> Corpus {
    load_conll(
        &fixture(name),
        tags,
        Validation::Strict,
        Split::Train,
        TaskTag::MainSt,
    )
    .unwrap()
}

/// Tiny dimensions for finite-difference checks (default geometry for the
/// convolutions, padded word length 8).
pub fn small_hyper() -> HyperParams {
    HyperParams {
        d_c: 6,
        d_w: 5,
        gru_hidden: 3,
        channels: (2, 3),
        padded_word_len: 8,
        batch_size: 4,
        ..HyperParams::default()
    }
}

pub fn two_sentences() -> Vec<Sentence> {
    vec![
        Sentence::from_pairs(
            &[
                ("Anna", "PER"),
                ("visits", "EXS"),
                ("New York", "GEO"),
                ("and", "AND"),
                ("Oslo", "GEO"),
            ],
            TaskTag::MainSt,
        ),
        Sentence::from_pairs(
            &[
                ("the", "DEF"),
                ("extraordinarily", "EXS"),
                ("Boris", "PER"),
                ("sees", "EXS"),
                ("this", "DEF"),
                ("Lima", "GEO"),
                ("and", "AND"),
                ("Kyiv", "GEO"),
            ],
            TaskTag::MainSt,
        ),
    ]
}

pub fn model_for(
    arch: Arch,
    use_aux: bool,
    hyper: HyperParams,
    corpus: &Corpus,
    tags: &TagSet,
    seed: u64,
) -> TrainedModel {
    let setup = TaskSetup::Single { tags: tags.clone() };
    let config = ModelConfig::new(arch, use_aux, &setup, hyper.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let words = arch
        .uses_words()
        .then(|| EmbeddingTable::random(build_word_vocab(corpus, 1), hyper.d_w, &mut rng));
    let chars = arch.uses_chars().then(|| build_char_vocab(corpus));
    build_model(config, setup, words, chars, seed).unwrap()
}

/// Brute-force most-frequent-class tagging: for each test token scan every
/// candidate tag in sorted order and count its occurrences with that surface.
pub fn brute_force_mfc(train: &Corpus, test: &Corpus) -> Vec<Vec<String>> {
    let tokens: Vec<(&str, &str)> = train
        .sentences
        .iter()
        .flat_map(|s| {
            s.tokens
                .iter()
                .map(|t| (t.surface.as_str(), t.tag.as_str()))
        })
        .collect();
    let mut tags: Vec<&str> = tokens.iter().map(|t| t.1).collect();
    tags.sort();
    tags.dedup();
    let best = |keep: &dyn Fn(&str) -> bool| -> Option<String> {
        let mut best: Option<(&str, usize)> = None;
        for &tag in &tags {
            let n = tokens.iter().filter(|(s, t)| keep(s) && *t == tag).count();
            if n > 0 && best.is_none_or(|(_, m)| n > m) {
                best = Some((tag, n));
            }
        }
        best.map(|(t, _)| t.to_string())
    };
    let global = best(&|_| true).unwrap();
    test.sentences
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .map(|t| best(&|w| w == t.surface).unwrap_or_else(|| global.clone()))
                .collect()
        })
        .collect()
}

/// Exact bootstrap p-value: the share of all `n^n` equally likely resamples
/// of the per-unit deltas whose sum is at most zero.
pub fn exhaustive_bootstrap_p(deltas: &[i64]) -> f64 {
    let n = deltas.len();
    let total = n.pow(n as u32);
    let mut hits = 0usize;
    for code in 0..total {
        let (mut c, mut sum) = (code, 0);
        for _ in 0..n {
            sum += deltas[c % n];
            c /= n;
        }
        hits += (sum <= 0) as usize;
    }
    hits as f64 / total as f64
}
