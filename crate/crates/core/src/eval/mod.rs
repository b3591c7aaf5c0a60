//! Token accuracy, the most-frequent-class baseline, bootstrap significance
//! and result reports.

mod report;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::par;

pub use report::{parse_report, render_machine, render_table, report, ReportRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// `gold → predicted → count` over fine tags.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Exact-match token accuracy of aligned tag sequences.
pub fn accuracy<S: AsRef<str>, G: AsRef<str>>(
    pred: &[Vec<S>],
    gold: &[Vec<G>],
) -> Result<EvalResult> {
    if pred.len() != gold.len() {
        return Err(Error::Contract(format!(
            "{} predicted sentences for {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let mut result = EvalResult {
        correct: 0,
        total: 0,
        accuracy: 0.0,
        confusion: BTreeMap::new(),
    };
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Contract(format!(
                "sentence {i}: {} predicted tags for {} gold tokens",
                p.len(),
                g.len()
            )));
        }
        for (p, g) in p.iter().zip(g) {
            let (p, g) = (p.as_ref(), g.as_ref());
            result.total += 1;
            result.correct += (p == g) as usize;
            *result
                .confusion
                .entry(g.to_string())
                .or_default()
                .entry(p.to_string())
                .or_default() += 1;
        }
    }
    if result.total == 0 {
        return Err(Error::Contract("no tokens to evaluate".into()));
    }
    result.accuracy = result.correct as f64 / result.total as f64;
    Ok(result)
}

/// Per-surface most frequent training tag, with the globally most frequent
/// tag for unseen surfaces. Ties go to the lexicographically smallest tag.
#[derive(Clone, Debug, PartialEq)]
pub struct MfcModel {
    pub by_surface: HashMap<String, String>,
    pub global: String,
}

fn majority(counts: &HashMap<&str, usize>) -> String {
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(t, _)| t.to_string())
        .expect("nonempty counts")
}

impl MfcModel {
    pub fn fit(train: &Corpus) -> Result<Self> {
        let mut per: HashMap<&str, HashMap<&str, usize>> = HashMap::new();
        let mut global: HashMap<&str, usize> = HashMap::new();
        for tok in train.sentences.iter().flat_map(|s| &s.tokens) {
            *per.entry(&tok.surface)
                .or_default()
                .entry(&tok.tag)
                .or_default() += 1;
            *global.entry(&tok.tag).or_default() += 1;
        }
        if global.is_empty() {
            return Err(Error::Contract(
                "baseline needs a nonempty training corpus".into(),
            ));
        }
        Ok(MfcModel {
            by_surface: per
                .iter()
                .map(|(w, c)| (w.to_string(), majority(c)))
                .collect(),
            global: majority(&global),
        })
    }

    pub fn tag(&self, surface: &str) -> &str {
        self.by_surface.get(surface).unwrap_or(&self.global)
    }
}

/// Most-frequent-class predictions for `test` and their accuracy.
pub fn mfc_baseline(train: &Corpus, test: &Corpus) -> Result<(Vec<Vec<String>>, EvalResult)> {
    let m = MfcModel::fit(train)?;
    let pred: Vec<Vec<String>> = test
        .sentences
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .map(|t| m.tag(&t.surface).to_string())
                .collect()
        })
        .collect();
    let gold: Vec<Vec<String>> = test.sentences.iter().map(|s| s.tags()).collect();
    let result = accuracy(&pred, &gold)?;
    Ok((pred, result))
}

/// What the bootstrap draws with replacement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResampleUnit {
    #[default]
    Sentence,
    Token,
}

pub const MIN_RESAMPLES: usize = 1000;
pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Per-unit differences `correct(A) − correct(B)`.
pub fn unit_deltas<S: AsRef<str>>(
    pred_a: &[Vec<S>],
    pred_b: &[Vec<S>],
    gold: &[Vec<S>],
    unit: ResampleUnit,
) -> Result<Vec<i64>> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return Err(Error::Contract(format!(
            "system outputs have {} and {} sentences for {} gold sentences",
            pred_a.len(),
            pred_b.len(),
            gold.len()
        )));
    }
    let mut out = Vec::new();
    for (i, ((a, b), g)) in pred_a.iter().zip(pred_b).zip(gold).enumerate() {
        if a.len() != g.len() || b.len() != g.len() {
            return Err(Error::Contract(format!(
                "sentence {i}: {} and {} predicted tags for {} gold tokens",
                a.len(),
                b.len(),
                g.len()
            )));
        }
        let per_token = a.iter().zip(b).zip(g).map(|((a, b), g)| {
            (a.as_ref() == g.as_ref()) as i64 - (b.as_ref() == g.as_ref()) as i64
        });
        match unit {
            ResampleUnit::Sentence => out.push(per_token.sum()),
            ResampleUnit::Token => out.extend(per_token),
        }
    }
    if out.is_empty() {
        return Err(Error::Contract("no units to resample".into()));
    }
    Ok(out)
}

/// One-sided bootstrap test of "A is more accurate than B": the fraction of
/// resamples in which A's accuracy minus B's is `≤ 0`. Resample `i` draws
/// from its own ChaCha8 stream `i` under `seed`, so the result is the same
/// with or without parallelism.
pub fn bootstrap_significance<S: AsRef<str>>(
    pred_a: &[Vec<S>],
    pred_b: &[Vec<S>],
    gold: &[Vec<S>],
    n_resamples: usize,
    seed: u64,
    unit: ResampleUnit,
) -> Result<f64> {
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::Parameter {
            name: "resamples",
            detail: format!("{n_resamples} is below the minimum of {MIN_RESAMPLES}"),
        });
    }
    let deltas = unit_deltas(pred_a, pred_b, gold, unit)?;
    Ok(bootstrap_p(&deltas, n_resamples, seed))
}

/// The resampling core over precomputed per-unit deltas.
pub fn bootstrap_p(deltas: &[i64], n_resamples: usize, seed: u64) -> f64 {
    let n = deltas.len();
    let not_better = par::map(n_resamples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let s: i64 = (0..n).map(|_| deltas[rng.random_range(0..n)]).sum();
        (s <= 0) as usize
    });
    not_better.iter().sum::<usize>() as f64 / n_resamples as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sentence, Split, TaskTag};

    fn v(s: &[&[&str]]) -> Vec<Vec<String>> {
        s.iter()
            .map(|r| r.iter().map(|t| t.to_string()).collect())
            .collect()
    }

    #[test]
    fn accuracy_counts_and_errors() {
        let gold = v(&[&["A", "B", "C", "D", "E"], &["A", "B", "C", "D", "E"]]);
        let pred = v(&[&["A", "B", "C", "X", "X"], &["A", "B", "C", "D", "X"]]);
        let r = accuracy(&pred, &gold).unwrap();
        assert_eq!((r.correct, r.total), (7, 10));
        assert_eq!(r.accuracy, 0.7);
        assert_eq!(r.confusion["E"]["X"], 2);
        let total: usize = r.confusion.values().flat_map(|m| m.values()).sum();
        assert_eq!(total, 10);
        let short = v(&[&["A"], &["A"]]);
        let err = accuracy(&short, &gold).unwrap_err().to_string();
        assert!(err.contains("sentence 0"), "{err}");
    }

    #[test]
    fn mfc_majority_and_ties() {
        let train = Corpus::new(
            vec![
                Sentence::from_pairs(
                    &[("a", "X"), ("a", "X"), ("a", "Y"), ("a", "X")],
                    TaskTag::MainSt,
                ),
                Sentence::from_pairs(&[("b", "Z"), ("b", "Y"), ("c", "Y")], TaskTag::MainSt),
            ],
            Split::Train,
        );
        let m = MfcModel::fit(&train).unwrap();
        assert_eq!(m.tag("a"), "X");
        assert_eq!(m.tag("b"), "Y");
        // X and Y both occur 3 times overall.
        assert_eq!(m.tag("zzz"), "X");
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        let gold = v(&[&["A", "B"], &["C"], &["D", "E"]]);
        let wrong = v(&[&["x", "x"], &["x"], &["x", "x"]]);
        let p =
            bootstrap_significance(&gold, &gold, &gold, 1000, 1, ResampleUnit::Sentence).unwrap();
        assert_eq!(p, 1.0);
        let p =
            bootstrap_significance(&gold, &wrong, &gold, 1000, 1, ResampleUnit::Sentence).unwrap();
        assert_eq!(p, 0.0);
        assert!(
            bootstrap_significance(&gold, &wrong, &gold, 999, 1, ResampleUnit::Sentence).is_err()
        );
    }
}
