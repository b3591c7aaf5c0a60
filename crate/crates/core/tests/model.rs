mod common;

use common::{load, model_for, small_hyper, toy_tagset, two_sentences};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semtag::data::{Corpus, Sentence, Split, TaskTag, Vocab};
use semtag::layers::{EmbeddingTable, Pass};
use semtag::model::{
    build_model, load_model, save_model, Arch, ModelConfig, TaskSetup, TrainedModel, FORMAT_VERSION,
};
use semtag::tensor::{grad_check, GradCheckOptions, Graph, Mode, Tensor};
use semtag::{Error, LoadError};

fn corpus() -> Corpus {
    let tags = toy_tagset();
    let mut c = load("overfit.tsv", &tags);
    c.extend(Corpus::new(two_sentences(), Split::Train));
    c
}

fn model(arch: Arch, aux: bool) -> TrainedModel {
    model_for(arch, aux, small_hyper(), &corpus(), &toy_tagset(), 17)
}

fn sentence(words: &[&str]) -> Sentence {
    Sentence::from_pairs(
        &words.iter().map(|w| (*w, "PER")).collect::<Vec<_>>(),
        TaskTag::MainSt,
    )
}

/// 50 sentences mixing known words, unknown words, long words and
/// multi-word tokens.
fn probe() -> Vec<Sentence> {
    let words = [
        "Anna",
        "visits",
        "Oslo",
        "and",
        "the",
        "New York",
        "zebra",
        "Quetzalcoatlus-northropi",
        "sees",
        "Lima~Peru",
        "this",
        "Kyiv",
        "é",
        "Boris",
    ];
    (0..50)
        .map(|i| {
            let len = 1 + (i * 7) % 9;
            sentence(
                &(0..len)
                    .map(|k| words[(i * 3 + k * 5) % words.len()])
                    .collect::<Vec<_>>(),
            )
        })
        .collect()
}

/// Every coordinate of every architecture agrees with central differences
/// at one of three step sizes. Large steps straddle relu and max-pool kinks;
/// small steps drown gradients below ~1e-6 in the loss's rounding error, so
/// no single step certifies all coordinates.
#[test]
fn full_models_agree_with_central_differences_over_a_step_ladder() {
    let sentences = two_sentences();
    let corpus = Corpus::new(sentences.clone(), Split::Train);
    let refs: Vec<&Sentence> = sentences.iter().collect();
    for (i, arch) in Arch::ALL.into_iter().enumerate() {
        let m = model_for(
            arch,
            true,
            small_hyper(),
            &corpus,
            &toy_tagset(),
            30 + i as u64,
        );
        let batch = m.batch(&refs, true).unwrap();
        let store = m.params.cast::<f64>();
        let reports: Vec<_> = [1e-4, 1e-5, 1e-6]
            .into_iter()
            .map(|h| {
                let f = |g: &mut Graph<'_, f64>| {
                    let mut r = ChaCha8Rng::seed_from_u64(i as u64);
                    let mut pass = Pass::new(Mode::Train, &mut r);
                    Ok(m.net.loss(g, &batch, &mut pass, 1.0, 0.1)?.total)
                };
                grad_check(
                    &store,
                    f,
                    &GradCheckOptions {
                        h,
                        ..Default::default()
                    },
                )
                .unwrap()
            })
            .collect();
        for k in 0..reports[0].checked {
            let ok = reports.iter().any(|r| {
                let c = r.coords[k];
                (c.analytic - c.numeric).abs()
                    <= 1e-4 * c.analytic.abs().max(c.numeric.abs()) + 1e-11
            });
            let c = reports[0].coords[k];
            assert!(
                ok,
                "{arch}: {}[{}] {:?}",
                store.name(c.param),
                c.index,
                reports
                    .iter()
                    .map(|r| r.coords[k].numeric)
                    .collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn census_of_bigru_w_matches_closed_form() {
    let tags = toy_tagset();
    let setup = TaskSetup::Single { tags: tags.clone() };
    let hyper = semtag::config::HyperParams::default();
    let config = ModelConfig::new(Arch::BigruW, false, &setup, hyper.clone()).unwrap();
    let vocab = Vocab::from_items((0..8).map(|i| format!("w{i}")));
    assert_eq!(vocab.len(), 10);
    let table = EmbeddingTable::random(vocab, 64, &mut ChaCha8Rng::seed_from_u64(0));
    let m = build_model(config, setup, Some(table), None, 1).unwrap();
    let (d, h, n) = (64, 100, 5);
    let gru_layer = |d_in: usize| 3 * (d_in * h + h * h + h);
    let expected = 10 * d + 2 * (gru_layer(d) + gru_layer(h)) + (2 * h * n + n);
    assert_eq!(expected, 640 + 2 * (49_500 + 60_300) + 1005);
    assert_eq!(m.census(), expected);
}

#[test]
fn aux_models_have_two_heads_and_same_seed_same_parameters() {
    let a = model(Arch::ResnetCbpW, true);
    assert!(a.net.aux_head.is_some());
    assert_eq!(a.net.aux_head.as_ref().unwrap().classes, 3);
    assert_eq!(a.net.main_head.classes, 5);
    assert!(model(Arch::ResnetCbpW, false).net.aux_head.is_none());
    assert_eq!(a.params, model(Arch::ResnetCbpW, true).params);
    let other = model_for(
        Arch::ResnetCbpW,
        true,
        small_hyper(),
        &corpus(),
        &toy_tagset(),
        18,
    );
    assert_ne!(a.params, other.params);
}

#[test]
fn arch_and_embedding_mismatch_is_a_config_error() {
    let tags = toy_tagset();
    let setup = TaskSetup::Single { tags };
    let config = ModelConfig::new(Arch::CnnC, false, &setup, small_hyper()).unwrap();
    let table = EmbeddingTable::random(
        Vocab::from_items(["a"]),
        5,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let err = build_model(
        config.clone(),
        setup.clone(),
        Some(table),
        Some(Vocab::from_items(["a"])),
        0,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let config = ModelConfig {
        arch: Arch::BigruW,
        ..config
    };
    assert!(matches!(
        build_model(config, setup, None, None, 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn shapes_identical_rows_and_permutation_equivariance() {
    for arch in Arch::ALL {
        let m = model(arch, true);
        let single = m.batch(&[&sentence(&["Anna"])], false).unwrap();
        let (main, aux) = m.logits(&single).unwrap();
        assert_eq!(main.shape(), [1, 1, 5]);
        assert_eq!(aux.unwrap().shape(), [1, 1, 3]);

        let p = probe();
        let (a, b, c) = (&p[3], &p[8], &p[11]);
        let batch = m.batch(&[a, b, a, c], false).unwrap();
        let (main, _) = m.logits(&batch).unwrap();
        let s = batch.seq_len;
        for t in 0..a.len() {
            assert_eq!(main.row(t), main.row(2 * s + t), "{arch}");
        }
        let permuted = m.batch(&[c, a, b, a], false).unwrap();
        let (pm, _) = m.logits(&permuted).unwrap();
        for (from, to) in [(0usize, 1usize), (1, 2), (3, 0)] {
            let len = [a, b, a, c][from].len();
            for t in 0..len {
                assert_eq!(main.row(from * s + t), pm.row(to * s + t), "{arch}");
            }
        }
    }
}

#[test]
fn eval_forward_is_pure_and_aux_head_is_read_only() {
    let m = model(Arch::ResnetCbpW, true);
    let p = probe();
    let refs: Vec<&Sentence> = p.iter().take(6).collect();
    let batch = m.batch(&refs, false).unwrap();
    let (a, _) = m.logits(&batch).unwrap();
    let (b, _) = m.logits(&batch).unwrap();
    assert_eq!(a, b);
    let mut no_aux = m.clone();
    no_aux.net = m.net.without_aux();
    let (c, aux) = no_aux.logits(&batch).unwrap();
    assert!(aux.is_none());
    assert_eq!(a, c);
}

#[test]
fn zero_bypassed_signal_reproduces_the_plain_model() {
    for arch in [
        Arch::CnnCbp,
        Arch::CnnCbpW,
        Arch::ResnetCbp,
        Arch::ResnetCbpW,
    ] {
        let mut m = model(arch, true);
        let enc = m.net.encoder.clone().unwrap();
        m.params.get_mut(enc.dense_w).data_mut().fill(0.0);
        m.params.get_mut(enc.dense_b).data_mut().fill(0.0);
        let mut plain = m.clone();
        plain.net = m.net.without_bypass().unwrap();
        let p = probe();
        let refs: Vec<&Sentence> = p.iter().take(8).collect();
        let batch = m.batch(&refs, false).unwrap();
        assert_eq!(
            m.logits(&batch).unwrap(),
            plain.logits(&batch).unwrap(),
            "{arch}"
        );
    }
}

#[test]
fn predict_returns_one_tag_per_token() {
    let m = model(Arch::CnnCbpW, false);
    let names = m.setup.main_tags().fine_tags().to_vec();
    for s in probe() {
        let tags = m.predict(&s.surfaces().collect::<Vec<_>>()).unwrap();
        assert_eq!(tags.len(), s.len());
        assert!(tags.iter().all(|t| names.contains(t)));
    }
    assert!(matches!(m.predict(&[]), Err(Error::Contract(_))));
}

#[test]
fn save_load_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for arch in Arch::ALL {
        let m = model(arch, arch == Arch::ResnetCbpW);
        let path = dir.path().join(format!("{arch}.stnm"));
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let p = probe();
        assert_eq!(
            back.predict_sentences(&p).unwrap(),
            m.predict_sentences(&p).unwrap()
        );
        for s in p.chunks(10) {
            let refs: Vec<&Sentence> = s.iter().collect();
            let batch = m.batch(&refs, false).unwrap();
            let bits = |t: Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(
                bits(back.logits(&batch).unwrap().0),
                bits(m.logits(&batch).unwrap().0)
            );
        }
    }
}

#[test]
fn damaged_files_are_rejected_whole() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.stnm");
    let m = model(Arch::CnnC, false);
    save_model(&m, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::Load(LoadError::Checksum { .. }))
    ));

    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    std::fs::write(&path, &flipped).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::Load(LoadError::Checksum { .. }))
    ));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    std::fs::write(&path, &magic).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::Load(LoadError::BadMagic))
    ));

    let mut versioned = bytes[..bytes.len() - 4].to_vec();
    versioned[4..6].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let crc = crc32fast::hash(&versioned);
    versioned.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(&path, &versioned).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::Load(LoadError::Version { found, .. })) if found == FORMAT_VERSION + 1
    ));

    std::fs::write(&path, &bytes[..2]).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::Load(LoadError::Truncated))
    ));
}

#[test]
fn main_only_model_refuses_aux_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.stnm");
    save_model(&model(Arch::CnnCbp, false), &path).unwrap();
    let m = load_model(&path).unwrap();
    let err = m.predict_aux(&probe()[..2]).unwrap_err();
    assert!(
        matches!(err, Error::Load(LoadError::Capability(_))),
        "{err}"
    );
    assert_eq!(
        model(Arch::CnnCbp, true)
            .predict_aux(&probe()[..2])
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn missing_input_streams_are_contract_errors() {
    let m = model(Arch::CnnCbpW, false);
    let s = sentence(&["Anna", "sees"]);
    let mut batch = m.batch(&[&s], false).unwrap();
    batch.chars.clear();
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new(&m.params);
    let res = m
        .net
        .forward(&mut g, &batch, &mut Pass::new(Mode::Eval, &mut r));
    assert!(matches!(res, Err(Error::Contract(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_shapes_follow_batch_and_heads(arch_ix in 0usize..8, aux: bool, b in 1usize..4, lens in proptest::collection::vec(1usize..6, 3)) {
        let arch = Arch::ALL[arch_ix];
        let m = model(arch, aux);
        let p = probe();
        let sents: Vec<Sentence> = (0..b).map(|i| {
            let all: Vec<&str> = p[i].surfaces().collect();
            let words: Vec<&str> = all.iter().copied().cycle().take(lens[i]).collect();
            sentence(&words)
        }).collect();
        let refs: Vec<&Sentence> = sents.iter().collect();
        let batch = m.batch(&refs, false).unwrap();
        let s = *lens[..b].iter().max().unwrap();
        let (main, aux_logits) = m.logits(&batch).unwrap();
        prop_assert_eq!(main.shape(), &[b, s, 5]);
        prop_assert_eq!(aux_logits.map(|t| t.shape().to_vec()), aux.then(|| vec![b, s, 3]));
    }
}
