//! Kernel throughput. Benchmark ids do not depend on the backend; run once
//! per backend and compare through a saved baseline:
//!
//! ```text
//! cargo bench -p semtag-core --bench kernels -- --save-baseline parallel
//! cargo bench -p semtag-core --bench kernels --no-default-features -- --baseline parallel
//! ```

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semtag::data::{Sentence, TaskTag};
use semtag::tensor::{Graph, Padding, Tensor};

fn random(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [64, 256] {
        let (a, b) = (random(&[n, n], 1), random(&[n, n], 2));
        group.bench_with_input(BenchmarkId::new("forward+backward", n), &n, |bench, _| {
            bench.iter(|| {
                let mut g = Graph::<f32>::detached();
                let (x, y) = (g.input(a.clone()), g.input(b.clone()));
                let z = g.matmul(x, y).unwrap();
                let loss = g.sum(z);
                black_box(g.backward(loss).unwrap());
            })
        });
    }
    group.finish();
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    // One batch of padded words as character images.
    for words in [100, 500] {
        let x = random(&[words, 25, 64, 1], 3);
        let k = random(&[4, 8, 1, 8], 4);
        group.bench_with_input(
            BenchmarkId::new("forward+backward", words),
            &words,
            |bench, _| {
                bench.iter(|| {
                    let mut g = Graph::<f32>::detached();
                    let (xv, kv) = (g.input(x.clone()), g.input(k.clone()));
                    let y = g.conv2d(xv, kv, None, Padding::Same).unwrap();
                    let p = g.maxpool2d(y).unwrap();
                    let loss = g.sum(p);
                    black_box(g.backward(loss).unwrap());
                })
            },
        );
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    use semtag::config::HyperParams;
    use semtag::data::{build_char_vocab, build_word_vocab, Corpus, Split, TagSet};
    use semtag::layers::EmbeddingTable;
    use semtag::model::{build_model, Arch, ModelConfig, TaskSetup};
    use semtag::train::compute_step;

    let tags = TagSet::flat("toy", &["A", "B", "C", "D", "E"]).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let sentences: Vec<Sentence> = (0..50)
        .map(|_| {
            let len = r.random_range(5..20);
            let words: Vec<(String, &str)> = (0..len)
                .map(|_| {
                    let w: String = (0..r.random_range(2..10))
                        .map(|_| r.random_range('a'..='z'))
                        .collect();
                    (w, ["A", "B", "C", "D", "E"][r.random_range(0..5)])
                })
                .collect();
            let pairs: Vec<(&str, &str)> = words.iter().map(|(w, t)| (w.as_str(), *t)).collect();
            Sentence::from_pairs(&pairs, TaskTag::MainSt)
        })
        .collect();
    let corpus = Corpus::new(sentences, Split::Train);
    let setup = TaskSetup::Single { tags };
    let hyper = HyperParams::default();
    let config = ModelConfig::new(Arch::ResnetCbpW, true, &setup, hyper.clone()).unwrap();
    let words = EmbeddingTable::random(build_word_vocab(&corpus, 1), hyper.d_w, &mut r);
    let model = build_model(
        config,
        setup,
        Some(words),
        Some(build_char_vocab(&corpus)),
        1,
    )
    .unwrap();
    let refs: Vec<&Sentence> = corpus.sentences.iter().collect();
    let batch = model.batch(&refs, true).unwrap();

    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    group.bench_function("resnet_cbp_w+aux, 50 sentences", |bench| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        bench.iter(|| black_box(compute_step(&model, &batch, &mut rng).unwrap().loss))
    });
    group.finish();
}

criterion_group!(benches, matmul, conv, training_step);
criterion_main!(benches);
