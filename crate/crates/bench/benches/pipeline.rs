use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reviewsense::paravec;
use reviewsense::pipeline::tokenize;
use reviewsense::rnn_core::gru::sequence_loss_grads;
use reviewsense::rnn_core::{GruCell, OutputProjection};
use reviewsense::synth::{generate, SynthConfig};
use reviewsense::{preprocess, train_svm, PvConfig, PvMode, SentimentClass, SvmConfig};

fn bench_preprocess(c: &mut Criterion) {
    let text = "I'll say it: this is great!It works. See http://example.com/x for more, won't you?";
    c.bench_function("preprocess", |b| b.iter(|| preprocess(black_box(text))));
}

fn bench_pv(c: &mut Criterion) {
    let corpus = generate(&SynthConfig { reviews: 200, products: 10, ..Default::default() });
    let docs = tokenize(&corpus.reviews);
    let config = PvConfig { dim: 100, epochs: 1, ..PvConfig::default() };
    c.bench_function("pvdm_epoch_200_docs_dim100", |b| {
        b.iter(|| paravec::train(black_box(&docs), &config, PvMode::Dm).unwrap())
    });
    let model = paravec::train(&docs, &PvConfig { dim: 100, epochs: 5, ..PvConfig::default() }, PvMode::Dm)
        .unwrap()
        .model;
    c.bench_function("infer_vector_dim100", |b| b.iter(|| model.infer_vector(black_box(&docs[0])).unwrap()));
}

fn bench_gru(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cell = GruCell::random(300, 128, &mut rng);
    let proj = OutputProjection::random(128, 5, &mut rng);
    let xs: Vec<Array1<f64>> =
        (0..40).map(|_| Array1::from_shape_fn(300, |_| rng.gen_range(-0.1..0.1))).collect();
    let targets: Vec<usize> = (0..40).map(|i| i % 5).collect();
    c.bench_function("gru_grads_40_steps_300x128", |b| {
        b.iter(|| sequence_loss_grads(&cell, &proj, black_box(&xs), &targets).unwrap())
    });
}

fn bench_svm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 300;
    let labels: Vec<SentimentClass> = (0..n).map(|i| SentimentClass::from_index(i % 3).unwrap()).collect();
    let x = Array2::from_shape_fn((n, 50), |(i, j)| {
        rng.gen_range(-1.0..1.0) + if j == i % 3 { 2.0 } else { 0.0 }
    });
    c.bench_function("svm_rbf_300x50", |b| {
        b.iter_batched(|| x.clone(), |x| train_svm(&x, &labels, &SvmConfig::default()).unwrap(), BatchSize::LargeInput)
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_preprocess, bench_pv, bench_gru, bench_svm
}
criterion_main!(benches);
