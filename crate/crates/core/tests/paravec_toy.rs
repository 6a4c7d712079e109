//! Paragraph vectors on a two-sentiment toy corpus with disjoint vocabularies.

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reviewsense::paravec::{train, PvConfig, PvMode};
use reviewsense::TokenSequence;

const GOOD: &[&str] = &["good", "great", "love", "excellent", "happy", "nice", "perfect", "fine"];
const BAD: &[&str] = &["bad", "awful", "hate", "poor", "broken", "sad", "worst", "junk"];
const SHARED: &[&str] = &["the", "it", "was", "this", "product", "and", "a", "is"];

fn corpus(n: usize, seed: u64) -> (Vec<TokenSequence>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(n);
    let mut good = Vec::with_capacity(n);
    for i in 0..n {
        let is_good = i % 2 == 0;
        let lex = if is_good { GOOD } else { BAD };
        let len = rng.gen_range(40..46);
        let words = (0..len)
            .map(|_| {
                let pool = if rng.gen_bool(0.5) { lex } else { SHARED };
                pool.choose(&mut rng).unwrap().to_string()
            })
            .collect();
        docs.push(TokenSequence(words));
        good.push(is_good);
    }
    (docs, good)
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

fn config() -> PvConfig {
    PvConfig { dim: 50, epochs: 15, seed: 3, ..PvConfig::default() }
}

fn class_similarity(d: &ndarray::Array2<f64>, good: &[bool]) -> (f64, f64) {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..good.len() {
        for j in i + 1..good.len() {
            let c = cosine(d.row(i), d.row(j));
            if good[i] == good[j] {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    (intra / ni as f64, inter / nx as f64)
}

#[test]
fn dm_separates_sentiment() {
    let (docs, good) = corpus(200, 7);
    let fit = train(&docs, &config(), PvMode::Dm).unwrap();
    assert_eq!(fit.model.docs.nrows(), 200);
    assert_eq!(fit.model.dim(), 50);
    let (intra, inter) = class_similarity(&fit.model.docs, &good);
    eprintln!("dm intra {intra:.4} inter {inter:.4}");
    assert!(intra > inter, "intra {intra} inter {inter}");
    let first = fit.epoch_losses[0];
    let last = *fit.epoch_losses.last().unwrap();
    assert!(last <= first, "loss {first} -> {last}");
}

#[test]
fn dbow_separates_and_loss_decreases() {
    let (docs, good) = corpus(200, 7);
    let fit = train(&docs, &config(), PvMode::Dbow).unwrap();
    assert_eq!(fit.model.words.len(), 0);
    let (intra, inter) = class_similarity(&fit.model.docs, &good);
    eprintln!("dbow intra {intra:.4} inter {inter:.4}");
    assert!(intra > inter);
    assert!(fit.epoch_losses.last().unwrap() < &fit.epoch_losses[0]);
}

#[test]
fn reinferred_training_documents_stay_close() {
    let (docs, _) = corpus(200, 7);
    let fit = train(&docs, &config(), PvMode::Dm).unwrap();
    let before = fit.model.clone();
    let sims: Vec<f64> = docs
        .iter()
        .take(40)
        .enumerate()
        .map(|(i, d)| {
            let v: Array1<f64> = fit.model.infer_vector(d).unwrap();
            cosine(v.view(), fit.model.docs.row(i))
        })
        .collect();
    let mean = sims.iter().sum::<f64>() / sims.len() as f64;
    eprintln!("mean re-infer cosine {mean:.4}");
    assert!(mean >= 0.6, "mean cosine {mean}");
    assert_eq!(fit.model.words, before.words);
    assert_eq!(fit.model.docs, before.docs);
    assert_eq!(fit.model.output, before.output);
}
