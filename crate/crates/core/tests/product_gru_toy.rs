//! Product GRU on 20 products with product-correlated ratings.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reviewsense::product_embed::{build_store, TargetSpace};
use reviewsense::{build_sequences, extract_embedding, train_product_gru, GruTrainConfig, ProductSequence, Review};
use std::collections::HashMap;

const INPUT: usize = 12;

/// Each product has a base rating; review vectors carry a noisy one-hot of the rating.
fn toy() -> Vec<ProductSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut reviews = Vec::new();
    let mut vectors = HashMap::new();
    for p in 0..20u32 {
        let base = 1 + (p % 5) as u8;
        for k in 0..10u32 {
            let rating = if rng.gen_bool(0.8) { base } else { rng.gen_range(1..=5) };
            let mut v = Array1::from_shape_fn(INPUT, |_| rng.gen_range(-0.3..0.3));
            v[rating as usize - 1] += 1.0;
            vectors.insert(reviews.len(), v);
            reviews.push(Review {
                rating,
                product_id: format!("T{p:02}"),
                reviewer_id: String::new(),
                helpfulness: (0, 0),
                title: String::new(),
                review_time: 20150101 + k,
                review_text: String::new(),
            });
        }
    }
    build_sequences(&reviews, &vectors).unwrap()
}

fn config() -> GruTrainConfig {
    GruTrainConfig { hidden: 16, epochs: 8, seed: 5, ..GruTrainConfig::default() }
}

#[test]
fn training_loss_decreases() {
    let seqs = toy();
    assert_eq!(seqs.len(), 20);
    assert!(seqs.iter().all(|s| s.len() == 10));
    let fit = train_product_gru(&seqs, &config()).unwrap();
    let first = fit.history[0].train;
    let last = fit.history.last().unwrap().train;
    eprintln!("train loss {first:.4} -> {last:.4}");
    assert!(last < first);
    assert!(fit.history.iter().all(|e| e.train.is_finite() && e.validation.is_finite()));
    assert!(fit.best_epoch < fit.history.len());
}

#[test]
fn embeddings_have_hidden_dimension() {
    let seqs = toy();
    let fit = train_product_gru(&seqs, &config()).unwrap();
    let e = extract_embedding(&fit.model, &seqs[3]).unwrap();
    assert_eq!(e.len(), 16);
    assert!(e.iter().all(|x| x.is_finite() && x.abs() < 1.0));
    let store = build_store(&fit.model, &seqs).unwrap();
    assert_eq!(store.dim(), 16);
    assert_eq!(store.len(), 20);
    let (v, known) = store.get_or_zero("T03");
    assert!(known);
    for (a, b) in v.iter().zip(e.iter()) {
        assert!((*a as f64 - b).abs() < 1e-6);
    }
}

#[test]
fn three_class_targets_train() {
    let seqs = toy();
    let cfg = GruTrainConfig { target_space: TargetSpace::Classes3, ..config() };
    let fit = train_product_gru(&seqs, &cfg).unwrap();
    assert!(fit.history.last().unwrap().train < fit.history[0].train);
}
