use std::time::Instant;

use reviewsense::pipeline::{feature_matrix, fit_product_embeddings, fit_review_vectors, labels};
use reviewsense::synth::{generate, SynthConfig};
use reviewsense::{run_cv, GruTrainConfig, PvConfig, PvMode, SvmConfig};

fn main() {
    let amb: f64 = std::env::args().nth(1).map_or(0.0, |s| s.parse().unwrap());
    let corpus = generate(&SynthConfig { ambiguous_fraction: amb, ..Default::default() });
    let t = Instant::now();
    let pv = fit_review_vectors(&corpus.reviews, &PvConfig::default(), PvMode::Dm).unwrap();
    println!("pv {:?}", t.elapsed());
    let y = labels(&corpus.reviews);
    let x = feature_matrix(&corpus.reviews, &pv.docs, None).unwrap();
    let r = run_cv(&x, &y, 10, 42, &SvmConfig::default()).unwrap();
    println!("pv-only {:?} {:?}", r.average, t.elapsed());
    let fit = fit_product_embeddings(&corpus.reviews, &pv.docs, &GruTrainConfig::default()).unwrap();
    println!("gru {:?} best {} {:?}", fit.gru.history, fit.gru.best_epoch, t.elapsed());
    let x2 = feature_matrix(&corpus.reviews, &pv.docs, Some(&fit.store)).unwrap();
    let r2 = run_cv(&x2, &y, 10, 42, &SvmConfig::default()).unwrap();
    println!("pv+prod {:?} {:?}", r2.average, t.elapsed());
}
