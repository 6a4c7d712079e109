//! Glue between the stages: corpus → paragraph vectors → product sequences →
//! embeddings → classifier features.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2};
use thiserror::Error;

use crate::classifier::{concat_features, SvmError};
use crate::ingest::{Review, SentimentClass};
use crate::paravec::{self, PvConfig, PvError, PvMode, PvModel};
use crate::preprocess::{preprocess, TokenSequence};
use crate::product_embed::{
    build_sequences, build_store, train_product_gru, EmbedError, EmbeddingStore, GruFit, GruTrainConfig,
    ProductSequence,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Pv(#[from] PvError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

pub fn tokenize(reviews: &[Review]) -> Vec<TokenSequence> {
    reviews.iter().map(|r| preprocess(&r.review_text)).collect()
}

pub fn labels(reviews: &[Review]) -> Vec<SentimentClass> {
    reviews.iter().map(Review::sentiment).collect()
}

/// Trains paragraph vectors over the corpus; row `i` of the model's document
/// matrix is the vector of review `i`.
pub fn fit_review_vectors(reviews: &[Review], config: &PvConfig, mode: PvMode) -> Result<PvModel, PipelineError> {
    Ok(paravec::train(&tokenize(reviews), config, mode)?.model)
}

pub fn vector_map(docs: &Array2<f64>) -> HashMap<usize, Array1<f64>> {
    docs.rows().into_iter().enumerate().map(|(i, r)| (i, r.to_owned())).collect()
}

pub struct ProductFit {
    pub sequences: Vec<ProductSequence>,
    pub gru: GruFit,
    pub store: EmbeddingStore,
}

/// Builds product sequences from the review vectors, trains the GRU and
/// extracts one embedding per product.
pub fn fit_product_embeddings(
    reviews: &[Review],
    docs: &Array2<f64>,
    config: &GruTrainConfig,
) -> Result<ProductFit, PipelineError> {
    let sequences = build_sequences(reviews, &vector_map(docs))?;
    let gru = train_product_gru(&sequences, config)?;
    let store = build_store(&gru.model, &sequences)?;
    Ok(ProductFit { sequences, gru, store })
}

/// Review vectors alone, or `review ⊕ product` rows when a store is given
/// (unknown products contribute zeros).
pub fn feature_matrix(
    reviews: &[Review],
    docs: &Array2<f64>,
    store: Option<&EmbeddingStore>,
) -> Result<Array2<f64>, PipelineError> {
    let Some(store) = store else {
        return Ok(docs.clone());
    };
    let mut x = Array2::zeros((reviews.len(), docs.ncols() + store.dim()));
    for (i, r) in reviews.iter().enumerate() {
        let (p, _) = store.get_or_zero(&r.product_id);
        let row = if docs.ncols() == crate::REVIEW_DIM && store.dim() == crate::PRODUCT_DIM {
            concat_features(docs.row(i).as_slice().expect("row-major"), p.as_slice().expect("contiguous"))?
        } else {
            docs.row(i).iter().chain(p.iter()).copied().collect()
        };
        x.slice_mut(s![i, ..]).assign(&row);
    }
    Ok(x)
}
