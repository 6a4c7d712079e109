//! Sentiment analysis of product reviews with review/rating mismatch detection.
//!
//! The pipeline:
//!
//! 1. [`ingest`] parses review records and maps star ratings to sentiment classes.
//! 2. [`preprocess`] normalizes and tokenizes review text.
//! 3. [`paravec`] learns 300-dimensional paragraph vectors for reviews (PV-DM).
//! 4. [`product_embed`] orders each product's reviews in time and trains a GRU
//!    over them; the final hidden state is the 128-dimensional product embedding.
//! 5. [`classifier`] trains a one-vs-rest RBF SVM on the 428-dimensional
//!    concatenation of review and product vectors.
//! 6. [`evaluate`] runs k-fold cross-validation with macro precision/recall.
//!
//! [`rnn_core`] holds the recurrent numerics (plain RNN with BPTT, GRU, Adam)
//! and [`synth`] generates seeded synthetic corpora for experiments.

pub mod classifier;
pub mod evaluate;
pub mod ingest;
pub mod io;
pub mod paravec;
pub mod pipeline;
pub mod preprocess;
pub mod product_embed;
pub mod rnn_core;
pub mod synth;

pub use classifier::{concat_features, train_svm, Kernel, KernelSpec, SvmConfig, SvmModel};
pub use evaluate::{kfold_split, metrics, run_cv, CvReport, FoldReport, Metrics};
pub use ingest::{label_from_rating, parse_review, rating_histogram, Review, SentimentClass};
pub use paravec::{PvConfig, PvMode, PvModel, Vocabulary};
pub use preprocess::{preprocess, TokenSequence};
pub use product_embed::{
    build_sequences, extract_embedding, train_product_gru, EmbeddingStore, GruModel, GruTrainConfig,
    ProductSequence,
};

/// Dimensionality of a review (paragraph) vector.
pub const REVIEW_DIM: usize = 300;
/// Dimensionality of a product embedding (GRU hidden size).
pub const PRODUCT_DIM: usize = 128;
/// Dimensionality of the classifier input: review vector followed by product embedding.
pub const FEATURE_DIM: usize = REVIEW_DIM + PRODUCT_DIM;
