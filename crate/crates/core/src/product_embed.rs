//! Product embeddings from temporally ordered review sequences.
//!
//! Reviews are grouped by product and sorted by review time. A GRU reads each
//! product's review vectors step by step, predicting the rating at every step
//! through a time-distributed softmax. Hidden state starts from zero at every
//! sequence boundary. The final hidden state `h_T` is the product embedding.
//!
//! Embedding store file (text, UTF-8):
//!
//! ```text
//! PRODEMB v1 dim=128 count=N
//! <product_id>\t<v1> <v2> ... <v128>
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Review;
use crate::io::{invalid, read_f64s, read_header, read_len, write_f64s, write_header, write_len};
use crate::rnn_core::gru::{gru_hidden_states, sequence_loss_grads};
use crate::rnn_core::ops::dropout_mask;
use crate::rnn_core::{
    gru_sequence, AdamConfig, AdamState, DropoutMode, GruCell, OutputProjection, ParamSet, RnnError,
};

const MODEL_MAGIC: &[u8; 8] = b"RSGRUMDL";
const MODEL_VERSION: u8 = 1;
const STORE_MAGIC: &str = "PRODEMB";
const STORE_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("review {0} has no vector")]
    MissingVector(usize),
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no training sequences")]
    EmptyTrainingSet,
    #[error("sequence is empty")]
    EmptySequence,
    #[error("training loss became non-finite in epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("malformed embedding store: {0}")]
    Format(String),
    #[error(transparent)]
    Rnn(#[from] RnnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceStep {
    /// Index of the review in the corpus it came from.
    pub review_id: usize,
    pub vector: Vec<f64>,
    pub rating: u8,
    /// `YYYYMMDD`
    pub review_time: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSequence {
    pub product_id: String,
    pub steps: Vec<SequenceStep>,
}

impl ProductSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn inputs(&self) -> Vec<Array1<f64>> {
        self.steps.iter().map(|s| Array1::from(s.vector.clone())).collect()
    }
}

/// Groups reviews by product (in order of first appearance) and sorts each
/// group by review time, keeping corpus order for equal times. `vectors` is
/// keyed by corpus index; all vectors must share one dimension.
pub fn build_sequences(
    reviews: &[Review],
    vectors: &HashMap<usize, Array1<f64>>,
) -> Result<Vec<ProductSequence>, EmbedError> {
    let mut dim = None;
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<SequenceStep>> = HashMap::new();
    for (id, review) in reviews.iter().enumerate() {
        let v = vectors.get(&id).ok_or(EmbedError::MissingVector(id))?;
        let expected = *dim.get_or_insert(v.len());
        if v.len() != expected {
            return Err(EmbedError::DimensionMismatch { expected, got: v.len() });
        }
        let group = groups.entry(review.product_id.as_str()).or_insert_with(|| {
            order.push(review.product_id.as_str());
            Vec::new()
        });
        group.push(SequenceStep {
            review_id: id,
            vector: v.to_vec(),
            rating: review.rating,
            review_time: review.review_time,
        });
    }
    Ok(order
        .into_iter()
        .map(|pid| {
            let mut steps = groups.remove(pid).expect("grouped above");
            steps.sort_by_key(|s| s.review_time);
            ProductSequence { product_id: pid.to_string(), steps }
        })
        .collect())
}

pub fn write_sequences_jsonl<W: Write>(w: &mut W, seqs: &[ProductSequence]) -> io::Result<()> {
    for s in seqs {
        serde_json::to_writer(&mut *w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sequences_jsonl<R: BufRead>(r: R) -> io::Result<Vec<ProductSequence>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: ProductSequence = serde_json::from_str(&line)
            .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
        out.push(seq);
    }
    Ok(out)
}

/// Per-step target of the GRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpace {
    /// The five star ratings.
    Ratings5,
    /// Negative / Neutral / Positive.
    Classes3,
}

impl TargetSpace {
    pub fn classes(self) -> usize {
        match self {
            TargetSpace::Ratings5 => 5,
            TargetSpace::Classes3 => 3,
        }
    }

    pub fn target(self, rating: u8) -> Result<usize, EmbedError> {
        let class = crate::ingest::label_from_rating(rating)
            .map_err(|e| EmbedError::BadConfig(e.to_string()))?;
        Ok(match self {
            TargetSpace::Ratings5 => rating as usize - 1,
            TargetSpace::Classes3 => class.index(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruTrainConfig {
    pub hidden: usize,
    /// Inverted-dropout rate on the step inputs.
    pub dropout: f64,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub target_space: TargetSpace,
    /// Training keeps only the most recent `max_steps` reviews of a sequence.
    pub max_steps: usize,
    pub adam: AdamConfig,
}

impl Default for GruTrainConfig {
    fn default() -> Self {
        Self {
            hidden: crate::PRODUCT_DIM,
            dropout: 0.25,
            epochs: 10,
            validation_fraction: 0.1,
            seed: 42,
            target_space: TargetSpace::Ratings5,
            max_steps: 256,
            adam: AdamConfig::default(),
        }
    }
}

impl GruTrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::BadConfig(m.to_string()));
        if self.hidden == 0 {
            return bad("hidden size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in (0, 1)");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    pub cell: GruCell,
    pub projection: OutputProjection,
    pub target_space: TargetSpace,
}

struct Trainable<'a> {
    cell: &'a mut GruCell,
    projection: &'a mut OutputProjection,
}

impl GruModel {
    pub fn random(input: usize, hidden: usize, target_space: TargetSpace, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            cell: GruCell::random(input, hidden, &mut rng),
            projection: OutputProjection::random(hidden, target_space.classes(), &mut rng),
            target_space,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.cell.hidden_dim()
    }

    fn params_mut(&mut self) -> Trainable<'_> {
        Trainable { cell: &mut self.cell, projection: &mut self.projection }
    }

    /// Hidden traces of several sequences read as one stream, with the state
    /// reset to zero whenever a new sequence starts.
    pub fn stream_hidden_states(
        &self,
        sequences: &[ProductSequence],
    ) -> Result<Vec<Vec<Array1<f64>>>, EmbedError> {
        let mut traces = Vec::with_capacity(sequences.len());
        let mut h = Array1::zeros(self.hidden_dim());
        for seq in sequences {
            if seq.is_empty() {
                return Err(EmbedError::EmptySequence);
            }
            h.fill(0.0);
            let mut trace = Vec::with_capacity(seq.len());
            for step in &seq.steps {
                h = self.cell.step(&Array1::from(step.vector.clone()), &h)?;
                trace.push(h.clone());
            }
            traces.push(trace);
        }
        Ok(traces)
    }

    /// Mean per-step cross-entropy with dropout off.
    pub fn mean_loss(&self, sequences: &[&ProductSequence], max_steps: usize) -> Result<f64, EmbedError> {
        let mut total = 0.0;
        let mut steps = 0usize;
        for seq in sequences {
            let (xs, targets) = truncated(seq, max_steps, self.target_space)?;
            let out = gru_sequence(&self.cell, &self.projection, &xs)?;
            for (d, &t) in out.distributions.iter().zip(&targets) {
                total += crate::rnn_core::cross_entropy(d, t)?;
            }
            steps += xs.len();
        }
        Ok(if steps == 0 { 0.0 } else { total / steps as f64 })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write_header(w, MODEL_MAGIC, MODEL_VERSION)?;
        w.write_u8(match self.target_space {
            TargetSpace::Ratings5 => 5,
            TargetSpace::Classes3 => 3,
        })?;
        write_len(w, self.input_dim())?;
        write_len(w, self.hidden_dim())?;
        for s in self.cell.param_slices().into_iter().chain(self.projection.param_slices()) {
            write_f64s(w, s)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let version = read_header(r, MODEL_MAGIC)?;
        if version != MODEL_VERSION {
            return Err(invalid(format!("unsupported GRU model version {version}")));
        }
        let target_space = match r.read_u8()? {
            5 => TargetSpace::Ratings5,
            3 => TargetSpace::Classes3,
            other => return Err(invalid(format!("unknown target space {other}"))),
        };
        let input = read_len(r)?;
        let hidden = read_len(r)?;
        let mut model = Self {
            cell: GruCell::zeros(input, hidden),
            projection: OutputProjection::zeros(hidden, target_space.classes()),
            target_space,
        };
        let t = model.params_mut();
        for dst in t.cell.param_slices_mut().into_iter().chain(t.projection.param_slices_mut()) {
            let src = read_f64s(r)?;
            if src.len() != dst.len() {
                return Err(invalid("GRU parameter array has the wrong length"));
            }
            dst.copy_from_slice(&src);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        Self::read_from(&mut io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn truncated(
    seq: &ProductSequence,
    max_steps: usize,
    space: TargetSpace,
) -> Result<(Vec<Array1<f64>>, Vec<usize>), EmbedError> {
    if seq.is_empty() {
        return Err(EmbedError::EmptySequence);
    }
    let start = seq.len().saturating_sub(max_steps);
    let steps = &seq.steps[start..];
    let xs = steps.iter().map(|s| Array1::from(s.vector.clone())).collect();
    let targets = steps.iter().map(|s| space.target(s.rating)).collect::<Result<_, _>>()?;
    Ok((xs, targets))
}

/// FNV-1a over the seed and product id; a stable hash for the validation split.
fn split_hash(seed: u64, product_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(product_id.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Splits sequence indices into (train, validation). Sequences are ordered by
/// the seeded product-id hash and the last `fraction` of them validate. At
/// least one sequence stays on each side when there are two or more.
pub fn validation_split(sequences: &[ProductSequence], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n = sequences.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (split_hash(seed, &sequences[i].product_id), i));
    let n_val = if n < 2 { 0 } else { ((n as f64 * fraction).round() as usize).clamp(1, n - 1) };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// Mean per-step cross-entropy over training sequences (dropout on).
    pub train: f64,
    /// Mean per-step cross-entropy over validation sequences (dropout off).
    /// Equal to the dropout-off training loss when there is no validation set.
    pub validation: f64,
}

#[derive(Debug, Clone)]
pub struct GruFit {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: GruModel,
    pub history: Vec<EpochLoss>,
    /// Zero-based index of the epoch `model` was taken from.
    pub best_epoch: usize,
}

pub fn train_product_gru(
    sequences: &[ProductSequence],
    config: &GruTrainConfig,
) -> Result<GruFit, EmbedError> {
    config.validate()?;
    let first = sequences
        .iter()
        .find(|s| !s.is_empty())
        .ok_or(EmbedError::EmptyTrainingSet)?;
    let input = first.steps[0].vector.len();
    for seq in sequences {
        if seq.is_empty() {
            return Err(EmbedError::EmptySequence);
        }
        for s in &seq.steps {
            if s.vector.len() != input {
                return Err(EmbedError::DimensionMismatch { expected: input, got: s.vector.len() });
            }
        }
    }

    let (train_idx, val_idx) = validation_split(sequences, config.validation_fraction, config.seed);
    let train_set: Vec<&ProductSequence> = train_idx.iter().map(|&i| &sequences[i]).collect();
    let val_set: Vec<&ProductSequence> = val_idx.iter().map(|&i| &sequences[i]).collect();
    let prepared: Vec<(Vec<Array1<f64>>, Vec<usize>)> = train_set
        .iter()
        .map(|s| truncated(s, config.max_steps, config.target_space))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = GruModel {
        cell: GruCell::random(input, config.hidden, &mut rng),
        projection: OutputProjection::random(config.hidden, config.target_space.classes(), &mut rng),
        target_space: config.target_space,
    };
    let mut adam = AdamState::new(config.adam);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GruModel)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for &i in &order {
            let (xs, targets) = &prepared[i];
            let dropped: Vec<Array1<f64>> = xs
                .iter()
                .map(|x| Ok(x * &dropout_mask(x.len(), config.dropout, DropoutMode::Train, &mut rng)?))
                .collect::<Result<_, RnnError>>()?;
            let g = sequence_loss_grads(&model.cell, &model.projection, &dropped, targets)?;
            if !g.loss.is_finite() {
                return Err(EmbedError::NonFiniteLoss(epoch));
            }
            total += g.loss;
            steps += xs.len();
            let grads: Vec<&[f64]> =
                g.cell.param_slices().into_iter().chain(g.projection.param_slices()).collect();
            let t = model.params_mut();
            let mut params: Vec<&mut [f64]> =
                t.cell.param_slices_mut().into_iter().chain(t.projection.param_slices_mut()).collect();
            adam.update(&mut params, &grads)?;
        }
        let train = total / steps as f64;
        let validation = if val_set.is_empty() {
            model.mean_loss(&train_set, config.max_steps)?
        } else {
            model.mean_loss(&val_set, config.max_steps)?
        };
        if !train.is_finite() || !validation.is_finite() {
            return Err(EmbedError::NonFiniteLoss(epoch));
        }
        history.push(EpochLoss { train, validation });
        if best.as_ref().is_none_or(|(loss, _, _)| validation < *loss) {
            best = Some((validation, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(GruFit { model, history, best_epoch })
}

/// Final hidden state after reading the whole sequence from `h_0 = 0`, dropout off.
pub fn extract_embedding(model: &GruModel, sequence: &ProductSequence) -> Result<Array1<f64>, EmbedError> {
    if sequence.is_empty() {
        return Err(EmbedError::EmptySequence);
    }
    let hs = gru_hidden_states(&model.cell, &sequence.inputs())?;
    Ok(hs.into_iter().last().expect("non-empty"))
}

/// Product id → embedding, stored in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, product_id: &str, v: &[f64]) -> Result<(), EmbedError> {
        if product_id.is_empty() || product_id.contains(['\t', '\n', '\r']) {
            return Err(EmbedError::Format(format!("unusable product id {product_id:?}")));
        }
        if v.len() != self.dim {
            return Err(EmbedError::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Format(format!("non-finite embedding for {product_id}")));
        }
        self.entries.insert(product_id.to_string(), v.iter().map(|&x| x as f32).collect());
        Ok(())
    }

    pub fn contains(&self, product_id: &str) -> bool {
        self.entries.contains_key(product_id)
    }

    pub fn get(&self, product_id: &str) -> Option<Array1<f64>> {
        self.entries
            .get(product_id)
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
    }

    /// The stored vector, or zeros for an unknown product; the flag tells which.
    pub fn get_or_zero(&self, product_id: &str) -> (Array1<f64>, bool) {
        match self.get(product_id) {
            Some(v) => (v, true),
            None => (Array1::zeros(self.dim), false),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{STORE_MAGIC} {STORE_VERSION} dim={} count={}", self.dim, self.entries.len())?;
        for (id, v) in &self.entries {
            w.write_all(id.as_bytes())?;
            w.write_all(b"\t")?;
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                // shortest representation that parses back to the same f32
                write!(w, "{x}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, EmbedError> {
        let fmt = |m: String| EmbedError::Format(m);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| fmt("missing header".into()))??;
        let parts: Vec<&str> = header.split(' ').collect();
        let field = |p: Option<&&str>, key: &str| -> Result<usize, EmbedError> {
            p.and_then(|s| s.strip_prefix(key))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| fmt(format!("bad header {header:?}")))
        };
        if parts.len() != 4 || parts[0] != STORE_MAGIC || parts[1] != STORE_VERSION {
            return Err(fmt(format!("bad header {header:?}")));
        }
        let dim = field(parts.get(2), "dim=")?;
        let count = field(parts.get(3), "count=")?;

        let mut store = Self::new(dim);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let lineno = n + 2;
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| fmt(format!("line {lineno}: missing tab")))?;
            let v: Vec<f32> = values
                .split(' ')
                .map(|s| s.parse::<f32>())
                .collect::<Result<_, _>>()
                .map_err(|e| fmt(format!("line {lineno}: {e}")))?;
            if v.len() != dim {
                return Err(fmt(format!("line {lineno}: {} values, header says dim={dim}", v.len())));
            }
            if store.entries.insert(id.to_string(), v).is_some() {
                return Err(fmt(format!("line {lineno}: duplicate product id {id:?}")));
            }
        }
        if store.len() != count {
            return Err(fmt(format!("header says count={count}, found {}", store.len())));
        }
        Ok(store)
    }
}

pub fn save_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<(), EmbedError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    store.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore, EmbedError> {
    EmbeddingStore::read_from(io::BufReader::new(std::fs::File::open(path)?))
}

/// Embeddings of every sequence, extracted in parallel.
pub fn build_store(model: &GruModel, sequences: &[ProductSequence]) -> Result<EmbeddingStore, EmbedError> {
    let embs: Vec<(String, Array1<f64>)> = sequences
        .par_iter()
        .map(|s| Ok((s.product_id.clone(), extract_embedding(model, s)?)))
        .collect::<Result<_, EmbedError>>()?;
    let mut store = EmbeddingStore::new(model.hidden_dim());
    for (id, v) in embs {
        store.insert(&id, v.as_slice().expect("contiguous"))?;
    }
    Ok(store)
}

/// Row `i` is the embedding of review `i`'s product, or zeros when the store lacks it.
pub fn product_matrix(reviews: &[Review], store: &EmbeddingStore) -> Array2<f64> {
    let mut m = Array2::zeros((reviews.len(), store.dim()));
    for (mut row, r) in m.rows_mut().into_iter().zip(reviews) {
        if let Some(v) = store.get(&r.product_id) {
            row.assign(&v);
        }
    }
    m
}
