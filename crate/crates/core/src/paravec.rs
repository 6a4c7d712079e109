//! Paragraph vectors trained with negative sampling.
//!
//! PV-DM predicts each word from the concatenation of the document vector
//! and the vectors of the `window` preceding words (left-padded with a
//! reserved NULL word). PV-DBOW predicts each word from the document vector
//! alone and keeps no word input matrix.
//!
//! # Model file
//!
//! ```text
//! magic      8 bytes  "RSPVMDL\0"
//! version    u8       1
//! mode       u8       0 = PV-DM, 1 = PV-DBOW
//! config     u64 dim, epochs, window, negatives, min_count, seed, infer_epochs
//!            f64 lr_start, lr_decay_per_epoch, lr_floor
//! vocab      u64 n, then n × (u32 len, utf-8 bytes, u64 count), u64 total_tokens
//! W, D, Wout matrices: u64 rows, u64 cols, rows×cols f32 (row-major)
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::io::{
    invalid, read_header, read_len, read_matrix_f32, read_str, write_header, write_len,
    write_matrix_f32, write_str,
};
use crate::preprocess::TokenSequence;

const MAGIC: &[u8; 8] = b"RSPVMDL\0";
const VERSION: u8 = 1;

/// Salt mixed into the seed for inference so it does not replay training draws.
const INFER_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum PvError {
    #[error("no word reaches the minimum count")]
    EmptyVocabulary,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training loss became non-finite in epoch {0}")]
    NonFiniteLoss(usize),
    #[error("no in-vocabulary tokens to infer from")]
    NoKnownTokens,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvMode {
    /// Distributed memory (document vector concatenated with context words).
    Dm,
    /// Distributed bag of words (document vector only).
    Dbow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_decay_per_epoch: f64,
    pub lr_floor: f64,
    pub window: usize,
    pub negatives: usize,
    pub min_count: u64,
    pub seed: u64,
    pub infer_epochs: usize,
}

impl Default for PvConfig {
    fn default() -> Self {
        Self {
            dim: crate::REVIEW_DIM,
            epochs: 15,
            lr_start: 0.025,
            lr_decay_per_epoch: 0.002,
            lr_floor: 0.001,
            window: 10,
            negatives: 5,
            min_count: 1,
            seed: 1,
            infer_epochs: 15,
        }
    }
}

impl PvConfig {
    /// `max(lr_start − epoch·decay, lr_floor)`
    pub fn lr_at(&self, epoch: usize) -> f64 {
        (self.lr_start - epoch as f64 * self.lr_decay_per_epoch).max(self.lr_floor)
    }

    pub fn validate(&self) -> Result<(), PvError> {
        let bad = |m: &str| Err(PvError::BadConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        if !(self.lr_floor > 0.0 && self.lr_start > self.lr_floor) {
            return bad("learning rates must satisfy lr_start > lr_floor > 0");
        }
        if !(self.lr_decay_per_epoch >= 0.0) {
            return bad("lr_decay_per_epoch must be non-negative");
        }
        Ok(())
    }
}

/// Word → dense index with corpus counts. Indices are assigned by
/// descending count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total_tokens: u64,
}

impl Vocabulary {
    fn from_entries(mut entries: Vec<(String, u64)>, total_tokens: u64) -> Self {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i))
            .collect();
        let (words, counts) = entries.into_iter().unzip();
        Self { words, counts, index, total_tokens }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.get(word).map(|i| self.counts[i])
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    /// Number of tokens in the corpus the vocabulary was built from.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words.iter().map(String::as_str).zip(self.counts.iter().copied())
    }

    pub fn encode(&self, tokens: &TokenSequence) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.get(t)).collect()
    }
}

pub fn build_vocab(corpus: &[TokenSequence], min_count: u64) -> Result<Vocabulary, PvError> {
    if min_count == 0 {
        return Err(PvError::BadConfig("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0;
    for doc in corpus {
        for tok in doc.iter() {
            *counts.entry(tok).or_insert(0) += 1;
            total += 1;
        }
    }
    let entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(w, c)| (w.to_string(), c))
        .collect();
    if entries.is_empty() {
        return Err(PvError::EmptyVocabulary);
    }
    Ok(Vocabulary::from_entries(entries, total))
}

/// Cumulative unigram^0.75 distribution for drawing negative samples.
#[derive(Debug, Clone)]
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(vocab: &Vocabulary) -> Self {
        let mut acc = 0.0;
        let cumulative = vocab
            .counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    /// `k` noise words, never equal to `target` unless the vocabulary has one word.
    fn negatives<R: Rng + ?Sized>(&self, k: usize, target: usize, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        if self.cumulative.len() < 2 {
            return;
        }
        while out.len() < k {
            let w = self.sample(rng);
            if w != target {
                out.push(w);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PvModel {
    pub config: PvConfig,
    pub mode: PvMode,
    pub vocab: Vocabulary,
    /// Word input vectors, `(|V| + 1) × dim`; the last row is the NULL padding
    /// word. Empty (`0 × dim`) in PV-DBOW.
    pub words: Array2<f64>,
    /// One row per training document.
    pub docs: Array2<f64>,
    /// Output (prediction) weights, `|V| × context_dim`.
    pub output: Array2<f64>,
    noise: NoiseTable,
}

/// A trained model with its per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct PvFit {
    pub model: PvModel,
    pub epoch_losses: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// `-ln σ(x)` without overflow.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// One negative-sampling prediction of `target` from input `h`.
///
/// Adds `lr · (−dL/dh)` into `neu1e` using the output rows as they were before
/// this call, and, when `output` is mutable, applies the output-row update.
/// Returns the loss `−ln σ(v_t·h) − Σ ln σ(−v_n·h)`.
fn ns_step(
    mut output: OutputRows<'_>,
    h: &[f64],
    target: usize,
    negatives: &[usize],
    lr: f64,
    neu1e: &mut [f64],
) -> f64 {
    let mut loss = 0.0;
    for (w, label) in std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0))) {
        let row = output.row(w);
        let f = dot(h, row);
        loss += if label > 0.0 { neg_log_sigmoid(f) } else { neg_log_sigmoid(-f) };
        let g = (label - 1.0 / (1.0 + (-f).exp())) * lr;
        axpy(g, row, neu1e);
        if let OutputRows::Learn(m) = &mut output {
            let row = m.row_mut(w).into_slice().expect("standard layout");
            axpy(g, h, row);
        }
    }
    loss
}

enum OutputRows<'a> {
    Learn(&'a mut Array2<f64>),
    Frozen(&'a Array2<f64>),
}

impl OutputRows<'_> {
    fn row(&self, w: usize) -> &[f64] {
        let m: &Array2<f64> = match self {
            OutputRows::Learn(m) => m,
            OutputRows::Frozen(m) => m,
        };
        let cols = m.ncols();
        &m.as_slice().expect("standard layout")[w * cols..(w + 1) * cols]
    }
}

fn row_slice(m: &Array2<f64>, r: usize) -> &[f64] {
    let cols = m.ncols();
    &m.as_slice().expect("standard layout")[r * cols..(r + 1) * cols]
}

fn row_slice_mut(m: &mut Array2<f64>, r: usize) -> &mut [f64] {
    let cols = m.ncols();
    &mut m.as_slice_mut().expect("standard layout")[r * cols..(r + 1) * cols]
}

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    let a = 0.5 / dim as f64;
    Array2::from_shape_fn((rows, dim), |_| rng.gen_range(-a..=a))
}

impl PvModel {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn doc_count(&self) -> usize {
        self.docs.nrows()
    }

    pub fn null_word(&self) -> usize {
        self.vocab.len()
    }

    /// Width of the prediction input: `(window + 1)·dim` for PV-DM, `dim` for PV-DBOW.
    pub fn context_dim(&self) -> usize {
        context_dim(self.mode, &self.config)
    }

    pub fn doc_vector(&self, doc: usize) -> Option<Array1<f64>> {
        (doc < self.doc_count()).then(|| self.docs.row(doc).to_owned())
    }

    pub fn all_finite(&self) -> bool {
        [&self.words, &self.docs, &self.output]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Fills `h` with `[doc; W[ctx_0]; …; W[ctx_{window−1}]]` for position `pos`.
    fn dm_input(&self, doc_vec: &[f64], ids: &[usize], pos: usize, h: &mut [f64], ctx: &mut Vec<usize>) {
        let dim = self.dim();
        let window = self.config.window;
        ctx.clear();
        for j in 0..window {
            // slot j holds the word at pos − window + j
            let src = pos as isize - window as isize + j as isize;
            ctx.push(if src < 0 { self.null_word() } else { ids[src as usize] });
        }
        h[..dim].copy_from_slice(doc_vec);
        for (j, &w) in ctx.iter().enumerate() {
            h[(j + 1) * dim..(j + 2) * dim].copy_from_slice(row_slice(&self.words, w));
        }
    }

    /// Learns a vector for unseen text with every model parameter frozen.
    pub fn infer_vector(&self, tokens: &TokenSequence) -> Result<Array1<f64>, PvError> {
        self.infer_vector_with_epochs(tokens, self.config.infer_epochs)
    }

    pub fn infer_vector_with_epochs(
        &self,
        tokens: &TokenSequence,
        epochs: usize,
    ) -> Result<Array1<f64>, PvError> {
        let ids = self.vocab.encode(tokens);
        if ids.is_empty() {
            return Err(PvError::NoKnownTokens);
        }
        let dim = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ INFER_SALT);
        let mut doc: Vec<f64> = uniform_matrix(1, dim, &mut rng).into_raw_vec_and_offset().0;
        let cdim = self.context_dim();
        let mut h = vec![0.0; cdim];
        let mut neu1e = vec![0.0; cdim];
        let mut ctx = Vec::with_capacity(self.config.window);
        let mut negs = Vec::with_capacity(self.config.negatives);

        for epoch in 0..epochs {
            let lr = self.config.lr_at(epoch);
            for (pos, &target) in ids.iter().enumerate() {
                match self.mode {
                    PvMode::Dm => self.dm_input(&doc, &ids, pos, &mut h, &mut ctx),
                    PvMode::Dbow => h.copy_from_slice(&doc),
                }
                self.noise.negatives(self.config.negatives, target, &mut rng, &mut negs);
                neu1e.iter_mut().for_each(|v| *v = 0.0);
                ns_step(OutputRows::Frozen(&self.output), &h, target, &negs, lr, &mut neu1e);
                axpy(1.0, &neu1e[..dim], &mut doc);
            }
        }
        Ok(Array1::from(doc))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write_header(w, MAGIC, VERSION)?;
        w.write_u8(match self.mode {
            PvMode::Dm => 0,
            PvMode::Dbow => 1,
        })?;
        let c = &self.config;
        for v in [c.dim, c.epochs, c.window, c.negatives] {
            write_len(w, v)?;
        }
        w.write_u64::<LE>(c.min_count)?;
        w.write_u64::<LE>(c.seed)?;
        write_len(w, c.infer_epochs)?;
        for v in [c.lr_start, c.lr_decay_per_epoch, c.lr_floor] {
            w.write_f64::<LE>(v)?;
        }
        write_len(w, self.vocab.len())?;
        for (word, count) in self.vocab.iter() {
            write_str(w, word)?;
            w.write_u64::<LE>(count)?;
        }
        w.write_u64::<LE>(self.vocab.total_tokens)?;
        write_matrix_f32(w, &self.words)?;
        write_matrix_f32(w, &self.docs)?;
        write_matrix_f32(w, &self.output)
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let version = read_header(r, MAGIC)?;
        if version != VERSION {
            return Err(invalid(format!("unsupported PV model version {version}")));
        }
        let mode = match r.read_u8()? {
            0 => PvMode::Dm,
            1 => PvMode::Dbow,
            m => return Err(invalid(format!("unknown PV mode {m}"))),
        };
        let dim = read_len(r)?;
        let epochs = read_len(r)?;
        let window = read_len(r)?;
        let negatives = read_len(r)?;
        let min_count = r.read_u64::<LE>()?;
        let seed = r.read_u64::<LE>()?;
        let infer_epochs = read_len(r)?;
        let lr_start = r.read_f64::<LE>()?;
        let lr_decay_per_epoch = r.read_f64::<LE>()?;
        let lr_floor = r.read_f64::<LE>()?;
        let config = PvConfig {
            dim,
            epochs,
            lr_start,
            lr_decay_per_epoch,
            lr_floor,
            window,
            negatives,
            min_count,
            seed,
            infer_epochs,
        };
        config.validate().map_err(|e| invalid(e.to_string()))?;

        let n = read_len(r)?;
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let word = read_str(r)?;
            let count = r.read_u64::<LE>()?;
            entries.push((word, count));
        }
        let total_tokens = r.read_u64::<LE>()?;
        let vocab = Vocabulary::from_entries(entries, total_tokens);
        if vocab.len() != n || vocab.is_empty() {
            return Err(invalid("duplicate or missing vocabulary entries"));
        }
        let words = read_matrix_f32(r)?;
        let docs = read_matrix_f32(r)?;
        let output = read_matrix_f32(r)?;

        let expected_words = match mode {
            PvMode::Dm => n + 1,
            PvMode::Dbow => 0,
        };
        if words.nrows() != expected_words || (words.nrows() > 0 && words.ncols() != dim) {
            return Err(invalid("word matrix shape does not match vocabulary"));
        }
        if docs.ncols() != dim {
            return Err(invalid("document matrix width does not match dim"));
        }
        if output.nrows() != n || output.ncols() != context_dim(mode, &config) {
            return Err(invalid("output matrix shape does not match configuration"));
        }
        let noise = NoiseTable::new(&vocab);
        Ok(Self { config, mode, vocab, words, docs, output, noise })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        let mut r = io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn context_dim(mode: PvMode, config: &PvConfig) -> usize {
    match mode {
        PvMode::Dm => (config.window + 1) * config.dim,
        PvMode::Dbow => config.dim,
    }
}

pub fn train_pvdm(corpus: &[TokenSequence], config: &PvConfig) -> Result<PvFit, PvError> {
    train(corpus, config, PvMode::Dm)
}

pub fn train_pvdbow(corpus: &[TokenSequence], config: &PvConfig) -> Result<PvFit, PvError> {
    train(corpus, config, PvMode::Dbow)
}

/// Single-worker SGD; bit-deterministic for a given seed.
pub fn train(corpus: &[TokenSequence], config: &PvConfig, mode: PvMode) -> Result<PvFit, PvError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(PvError::EmptyCorpus);
    }
    let vocab = build_vocab(corpus, config.min_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let words = match mode {
        PvMode::Dm => uniform_matrix(vocab.len() + 1, dim, &mut rng),
        PvMode::Dbow => Array2::zeros((0, dim)),
    };
    let docs = uniform_matrix(corpus.len(), dim, &mut rng);
    let output = Array2::zeros((vocab.len(), context_dim(mode, config)));
    let noise = NoiseTable::new(&vocab);
    let encoded: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(d)).collect();
    let mut model = PvModel { config: config.clone(), mode, vocab, words, docs, output, noise };

    let cdim = model.context_dim();
    let mut h = vec![0.0; cdim];
    let mut neu1e = vec![0.0; cdim];
    let mut ctx = Vec::with_capacity(config.window);
    let mut negs = Vec::with_capacity(config.negatives);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut examples = 0usize;
        for &d in &order {
            let ids = &encoded[d];
            for (pos, &target) in ids.iter().enumerate() {
                match mode {
                    PvMode::Dm => {
                        let doc_vec: Vec<f64> = row_slice(&model.docs, d).to_vec();
                        model.dm_input(&doc_vec, ids, pos, &mut h, &mut ctx);
                    }
                    PvMode::Dbow => h.copy_from_slice(row_slice(&model.docs, d)),
                }
                model.noise.negatives(config.negatives, target, &mut rng, &mut negs);
                neu1e.iter_mut().for_each(|v| *v = 0.0);
                loss_sum += ns_step(OutputRows::Learn(&mut model.output), &h, target, &negs, lr, &mut neu1e);
                examples += 1;
                axpy(1.0, &neu1e[..dim], row_slice_mut(&mut model.docs, d));
                if mode == PvMode::Dm {
                    for (j, &w) in ctx.iter().enumerate() {
                        axpy(1.0, &neu1e[(j + 1) * dim..(j + 2) * dim], row_slice_mut(&mut model.words, w));
                    }
                }
            }
        }
        let mean = if examples == 0 { 0.0 } else { loss_sum / examples as f64 };
        if !mean.is_finite() || !model.all_finite() {
            return Err(PvError::NonFiniteLoss(epoch));
        }
        epoch_losses.push(mean);
    }
    Ok(PvFit { model, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> TokenSequence {
        TokenSequence::from(words)
    }

    #[test]
    fn vocab_counts() {
        let corpus = vec![toks(&["good", "good", "bad"])];
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.count("good"), Some(2));
        assert_eq!(v.count("bad"), Some(1));
        assert_eq!(v.get("good"), Some(0));
        assert_eq!(v.total_tokens(), 3);
        let v2 = build_vocab(&corpus, 2).unwrap();
        assert_eq!(v2.len(), 1);
        assert_eq!(v2.count("good"), Some(2));
        assert!(matches!(build_vocab(&[], 1), Err(PvError::EmptyVocabulary)));
        assert!(matches!(build_vocab(&corpus, 3), Err(PvError::EmptyVocabulary)));
    }

    #[test]
    fn lr_schedule() {
        let c = PvConfig::default();
        assert_eq!(c.lr_at(0), 0.025);
        assert!((c.lr_at(1) - 0.023).abs() < 1e-15);
        assert_eq!(c.lr_at(13), 0.001);
        assert_eq!(c.lr_at(14), 0.001);
        let mut prev = f64::INFINITY;
        for e in 0..100 {
            let lr = c.lr_at(e);
            assert!(lr <= prev && lr >= c.lr_floor);
            prev = lr;
        }
    }

    #[test]
    fn config_validation() {
        let ok = PvConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            PvConfig { dim: 0, ..ok.clone() },
            PvConfig { epochs: 0, ..ok.clone() },
            PvConfig { window: 0, ..ok.clone() },
            PvConfig { lr_floor: 0.0, ..ok.clone() },
            PvConfig { lr_start: 0.0005, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(PvError::BadConfig(_))));
        }
    }

    /// Independent evaluation of the negative-sampling loss for a fixed input.
    fn oracle_loss(output: &Array2<f64>, h: &[f64], target: usize, negs: &[usize]) -> f64 {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let score = |w: usize| output.row(w).iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        -sig(score(target)).ln() - negs.iter().map(|&n| sig(-score(n)).ln()).sum::<f64>()
    }

    #[test]
    fn doc_gradient_matches_finite_differences() {
        let corpus = vec![toks(&["alpha", "beta", "gamma"])];
        let config = PvConfig { dim: 4, window: 2, epochs: 1, seed: 5, ..PvConfig::default() };
        let mut model = train_pvdm(&corpus, &config).unwrap().model;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        model.output.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        model.words.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        let doc: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let ids = model.vocab.encode(&corpus[0]);
        let negatives: Vec<Vec<usize>> = ids
            .iter()
            .map(|&t| (0..3).filter(|&w| w != t).collect())
            .collect();

        let cdim = model.context_dim();
        let loss_at = |d: &[f64]| -> f64 {
            let mut total = 0.0;
            let (mut h, mut ctx) = (vec![0.0; cdim], Vec::new());
            for (pos, &t) in ids.iter().enumerate() {
                model.dm_input(d, &ids, pos, &mut h, &mut ctx);
                total += oracle_loss(&model.output, &h, t, &negatives[pos]);
            }
            total
        };

        // analytic gradient through the training code path (lr = 1, output frozen)
        let mut grad = vec![0.0; 4];
        let (mut h, mut ctx, mut neu1e) = (vec![0.0; cdim], Vec::new(), vec![0.0; cdim]);
        let mut analytic_loss = 0.0;
        for (pos, &t) in ids.iter().enumerate() {
            model.dm_input(&doc, &ids, pos, &mut h, &mut ctx);
            neu1e.iter_mut().for_each(|v| *v = 0.0);
            analytic_loss += ns_step(OutputRows::Frozen(&model.output), &h, t, &negatives[pos], 1.0, &mut neu1e);
            axpy(-1.0, &neu1e[..4], &mut grad);
        }
        assert!((analytic_loss - loss_at(&doc)).abs() < 1e-12);

        let step = 1e-5;
        for i in 0..4 {
            let mut plus = doc.clone();
            let mut minus = doc.clone();
            plus[i] += step;
            minus[i] -= step;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
            assert!(rel <= 1e-5, "component {i}: analytic {} numeric {numeric} rel {rel}", grad[i]);
        }
    }

    #[test]
    fn dbow_has_no_word_matrix() {
        let corpus = vec![toks(&["a", "b", "c"]), toks(&["c", "d"])];
        let config = PvConfig { dim: 8, epochs: 2, ..PvConfig::default() };
        let m = train_pvdbow(&corpus, &config).unwrap().model;
        assert_eq!(m.words.nrows(), 0);
        assert_eq!(m.docs.dim(), (2, 8));
        assert_eq!(m.output.dim(), (4, 8));
    }

    #[test]
    fn same_seed_same_vectors() {
        let corpus = vec![toks(&["a", "b", "c", "a"]), toks(&["c", "d", "b"])];
        let config = PvConfig { dim: 10, epochs: 3, ..PvConfig::default() };
        for mode in [PvMode::Dm, PvMode::Dbow] {
            let a = train(&corpus, &config, mode).unwrap();
            let b = train(&corpus, &config, mode).unwrap();
            assert_eq!(a.model.docs, b.model.docs);
            assert_eq!(a.epoch_losses, b.epoch_losses);
        }
    }

    #[test]
    fn infer_rejects_unknown_text() {
        let corpus = vec![toks(&["a", "b"])];
        let config = PvConfig { dim: 4, epochs: 1, ..PvConfig::default() };
        let m = train_pvdm(&corpus, &config).unwrap().model;
        assert!(matches!(m.infer_vector(&toks(&[])), Err(PvError::NoKnownTokens)));
        assert!(matches!(m.infer_vector(&toks(&["zzz", "yyy"])), Err(PvError::NoKnownTokens)));
        let v = m.infer_vector(&toks(&["a", "zzz"])).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v, m.infer_vector(&toks(&["a", "zzz"])).unwrap());
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(train_pvdm(&[], &PvConfig::default()), Err(PvError::EmptyCorpus)));
        assert!(matches!(
            train_pvdm(&[TokenSequence::default()], &PvConfig::default()),
            Err(PvError::EmptyVocabulary)
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let corpus = vec![toks(&["a", "b", "c", "a"]), toks(&["c", "d", "b"])];
        let config = PvConfig { dim: 6, epochs: 2, window: 3, ..PvConfig::default() };
        for mode in [PvMode::Dm, PvMode::Dbow] {
            let m = train(&corpus, &config, mode).unwrap().model;
            let mut buf = Vec::new();
            m.write_to(&mut buf).unwrap();
            let back = PvModel::read_from(&mut buf.as_slice()).unwrap();
            assert_eq!(back.mode, mode);
            assert_eq!(back.config, m.config);
            assert_eq!(back.vocab, m.vocab);
            assert_eq!(back.docs, m.docs.mapv(|v| v as f32 as f64));
            assert_eq!(back.output, m.output.mapv(|v| v as f32 as f64));

            let mut corrupt = buf.clone();
            corrupt[0] = b'X';
            assert!(PvModel::read_from(&mut corrupt.as_slice()).is_err());
            assert!(PvModel::read_from(&mut &buf[..buf.len() - 3]).is_err());
        }
    }
}
