//! k-fold cross-validation with macro-averaged precision and recall.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{train_svm, SvmConfig, SvmError};
use crate::ingest::SentimentClass;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need n >= k >= 2, got n = {n}, k = {k}")]
    TooFewSamples { n: usize, k: usize },
    #[error("length mismatch: {predicted} predictions, {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no samples to score")]
    EmptyInput,
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: SvmError },
}

/// Shuffles `0..n` with the seed and deals it into `k` contiguous folds; the
/// first `n % k` folds hold one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::TooFewSamples { n, k });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// `confusion[t][p]` counts samples of true class `t` predicted as `p`.
pub fn confusion(predicted: &[SentimentClass], truth: &[SentimentClass]) -> [[usize; 3]; 3] {
    let mut m = [[0; 3]; 3];
    for (p, t) in predicted.iter().zip(truth) {
        m[t.index()][p.index()] += 1;
    }
    m
}

/// Accuracy plus precision and recall macro-averaged over all three classes.
/// A class never predicted (never present) scores precision (recall) 0.
pub fn metrics(predicted: &[SentimentClass], truth: &[SentimentClass]) -> Result<Metrics, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch { predicted: predicted.len(), truth: truth.len() });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let m = confusion(predicted, truth);
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let (mut precision, mut recall, mut correct) = (0.0, 0.0, 0);
    for c in 0..3 {
        let tp = m[c][c];
        let predicted_c: usize = (0..3).map(|t| m[t][c]).sum();
        let true_c: usize = m[c].iter().sum();
        precision += ratio(tp, predicted_c);
        recall += ratio(tp, true_c);
        correct += tp;
    }
    Ok(Metrics {
        precision: precision / 3.0,
        recall: recall / 3.0,
        accuracy: correct as f64 / truth.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldReport {
    /// 1-based.
    pub fold: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub average: Metrics,
}

impl CvReport {
    /// Tab-separated table with a header, one row per fold and a final `Average` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fold\tprecision\trecall\taccuracy\n");
        let mut row = |name: &str, m: &Metrics| {
            let _ = writeln!(out, "{name}\t{:.4}\t{:.4}\t{:.4}", m.precision, m.recall, m.accuracy);
        };
        for f in &self.folds {
            row(&f.fold.to_string(), &f.metrics);
        }
        row("Average", &self.average);
        out
    }
}

/// Trains on k−1 folds and scores the held-out one, for every fold in
/// parallel. Standardization happens inside each training call, so its
/// statistics never see the held-out fold.
pub fn run_cv(
    x: &Array2<f64>,
    labels: &[SentimentClass],
    k: usize,
    seed: u64,
    config: &SvmConfig,
) -> Result<CvReport, EvalError> {
    if x.nrows() != labels.len() {
        return Err(EvalError::LengthMismatch { predicted: x.nrows(), truth: labels.len() });
    }
    let folds = kfold_split(x.nrows(), k, seed)?;
    let reports = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; x.nrows()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..x.nrows()).filter(|&i| !in_test[i]).collect();
            let fold_err = |source| EvalError::Fold { fold: f + 1, source };
            let train_labels: Vec<SentimentClass> = train.iter().map(|&i| labels[i]).collect();
            let model = train_svm(&x.select(Axis(0), &train), &train_labels, config).map_err(fold_err)?;
            let predicted = model.predict_rows(&x.select(Axis(0), test)).map_err(fold_err)?;
            let truth: Vec<SentimentClass> = test.iter().map(|&i| labels[i]).collect();
            Ok(FoldReport { fold: f + 1, metrics: metrics(&predicted, &truth)? })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let n = reports.len() as f64;
    let mean = |g: fn(&Metrics) -> f64| reports.iter().map(|r| g(&r.metrics)).sum::<f64>() / n;
    let average = Metrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        accuracy: mean(|m| m.accuracy),
    };
    Ok(CvReport { folds: reports, average })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SentimentClass::*;

    #[test]
    fn fold_sizes() {
        let sizes = |n, k| kfold_split(n, k, 1).unwrap().iter().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(sizes(100, 10), vec![10; 10]);
        assert_eq!(sizes(12, 10), vec![2, 2, 1, 1, 1, 1, 1, 1, 1, 1]);
        assert!(matches!(kfold_split(5, 10, 1), Err(EvalError::TooFewSamples { .. })));
        assert!(kfold_split(5, 1, 1).is_err());
        assert_eq!(kfold_split(50, 5, 9).unwrap(), kfold_split(50, 5, 9).unwrap());
    }

    #[test]
    fn always_positive_on_balanced_set() {
        let truth = [Negative, Neutral, Positive].repeat(4);
        let m = metrics(&[Positive; 12], &truth).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.precision - 1.0 / 9.0).abs() < 1e-12);
        let perfect = metrics(&truth, &truth).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.accuracy), (1.0, 1.0, 1.0));
        assert!(matches!(metrics(&[], &[]), Err(EvalError::EmptyInput)));
        assert!(matches!(metrics(&[Positive], &[]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn tsv_layout() {
        let m = Metrics { precision: 0.5, recall: 0.25, accuracy: 0.75 };
        let r = CvReport { folds: vec![FoldReport { fold: 1, metrics: m }], average: m };
        assert_eq!(r.to_tsv(), "fold\tprecision\trecall\taccuracy\n1\t0.5000\t0.2500\t0.7500\nAverage\t0.5000\t0.2500\t0.7500\n");
    }

    fn class() -> impl Strategy<Value = SentimentClass> {
        (0usize..3).prop_map(|i| SentimentClass::from_index(i).unwrap())
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..300, k in 2usize..20, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let folds = kfold_split(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let min = folds.iter().map(Vec::len).min().unwrap();
            let max = folds.iter().map(Vec::len).max().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn metrics_are_bounded_and_permutation_invariant(
            pairs in prop::collection::vec((class(), class()), 1..60),
            seed in any::<u64>(),
        ) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let m = metrics(&p, &t).unwrap();
            for v in [m.precision, m.recall, m.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (p2, t2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            let m2 = metrics(&p2, &t2).unwrap();
            prop_assert!((m.precision - m2.precision).abs() < 1e-12);
            prop_assert!((m.recall - m2.recall).abs() < 1e-12);
            prop_assert_eq!(m.accuracy, m2.accuracy);
        }
    }
}
