use ndarray::Array1;
use rand::Rng;

use super::RnnError;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_EPS: f64 = 1e-12;

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Categorical cross-entropy `-ln p[target]` of one distribution.
pub fn cross_entropy(dist: &Array1<f64>, target: usize) -> Result<f64, RnnError> {
    if target >= dist.len() {
        return Err(RnnError::BadDistribution(format!(
            "target {target} out of range for {} classes",
            dist.len()
        )));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(RnnError::BadDistribution("negative or non-finite entry".into()));
    }
    let sum = dist.sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(RnnError::BadDistribution(format!("sums to {sum}")));
    }
    Ok(-dist[target].max(PROB_EPS).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Inference,
}

/// Inverted dropout: in training each entry is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`.
pub fn dropout<R: Rng + ?Sized>(
    v: &Array1<f64>,
    rate: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> Result<Array1<f64>, RnnError> {
    let mask = dropout_mask(v.len(), rate, mode, rng)?;
    Ok(v * &mask)
}

/// The scaled keep-mask that [`dropout`] multiplies in.
pub fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> Result<Array1<f64>, RnnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(RnnError::BadRate(rate));
    }
    if mode == DropoutMode::Inference || rate == 0.0 {
        return Ok(Array1::ones(len));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Array1::from_shape_fn(len, |_| {
        if rng.gen::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&array![0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let u = Array1::from_elem(3, 1.0 / 3.0);
        for t in 0..3 {
            assert_abs_diff_eq!(cross_entropy(&u, t).unwrap(), 3f64.ln(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(cross_entropy(&u, 0).unwrap(), 1.0986, epsilon = 1e-4);
        let d = array![0.7, 0.2, 0.1];
        assert_abs_diff_eq!(cross_entropy(&d, 1).unwrap(), 1.6094, epsilon = 1e-4);
        assert_abs_diff_eq!(cross_entropy(&d, 1).unwrap(), -(0.2f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn cross_entropy_rejects_non_distributions() {
        assert!(cross_entropy(&array![0.5, 0.6], 0).is_err());
        assert!(cross_entropy(&array![1.2, -0.2], 0).is_err());
        assert!(cross_entropy(&array![0.5, 0.5], 2).is_err());
        assert!(cross_entropy(&array![f64::NAN, 1.0], 1).is_err());
        // zero probability is clamped, not infinite
        assert!(cross_entropy(&array![1.0, 0.0], 1).unwrap().is_finite());
    }

    #[test]
    fn softmax_is_stable() {
        let s = softmax(&array![1000.0, 1000.0]);
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-12);
        let z = softmax(&Array1::zeros(4));
        assert!(z.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = array![1.0, -2.0, 3.5];
        assert_eq!(dropout(&v, 0.0, DropoutMode::Train, &mut rng).unwrap(), v);
        assert_eq!(dropout(&v, 0.25, DropoutMode::Inference, &mut rng).unwrap(), v);
        assert_eq!(dropout(&v, 1.0, DropoutMode::Train, &mut rng), Err(RnnError::BadRate(1.0)));
        assert!(dropout(&v, -0.1, DropoutMode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ones = Array1::ones(100_000);
        let out = dropout(&ones, 0.25, DropoutMode::Train, &mut rng).unwrap();
        let mean = out.mean().unwrap();
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        let zeros = out.iter().filter(|&&v| v == 0.0).count() as f64 / 100_000.0;
        assert!((zeros - 0.25).abs() < 0.01);
        assert!(out.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
    }
}
