//! One-vs-rest support vector machines over review(+product) features.
//!
//! Each binary machine solves the soft-margin dual
//!
//! ```text
//! min ½ αᵀQα − Σα   s.t. 0 ≤ α ≤ C,  yᵀα = 0,   Q_ij = y_i y_j k(x_i, x_j)
//! ```
//!
//! by sequential minimal optimization with second-order working-set
//! selection, stopping when the maximal KKT gap drops below `tol`. The
//! decision value is `f(x) = Σ α_i y_i k(x_i, x) − ρ`; prediction takes the
//! class whose machine scores highest, ties going to the earlier class in
//! Negative < Neutral < Positive order.

use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt};
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::SentimentClass;
use crate::io::{invalid, read_f64s, read_header, read_len, write_f64s, write_header, write_len};
use crate::{PRODUCT_DIM, REVIEW_DIM};

const MAGIC: &[u8; 8] = b"RSSVMMDL";
const VERSION: u8 = 1;
/// Floor for a non-positive second derivative along the working pair.
const TAU: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training labels contain a single class")]
    SingleClassInput,
    #[error("bad hyperparameter: {0}")]
    BadHyperparameter(String),
    #[error("no training samples")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `review ⊕ product`, requiring exactly 300 + 128 dimensions.
pub fn concat_features(review: &[f64], product: &[f64]) -> Result<Array1<f64>, SvmError> {
    if review.len() != REVIEW_DIM || product.len() != PRODUCT_DIM {
        return Err(SvmError::ShapeMismatch(format!(
            "expected ({REVIEW_DIM}, {PRODUCT_DIM}) dimensions, got ({}, {})",
            review.len(),
            product.len()
        )));
    }
    Ok(review.iter().chain(product).copied().collect())
}

/// Kernel requested by the caller; an unset RBF γ resolves to `1 / dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    /// Full Gram matrix, rows computed in parallel.
    pub fn matrix(&self, x: &Array2<f64>) -> Array2<f64> {
        let n = x.nrows();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| self.eval(x.row(i), x.row(j))).collect())
            .collect();
        Array2::from_shape_fn((n, n), |(i, j)| rows[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Standardize every feature with training mean and standard deviation.
    pub standardize: bool,
    /// Stopping tolerance on the maximal KKT gap.
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: KernelSpec::Rbf { gamma: None },
            standardize: true,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    /// Constant features get a scale of 1.
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 && s.is_finite() { s } else { 1.0 });
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        (&x - &self.mean) / &self.scale
    }

    pub fn apply_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }
}

/// One binary machine: `f(x) = Σ coef_i k(sv_i, x) − rho` with `coef_i = α_i y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub class: SentimentClass,
    pub support_vectors: Array2<f64>,
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Training-set indices of the support vectors.
    pub support_indices: Vec<usize>,
    /// Dual variables of every training point, kept for KKT checks.
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn decision(&self, kernel: &Kernel, x: ArrayView1<'_, f64>) -> f64 {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub dim: usize,
    pub scaler: Option<Standardizer>,
    /// One machine per class seen in training, in class order.
    pub machines: Vec<BinarySvm>,
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

/// SMO on a precomputed Gram matrix with labels `y ∈ {±1}`.
fn solve_binary(k: &Array2<f64>, y: &[f64], c: f64, tol: f64, max_iter: usize) -> Solution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // G = Qα − e
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k[[i, j]];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let b = gmax - v;
                let a = (k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]]).max(TAU);
                let obj = -b * b / a;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (k[[i, i]] + k[[j, j]] + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[[i, i]] + k[[j, j]] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // ρ: mean of y·G over free variables, else the midpoint of the feasible interval
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free_n += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };
    Solution { alpha, rho, iterations }
}

fn check_training_input(x: &Array2<f64>, labels: &[SentimentClass], config: &SvmConfig) -> Result<(), SvmError> {
    if x.nrows() == 0 {
        return Err(SvmError::EmptyInput);
    }
    if x.nrows() != labels.len() {
        return Err(SvmError::ShapeMismatch(format!(
            "{} feature rows, {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(SvmError::BadHyperparameter(format!("C = {}", config.c)));
    }
    if !(config.tol > 0.0) {
        return Err(SvmError::BadHyperparameter(format!("tol = {}", config.tol)));
    }
    if let KernelSpec::Rbf { gamma: Some(g) } = config.kernel {
        if !(g > 0.0 && g.is_finite()) {
            return Err(SvmError::BadHyperparameter(format!("gamma = {g}")));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SvmError::BadHyperparameter("non-finite feature value".into()));
    }
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(SvmError::SingleClassInput);
    }
    Ok(())
}

/// Trains one machine per class present in `labels` (rows of `x` are samples).
pub fn train_svm(x: &Array2<f64>, labels: &[SentimentClass], config: &SvmConfig) -> Result<SvmModel, SvmError> {
    check_training_input(x, labels, config)?;
    let dim = x.ncols();
    let kernel = match config.kernel {
        KernelSpec::Linear => Kernel::Linear,
        KernelSpec::Rbf { gamma } => Kernel::Rbf { gamma: gamma.unwrap_or(1.0 / dim.max(1) as f64) },
    };
    let scaler = config.standardize.then(|| Standardizer::fit(x));
    let xs = match &scaler {
        Some(s) => s.apply_rows(x),
        None => x.clone(),
    };
    let gram = kernel.matrix(&xs);
    let max_iter = config.max_iter.unwrap_or_else(|| 10_000_000.max(100 * x.nrows()));

    let classes: Vec<SentimentClass> =
        SentimentClass::ALL.into_iter().filter(|c| labels.contains(c)).collect();
    let machines = classes
        .par_iter()
        .map(|&class| {
            let y: Vec<f64> = labels.iter().map(|l| if *l == class { 1.0 } else { -1.0 }).collect();
            let sol = solve_binary(&gram, &y, config.c, config.tol, max_iter);
            let support_indices: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
            let support_vectors = xs.select(Axis(0), &support_indices);
            let coef = support_indices.iter().map(|&i| sol.alpha[i] * y[i]).collect();
            BinarySvm {
                class,
                support_vectors,
                coef,
                rho: sol.rho,
                support_indices,
                alpha: sol.alpha,
                iterations: sol.iterations,
            }
        })
        .collect();
    Ok(SvmModel { kernel, c: config.c, dim, scaler, machines })
}

impl SvmModel {
    fn prepare(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, SvmError> {
        if x.len() != self.dim {
            return Err(SvmError::ShapeMismatch(format!(
                "model expects {} features, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(match &self.scaler {
            Some(s) => s.apply(x),
            None => x.to_owned(),
        })
    }

    /// Decision value of every machine, in class order.
    pub fn decision_values(&self, x: ArrayView1<'_, f64>) -> Result<Vec<(SentimentClass, f64)>, SvmError> {
        let z = self.prepare(x)?;
        Ok(self
            .machines
            .iter()
            .map(|m| (m.class, m.decision(&self.kernel, z.view())))
            .collect())
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<SentimentClass, SvmError> {
        let scores = self.decision_values(x)?;
        let mut best: Option<(SentimentClass, f64)> = None;
        for (class, v) in scores {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((class, v));
            }
        }
        Ok(best.map_or(SentimentClass::Negative, |(c, _)| c))
    }

    pub fn predict_rows(&self, x: &Array2<f64>) -> Result<Vec<SentimentClass>, SvmError> {
        (0..x.nrows()).into_par_iter().map(|i| self.predict(x.row(i))).collect()
    }

    /// Largest KKT violation over all training points and machines,
    /// recomputed from the decision function (in the same units as `tol`).
    pub fn kkt_violation(&self, x: &Array2<f64>, labels: &[SentimentClass]) -> Result<f64, SvmError> {
        let mut worst = 0.0f64;
        for m in &self.machines {
            if m.alpha.len() != x.nrows() || labels.len() != x.nrows() {
                return Err(SvmError::ShapeMismatch("not the training set of this model".into()));
            }
            for (i, row) in x.rows().into_iter().enumerate() {
                let z = self.prepare(row)?;
                let y = if labels[i] == m.class { 1.0 } else { -1.0 };
                let margin = y * m.decision(&self.kernel, z.view());
                let a = m.alpha[i];
                let v = if a <= 0.0 {
                    (1.0 - margin).max(0.0)
                } else if a >= self.c {
                    (margin - 1.0).max(0.0)
                } else {
                    (margin - 1.0).abs()
                };
                worst = worst.max(v);
            }
        }
        Ok(worst)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write_header(w, MAGIC, VERSION)?;
        match self.kernel {
            Kernel::Linear => write_f64s(w, &[0.0, 0.0])?,
            Kernel::Rbf { gamma } => write_f64s(w, &[1.0, gamma])?,
        }
        write_f64s(w, &[self.c])?;
        write_len(w, self.dim)?;
        match &self.scaler {
            None => w.write_u8(0)?,
            Some(s) => {
                w.write_u8(1)?;
                write_f64s(w, s.mean.as_slice().expect("contiguous"))?;
                write_f64s(w, s.scale.as_slice().expect("contiguous"))?;
            }
        }
        write_len(w, self.machines.len())?;
        for m in &self.machines {
            w.write_u8(m.class.index() as u8)?;
            write_f64s(w, &[m.rho])?;
            write_len(w, m.support_vectors.nrows())?;
            write_f64s(w, &m.coef)?;
            write_f64s(w, m.support_vectors.as_standard_layout().as_slice().expect("standard layout"))?;
        }
        Ok(())
    }

    /// Training-only state (dual variables, support indices) is not stored.
    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let version = read_header(r, MAGIC)?;
        if version != VERSION {
            return Err(invalid(format!("unsupported SVM model version {version}")));
        }
        let k = read_f64s(r)?;
        let kernel = match k.as_slice() {
            [t, _] if *t == 0.0 => Kernel::Linear,
            [t, g] if *t == 1.0 => Kernel::Rbf { gamma: *g },
            _ => return Err(invalid("bad kernel record")),
        };
        let c = *read_f64s(r)?.first().ok_or_else(|| invalid("missing C"))?;
        let dim = read_len(r)?;
        let scaler = match r.read_u8()? {
            0 => None,
            1 => {
                let mean = Array1::from(read_f64s(r)?);
                let scale = Array1::from(read_f64s(r)?);
                if mean.len() != dim || scale.len() != dim {
                    return Err(invalid("scaler dimension"));
                }
                Some(Standardizer { mean, scale })
            }
            _ => return Err(invalid("bad scaler flag")),
        };
        let count = read_len(r)?;
        if count > 3 {
            return Err(invalid("too many machines"));
        }
        let mut machines = Vec::with_capacity(count);
        for _ in 0..count {
            let class = SentimentClass::from_index(r.read_u8()? as usize)
                .ok_or_else(|| invalid("bad class index"))?;
            let rho = *read_f64s(r)?.first().ok_or_else(|| invalid("missing rho"))?;
            let n_sv = read_len(r)?;
            let coef = read_f64s(r)?;
            let flat = read_f64s(r)?;
            if coef.len() != n_sv || flat.len() != n_sv * dim {
                return Err(invalid("support vector block size"));
            }
            let support_vectors = Array2::from_shape_vec((n_sv, dim), flat).map_err(|e| invalid(e.to_string()))?;
            machines.push(BinarySvm {
                class,
                support_vectors,
                coef,
                rho,
                support_indices: Vec::new(),
                alpha: Vec::new(),
                iterations: 0,
            });
        }
        Ok(Self { kernel, c, dim, scaler, machines })
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

/// Stacks rows into an `n × d` matrix.
pub fn stack_rows(rows: &[Array1<f64>]) -> Result<Array2<f64>, SvmError> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(SvmError::ShapeMismatch(format!("row {i} has {} values, expected {d}", r.len())));
        }
        m.slice_mut(s![i, ..]).assign(r);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use SentimentClass::*;

    #[test]
    fn concat_contract() {
        let r = vec![0.5; 300];
        let p = vec![-1.0; 128];
        let f = concat_features(&r, &p).unwrap();
        assert_eq!(f.len(), 428);
        assert_eq!(f[299], 0.5);
        assert_eq!(f[300], -1.0);
        assert!(concat_features(&r[..299], &p).is_err());
        assert!(concat_features(&vec![0.0; 300], &vec![0.0; 128]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Array2::zeros((3, 2));
        let cfg = SvmConfig::default();
        assert!(matches!(train_svm(&x, &[Positive; 3], &cfg), Err(SvmError::SingleClassInput)));
        let bad_c = SvmConfig { c: 0.0, ..cfg };
        assert!(matches!(
            train_svm(&x, &[Positive, Negative, Positive], &bad_c),
            Err(SvmError::BadHyperparameter(_))
        ));
        assert!(train_svm(&x, &[Positive], &cfg).is_err());
    }

    #[test]
    fn degenerate_model_ties_to_negative() {
        let machine = |class| BinarySvm {
            class,
            support_vectors: Array2::zeros((0, 2)),
            coef: vec![],
            rho: 0.0,
            support_indices: vec![],
            alpha: vec![],
            iterations: 0,
        };
        let m = SvmModel {
            kernel: Kernel::Linear,
            c: 1.0,
            dim: 2,
            scaler: None,
            machines: vec![machine(Negative), machine(Neutral), machine(Positive)],
        };
        assert_eq!(m.predict(Array1::from(vec![1.0, 2.0]).view()).unwrap(), Negative);
        assert!(m.predict(Array1::from(vec![1.0]).view()).is_err());
    }

    #[test]
    fn three_blobs_fit_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let centers = [(-4.0, 0.0), (0.0, 4.0), (4.0, 0.0)];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, (cx, cy)) in centers.iter().enumerate() {
            for _ in 0..20 {
                rows.push(Array1::from(vec![cx + rng.gen_range(-1.0..1.0), cy + rng.gen_range(-1.0..1.0)]));
                labels.push(SentimentClass::from_index(c).unwrap());
            }
        }
        let x = stack_rows(&rows).unwrap();
        let model = train_svm(&x, &labels, &SvmConfig::default()).unwrap();
        assert_eq!(model.predict_rows(&x).unwrap(), labels);
        assert!(model.kkt_violation(&x, &labels).unwrap() <= 1e-3);
        for m in &model.machines {
            assert!(m.alpha.iter().all(|a| (0.0..=model.c).contains(a)));
        }

        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = SvmModel::read_from(&mut &buf[..]).unwrap();
        for row in x.rows() {
            assert_eq!(back.decision_values(row).unwrap(), model.decision_values(row).unwrap());
        }
    }

    proptest! {
        #[test]
        fn rbf_gram_is_symmetric_with_unit_diagonal(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..12),
            gamma in 0.01f64..3.0,
        ) {
            let rows: Vec<Array1<f64>> = pts.into_iter().map(Array1::from).collect();
            let k = Kernel::Rbf { gamma }.matrix(&stack_rows(&rows).unwrap());
            for i in 0..k.nrows() {
                prop_assert_eq!(k[[i, i]], 1.0);
                for j in 0..k.ncols() {
                    prop_assert_eq!(k[[i, j]], k[[j, i]]);
                }
            }
        }
    }
}
