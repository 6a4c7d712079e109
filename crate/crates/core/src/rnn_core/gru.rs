//! Gated recurrent unit.
//!
//! ```text
//! z = σ(W_z x + U_z h_prev + b_z)
//! r = σ(W_r x + U_r h_prev + b_r)
//! h̃ = tanh(W_h x + U_h (r ∘ h_prev) + b_h)
//! h = (1 − z) ∘ h_prev + z ∘ h̃
//! ```
//!
//! A sequence is unrolled from `h_0 = 0`, and every hidden state goes through
//! the same affine + softmax [`OutputProjection`] (a time-distributed dense layer).

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::ops::{sigmoid, softmax, PROB_EPS};
use super::{check_len, cross_entropy, ParamSet, RnnError};

/// `m += a bᵀ`
pub(crate) fn add_outer(m: &mut Array2<f64>, a: &Array1<f64>, b: ArrayView1<'_, f64>) {
    for (mut row, &ai) in m.axis_iter_mut(Axis(0)).zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, &b);
        }
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..=limit))
}

/// GRU parameters. The same struct doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_z: Array2<f64>,
    pub u_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_h: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_h: Array1<f64>,
}

/// Intermediates of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub z: Array1<f64>,
    pub r: Array1<f64>,
    pub candidate: Array1<f64>,
    pub h: Array1<f64>,
}

impl GruCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Array2::zeros((hidden, input)),
            u_z: Array2::zeros((hidden, hidden)),
            b_z: Array1::zeros(hidden),
            w_r: Array2::zeros((hidden, input)),
            u_r: Array2::zeros((hidden, hidden)),
            b_r: Array1::zeros(hidden),
            w_h: Array2::zeros((hidden, input)),
            u_h: Array2::zeros((hidden, hidden)),
            b_h: Array1::zeros(hidden),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_z: glorot(hidden, input, rng),
            u_z: glorot(hidden, hidden, rng),
            b_z: Array1::zeros(hidden),
            w_r: glorot(hidden, input, rng),
            u_r: glorot(hidden, hidden, rng),
            b_r: Array1::zeros(hidden),
            w_h: glorot(hidden, input, rng),
            u_h: glorot(hidden, hidden, rng),
            b_h: Array1::zeros(hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn validate(&self) -> Result<(), RnnError> {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        for (name, m, cols) in [
            ("W_r", &self.w_r, i),
            ("W_h", &self.w_h, i),
            ("U_z", &self.u_z, h),
            ("U_r", &self.u_r, h),
            ("U_h", &self.u_h, h),
        ] {
            check_len(&format!("{name} rows"), m.nrows(), h)?;
            check_len(&format!("{name} cols"), m.ncols(), cols)?;
        }
        for (name, b) in [("b_z", &self.b_z), ("b_r", &self.b_r), ("b_h", &self.b_h)] {
            check_len(name, b.len(), h)?;
        }
        Ok(())
    }

    fn check_inputs(&self, x: &Array1<f64>, h_prev: &Array1<f64>) -> Result<(), RnnError> {
        check_len("GRU input", x.len(), self.input_dim())?;
        check_len("GRU hidden state", h_prev.len(), self.hidden_dim())
    }

    pub fn step(&self, x: &Array1<f64>, h_prev: &Array1<f64>) -> Result<Array1<f64>, RnnError> {
        Ok(self.forward_step(x, h_prev)?.h)
    }

    pub fn forward_step(&self, x: &Array1<f64>, h_prev: &Array1<f64>) -> Result<GruStep, RnnError> {
        self.check_inputs(x, h_prev)?;
        let z = (self.w_z.dot(x) + self.u_z.dot(h_prev) + &self.b_z).mapv(sigmoid);
        let r = (self.w_r.dot(x) + self.u_r.dot(h_prev) + &self.b_r).mapv(sigmoid);
        let gated = &r * h_prev;
        let candidate = (self.w_h.dot(x) + self.u_h.dot(&gated) + &self.b_h).mapv(f64::tanh);
        let h = interpolate(h_prev, &z, &candidate);
        Ok(GruStep {
            x: x.clone(),
            h_prev: h_prev.clone(),
            z,
            r,
            candidate,
            h,
        })
    }

    /// Accumulates parameter gradients for one step into `grads` given
    /// `dh = dL/dh`, and returns `dL/dh_prev`.
    pub fn backward_step(&self, step: &GruStep, dh: &Array1<f64>, grads: &mut GruCell) -> Array1<f64> {
        let GruStep { x, h_prev, z, r, candidate, .. } = step;
        let dz = dh * &(candidate - h_prev);
        let dcand = dh * z;
        let mut dh_prev = dh * &z.mapv(|v| 1.0 - v);

        let da_h = dcand * &candidate.mapv(|c| 1.0 - c * c);
        let gated = r * h_prev;
        add_outer(&mut grads.w_h, &da_h, x.view());
        add_outer(&mut grads.u_h, &da_h, gated.view());
        grads.b_h += &da_h;
        let dgated = self.u_h.t().dot(&da_h);
        let dr = &dgated * h_prev;
        dh_prev += &(&dgated * r);

        let da_z = dz * &z.mapv(|v| v * (1.0 - v));
        add_outer(&mut grads.w_z, &da_z, x.view());
        add_outer(&mut grads.u_z, &da_z, h_prev.view());
        grads.b_z += &da_z;
        dh_prev += &self.u_z.t().dot(&da_z);

        let da_r = dr * r.mapv(|v| v * (1.0 - v));
        add_outer(&mut grads.w_r, &da_r, x.view());
        add_outer(&mut grads.u_r, &da_r, h_prev.view());
        grads.b_r += &da_r;
        dh_prev += &self.u_r.t().dot(&da_r);

        dh_prev
    }
}

/// `(1 − z) ∘ h_prev + z ∘ candidate`
pub fn interpolate(h_prev: &Array1<f64>, z: &Array1<f64>, candidate: &Array1<f64>) -> Array1<f64> {
    let mut h = h_prev.clone();
    ndarray::Zip::from(&mut h)
        .and(z)
        .and(candidate)
        .for_each(|h, &z, &c| *h = (1.0 - z) * *h + z * c);
    h
}

impl ParamSet for GruCell {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.w_z.as_slice().expect("standard layout"),
            self.u_z.as_slice().expect("standard layout"),
            self.b_z.as_slice().expect("contiguous"),
            self.w_r.as_slice().expect("standard layout"),
            self.u_r.as_slice().expect("standard layout"),
            self.b_r.as_slice().expect("contiguous"),
            self.w_h.as_slice().expect("standard layout"),
            self.u_h.as_slice().expect("standard layout"),
            self.b_h.as_slice().expect("contiguous"),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Self { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h } = self;
        vec![
            w_z.as_slice_mut().expect("standard layout"),
            u_z.as_slice_mut().expect("standard layout"),
            b_z.as_slice_mut().expect("contiguous"),
            w_r.as_slice_mut().expect("standard layout"),
            u_r.as_slice_mut().expect("standard layout"),
            b_r.as_slice_mut().expect("contiguous"),
            w_h.as_slice_mut().expect("standard layout"),
            u_h.as_slice_mut().expect("standard layout"),
            b_h.as_slice_mut().expect("contiguous"),
        ]
    }
}

/// Affine map from hidden state to class logits, followed by softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputProjection {
    /// classes × hidden
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl OutputProjection {
    pub fn zeros(hidden: usize, classes: usize) -> Self {
        Self {
            weight: Array2::zeros((classes, hidden)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot(classes, hidden, rng),
            bias: Array1::zeros(classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.ncols(), self.weight.nrows())
    }

    pub fn classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn distribution(&self, h: &Array1<f64>) -> Array1<f64> {
        softmax(&(self.weight.dot(h) + &self.bias))
    }
}

impl ParamSet for OutputProjection {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("contiguous"),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("contiguous"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruSequenceOutput {
    /// One class distribution per step.
    pub distributions: Vec<Array1<f64>>,
    /// Hidden state after every step; the last one is `h_T`.
    pub hiddens: Vec<Array1<f64>>,
}

impl GruSequenceOutput {
    pub fn final_hidden(&self) -> &Array1<f64> {
        self.hiddens.last().expect("non-empty sequence")
    }
}

fn check_projection(cell: &GruCell, proj: &OutputProjection) -> Result<(), RnnError> {
    cell.validate()?;
    check_len("projection cols", proj.weight.ncols(), cell.hidden_dim())?;
    check_len("projection bias", proj.bias.len(), proj.classes())
}

/// Runs the cell over `xs` from a zero state, emitting a softmax distribution per step.
pub fn gru_sequence(
    cell: &GruCell,
    proj: &OutputProjection,
    xs: &[Array1<f64>],
) -> Result<GruSequenceOutput, RnnError> {
    if xs.is_empty() {
        return Err(RnnError::EmptySequence);
    }
    check_projection(cell, proj)?;
    let mut h = Array1::zeros(cell.hidden_dim());
    let mut distributions = Vec::with_capacity(xs.len());
    let mut hiddens = Vec::with_capacity(xs.len());
    for x in xs {
        h = cell.step(x, &h)?;
        distributions.push(proj.distribution(&h));
        hiddens.push(h.clone());
    }
    Ok(GruSequenceOutput { distributions, hiddens })
}

/// Hidden states only (no projection); `h_0 = 0`.
pub fn gru_hidden_states(cell: &GruCell, xs: &[Array1<f64>]) -> Result<Vec<Array1<f64>>, RnnError> {
    let mut h = Array1::zeros(cell.hidden_dim());
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        h = cell.step(x, &h)?;
        out.push(h.clone());
    }
    Ok(out)
}

/// Summed per-step cross-entropy of a time-distributed softmax GRU.
pub fn sequence_loss(
    cell: &GruCell,
    proj: &OutputProjection,
    xs: &[Array1<f64>],
    targets: &[usize],
) -> Result<f64, RnnError> {
    check_len("targets", targets.len(), xs.len())?;
    let out = gru_sequence(cell, proj, xs)?;
    out.distributions
        .iter()
        .zip(targets)
        .map(|(d, &t)| cross_entropy(d, t))
        .sum()
}

/// Gradients of [`sequence_loss`] with respect to the cell and projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceGradients {
    pub loss: f64,
    pub cell: GruCell,
    pub projection: OutputProjection,
}

pub fn sequence_loss_grads(
    cell: &GruCell,
    proj: &OutputProjection,
    xs: &[Array1<f64>],
    targets: &[usize],
) -> Result<SequenceGradients, RnnError> {
    if xs.is_empty() {
        return Err(RnnError::EmptySequence);
    }
    check_projection(cell, proj)?;
    check_len("targets", targets.len(), xs.len())?;
    if let Some(&t) = targets.iter().find(|&&t| t >= proj.classes()) {
        return Err(RnnError::ShapeMismatch(format!(
            "target class {t} with {} output classes",
            proj.classes()
        )));
    }

    let mut steps = Vec::with_capacity(xs.len());
    let mut h = Array1::zeros(cell.hidden_dim());
    for x in xs {
        let step = cell.forward_step(x, &h)?;
        h = step.h.clone();
        steps.push(step);
    }

    let mut g_cell = cell.zeros_like();
    let mut g_proj = proj.zeros_like();
    let mut loss = 0.0;
    let mut dh_next: Array1<f64> = Array1::zeros(cell.hidden_dim());
    for (step, &target) in steps.iter().zip(targets).rev() {
        let dist = proj.distribution(&step.h);
        loss -= dist[target].max(PROB_EPS).ln();
        // softmax + cross-entropy: dL/dlogits = p − onehot
        let mut dlogits = dist;
        dlogits[target] -= 1.0;
        add_outer(&mut g_proj.weight, &dlogits, step.h.view());
        g_proj.bias += &dlogits;
        let dh = proj.weight.t().dot(&dlogits) + &dh_next;
        dh_next = cell.backward_step(step, &dh, &mut g_cell);
    }
    Ok(SequenceGradients {
        loss,
        cell: g_cell,
        projection: g_proj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec<R: Rng>(n: usize, rng: &mut R) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cell = GruCell::random(4, 3, &mut rng);
        cell.b_z.fill(-1e3);
        let h_prev = random_vec(3, &mut rng).mapv(|v| v * 0.9);
        let x = random_vec(4, &mut rng);
        let step = cell.forward_step(&x, &h_prev).unwrap();
        assert!(step.z.iter().all(|&z| z == 0.0));
        assert_eq!(step.h, h_prev);
        assert_eq!(interpolate(&h_prev, &Array1::zeros(3), &step.candidate), h_prev);
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cell = GruCell::random(5, 4, &mut rng);
        let h = cell.step(&Array1::zeros(5), &Array1::zeros(4)).unwrap();
        assert_eq!(h, Array1::<f64>::zeros(4));
    }

    #[test]
    fn step_shape_errors() {
        let cell = GruCell::zeros(3, 2);
        assert!(matches!(
            cell.step(&Array1::zeros(2), &Array1::zeros(2)),
            Err(RnnError::ShapeMismatch(_))
        ));
        assert!(matches!(
            cell.step(&Array1::zeros(3), &Array1::zeros(3)),
            Err(RnnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn sequence_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cell = GruCell::random(6, 128, &mut rng);
        let proj = OutputProjection::random(128, 5, &mut rng);
        let xs: Vec<_> = (0..4).map(|_| random_vec(6, &mut rng)).collect();
        let out = gru_sequence(&cell, &proj, &xs).unwrap();
        assert_eq!(out.final_hidden().len(), 128);
        for d in &out.distributions {
            assert!((d.sum() - 1.0).abs() < 1e-9);
        }
        for h in &out.hiddens {
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
        assert_eq!(gru_sequence(&cell, &proj, &[]), Err(RnnError::EmptySequence));

        let one = gru_sequence(&cell, &proj, &xs[..1]).unwrap();
        let h1 = cell.step(&xs[0], &Array1::zeros(128)).unwrap();
        assert_eq!(one.final_hidden(), &h1);
        assert_eq!(one.distributions[0], proj.distribution(&h1));
    }

    #[test]
    fn loss_grads_match_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cell = GruCell::random(3, 4, &mut rng);
        let proj = OutputProjection::random(4, 3, &mut rng);
        let xs: Vec<_> = (0..3).map(|_| random_vec(3, &mut rng)).collect();
        let targets = [0, 2, 1];
        let g = sequence_loss_grads(&cell, &proj, &xs, &targets).unwrap();
        let l = sequence_loss(&cell, &proj, &xs, &targets).unwrap();
        assert!((g.loss - l).abs() < 1e-12);
        assert!(sequence_loss_grads(&cell, &proj, &xs, &[0, 3, 1]).is_err());
    }
}
