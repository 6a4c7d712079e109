//! Central finite-difference verification of the analytic gradients.
//!
//! The numeric side only ever evaluates forward losses, so it stays
//! independent of the backward code it checks.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gru::{sequence_loss, sequence_loss_grads, GruCell, OutputProjection};
use super::rnn::{cross_entropy_loss_grads, rnn_bptt, rnn_forward, RnnParams};
use super::ParamSet;

/// Outer step of the extrapolated central difference. The estimate is
/// `(4·C(h/2) − C(h)) / 3` with `C(h) = (L(θ+h) − L(θ−h)) / 2h`, which cancels the
/// `h²` truncation term and so tolerates a step large enough to keep rounding
/// noise well under 1e-5 relative on partials of order 1e-6.
pub const FD_STEP: f64 = 2e-3;
/// Denominator floor for the relative error of near-zero partials.
pub const REL_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Largest relative error between `analytic` and central differences of `loss`
/// over every parameter entry of `params`.
pub fn max_relative_error<P, F>(params: &P, analytic: &[&[f64]], loss: F) -> (f64, usize)
where
    P: ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let sizes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
    assert_eq!(sizes.len(), analytic.len(), "analytic gradient arrays");
    for (a, &n) in sizes.iter().enumerate() {
        assert_eq!(analytic[a].len(), n, "analytic gradient {a} length");
        for i in 0..n {
            let orig = probe.param_slices()[a][i];
            let mut central = |h: f64| {
                probe.param_slices_mut()[a][i] = orig + h;
                let plus = loss(&probe);
                probe.param_slices_mut()[a][i] = orig - h;
                let minus = loss(&probe);
                probe.param_slices_mut()[a][i] = orig;
                (plus - minus) / (2.0 * h)
            };
                        let numeric = (4.0 * central(FD_STEP / 2.0) - central(FD_STEP)) / 3.0;
            worst = worst.max(relative_error(analytic[a][i], numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSummary {
    pub instances: usize,
    pub partials: usize,
    pub max_rel_error: f64,
}

fn random_inputs<R: Rng>(len: usize, dim: usize, rng: &mut R) -> Vec<Array1<f64>> {
    (0..len)
        .map(|_| Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Random plain RNNs (tanh hidden, softmax output, summed cross-entropy).
pub fn check_rnn(instances: usize, seed: u64) -> GradcheckSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = GradcheckSummary { instances, partials: 0, max_rel_error: 0.0 };
    for _ in 0..instances {
        let input = rng.gen_range(1..=3);
        let hidden = rng.gen_range(2..=4);
        let output = rng.gen_range(2..=3);
        let steps = rng.gen_range(1..=4);
        let params = RnnParams::random(input, hidden, output, 0.8, &mut rng);
        let xs = random_inputs(steps, input, &mut rng);
        let targets: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..output)).collect();

        let trace = rnn_forward(&params, &xs).expect("consistent shapes");
        let (_, dl_dy) = cross_entropy_loss_grads(&trace, &targets).expect("valid targets");
        let grads = rnn_bptt(&params, &xs, &dl_dy, &trace).expect("consistent shapes");
        let (err, n) = max_relative_error(&params, &grads.slices(), |p| {
            let trace = rnn_forward(p, &xs).expect("consistent shapes");
            cross_entropy_loss_grads(&trace, &targets).expect("valid targets").0
        });
        summary.partials += n;
        summary.max_rel_error = summary.max_rel_error.max(err);
    }
    summary
}

#[derive(Debug, Clone, PartialEq)]
struct GruWithProjection {
    cell: GruCell,
    proj: OutputProjection,
}

impl ParamSet for GruWithProjection {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.cell.param_slices();
        v.extend(self.proj.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.cell.param_slices_mut();
        v.extend(self.proj.param_slices_mut());
        v
    }
}

/// Random GRUs unrolled for `steps` steps with a time-distributed softmax and
/// summed cross-entropy.
pub fn check_gru(instances: usize, steps: usize, seed: u64) -> GradcheckSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = GradcheckSummary { instances, partials: 0, max_rel_error: 0.0 };
    for _ in 0..instances {
        let input = rng.gen_range(1..=4);
        let hidden = rng.gen_range(2..=4);
        let classes = rng.gen_range(2..=5);
        let mut model = GruWithProjection {
            cell: GruCell::random(input, hidden, &mut rng),
            proj: OutputProjection::random(hidden, classes, &mut rng),
        };
        // non-zero biases so every bias partial is exercised away from symmetry
        for b in [&mut model.cell.b_z, &mut model.cell.b_r, &mut model.cell.b_h, &mut model.proj.bias] {
            b.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let xs = random_inputs(steps, input, &mut rng);
        let targets: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..classes)).collect();

        let grads = sequence_loss_grads(&model.cell, &model.proj, &xs, &targets).expect("shapes");
        let analytic = GruWithProjection { cell: grads.cell, proj: grads.projection };
        let (err, n) = max_relative_error(&model, &analytic.param_slices(), |m| {
            sequence_loss(&m.cell, &m.proj, &xs, &targets).expect("shapes")
        });
        summary.partials += n;
        summary.max_rel_error = summary.max_rel_error.max(err);
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rnn_gradients_match_finite_differences() {
        let s = check_rnn(20, 1);
        assert!(s.max_rel_error <= 1e-5, "{s:?}");
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let s = check_gru(20, 3, 2);
        assert!(s.max_rel_error <= 1e-5, "{s:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let p = RnnParams::random(2, 2, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(0));
        let xs = random_inputs(2, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let trace = rnn_forward(&p, &xs).unwrap();
        let (_, dl) = cross_entropy_loss_grads(&trace, &[0, 1]).unwrap();
        let mut g = rnn_bptt(&p, &xs, &dl, &trace).unwrap();
        g.d_w[[0, 1]] += 0.01;
        let (err, _) = max_relative_error(&p, &g.slices(), |p| {
            let t = rnn_forward(p, &xs).unwrap();
            cross_entropy_loss_grads(&t, &[0, 1]).unwrap().0
        });
        assert!(err > 1e-3);
    }
}
