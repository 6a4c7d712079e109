//! Plain recurrent network:
//!
//! ```text
//! u_t = U x_t + W s_{t-1} + b_h      s_t = f(u_t)
//! o_t = V s_t + b_o                  y_t = g(o_t)
//! ```
//!
//! with `s_0 = 0`, and its backward pass through time.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::ops::{sigmoid, softmax};
use super::{check_len, ParamSet, RnnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn apply(self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Self::Identity => x.clone(),
            Self::Tanh => x.mapv(f64::tanh),
            Self::Sigmoid => x.mapv(sigmoid),
            Self::Softmax => softmax(x),
        }
    }

    /// Vector-Jacobian product: given `out = self(pre)` and `upstream = dL/dout`,
    /// returns `dL/dpre`.
    pub fn backprop(self, out: &Array1<f64>, upstream: &Array1<f64>) -> Array1<f64> {
        match self {
            Self::Identity => upstream.clone(),
            Self::Tanh => upstream * &out.mapv(|y| 1.0 - y * y),
            Self::Sigmoid => upstream * &out.mapv(|y| y * (1.0 - y)),
            Self::Softmax => {
                let dot = out.dot(upstream);
                out * &(upstream - dot)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    /// hidden × input
    pub u: Array2<f64>,
    /// hidden × hidden
    pub w: Array2<f64>,
    /// output × hidden
    pub v: Array2<f64>,
    pub b_h: Array1<f64>,
    pub b_o: Array1<f64>,
    pub f: Activation,
    pub g: Activation,
}

impl RnnParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            u: Array2::zeros((hidden, input)),
            w: Array2::zeros((hidden, hidden)),
            v: Array2::zeros((output, hidden)),
            b_h: Array1::zeros(hidden),
            b_o: Array1::zeros(output),
            f: Activation::Tanh,
            g: Activation::Softmax,
        }
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input, hidden, output);
        for s in p.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = rng.gen_range(-scale..=scale));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn validate(&self) -> Result<(), RnnError> {
        let h = self.hidden_dim();
        check_len("W rows", self.w.nrows(), h)?;
        check_len("W cols", self.w.ncols(), h)?;
        check_len("V cols", self.v.ncols(), h)?;
        check_len("b_h", self.b_h.len(), h)?;
        check_len("b_o", self.b_o.len(), self.output_dim())
    }
}

impl ParamSet for RnnParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        [&self.u, &self.w, &self.v]
            .into_iter()
            .map(|m| m.as_slice().expect("standard layout"))
            .chain([&self.b_h, &self.b_o].into_iter().map(|v| v.as_slice().expect("contiguous")))
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Self { u, w, v, b_h, b_o, .. } = self;
        vec![
            u.as_slice_mut().expect("standard layout"),
            w.as_slice_mut().expect("standard layout"),
            v.as_slice_mut().expect("standard layout"),
            b_h.as_slice_mut().expect("contiguous"),
            b_o.as_slice_mut().expect("contiguous"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub u: Array1<f64>,
    pub s: Array1<f64>,
    pub o: Array1<f64>,
    pub y: Array1<f64>,
}

/// Per-step intermediates of a forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardTrace {
    pub steps: Vec<TraceStep>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Array1<f64>> {
        self.steps.iter().map(|s| &s.y)
    }
}

pub fn rnn_forward(params: &RnnParams, xs: &[Array1<f64>]) -> Result<ForwardTrace, RnnError> {
    params.validate()?;
    let mut s_prev = Array1::zeros(params.hidden_dim());
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        check_len("input", x.len(), params.input_dim())?;
        let u = params.u.dot(x) + params.w.dot(&s_prev) + &params.b_h;
        let s = params.f.apply(&u);
        let o = params.v.dot(&s) + &params.b_o;
        let y = params.g.apply(&o);
        s_prev = s.clone();
        steps.push(TraceStep { u, s, o, y });
    }
    Ok(ForwardTrace { steps })
}

/// Gradients of the loss with respect to every [`RnnParams`] array.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_u: Array2<f64>,
    pub d_w: Array2<f64>,
    pub d_v: Array2<f64>,
    pub d_b_h: Array1<f64>,
    pub d_b_o: Array1<f64>,
}

impl GradientSet {
    pub fn zeros_like(p: &RnnParams) -> Self {
        Self {
            d_u: Array2::zeros(p.u.raw_dim()),
            d_w: Array2::zeros(p.w.raw_dim()),
            d_v: Array2::zeros(p.v.raw_dim()),
            d_b_h: Array1::zeros(p.b_h.len()),
            d_b_o: Array1::zeros(p.b_o.len()),
        }
    }

    /// Same order as [`RnnParams::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.d_u.as_slice().expect("standard layout"),
            self.d_w.as_slice().expect("standard layout"),
            self.d_v.as_slice().expect("standard layout"),
            self.d_b_h.as_slice().expect("contiguous"),
            self.d_b_o.as_slice().expect("contiguous"),
        ]
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(ndarray::Axis(1));
    let b2 = b.view().insert_axis(ndarray::Axis(0));
    a2.dot(&b2)
}

/// Backpropagation through time.
///
/// `loss_grads[t]` is `dL/dy_t`. Walking `t = T..1` the pass accumulates
/// `do_t = g'(o_t)·dL/dy_t`, `dV += do_t s_tᵀ`, `ds_t += Vᵀ do_t`,
/// `du_t = f'(u_t)∘ds_t`, `dU += du_t x_tᵀ`, `dW += du_t s_{t-1}ᵀ` and carries
/// `ds_{t-1} = Wᵀ du_t` to the previous step.
pub fn rnn_bptt(
    params: &RnnParams,
    xs: &[Array1<f64>],
    loss_grads: &[Array1<f64>],
    trace: &ForwardTrace,
) -> Result<GradientSet, RnnError> {
    params.validate()?;
    check_len("trace length", trace.len(), xs.len())?;
    check_len("loss gradient count", loss_grads.len(), xs.len())?;
    let mut grads = GradientSet::zeros_like(params);
    let zero_state = Array1::zeros(params.hidden_dim());
    let mut ds_carry: Array1<f64> = Array1::zeros(params.hidden_dim());

    for t in (0..xs.len()).rev() {
        let step = &trace.steps[t];
        check_len("dL/dy", loss_grads[t].len(), params.output_dim())?;
        check_len("input", xs[t].len(), params.input_dim())?;
        let d_o = params.g.backprop(&step.y, &loss_grads[t]);
        grads.d_b_o += &d_o;
        grads.d_v += &outer(&d_o, &step.s);
        let ds = &ds_carry + &params.v.t().dot(&d_o);
        let du = params.f.backprop(&step.s, &ds);
        grads.d_u += &outer(&du, &xs[t]);
        grads.d_b_h += &du;
        let s_prev = if t == 0 { &zero_state } else { &trace.steps[t - 1].s };
        grads.d_w += &outer(&du, s_prev);
        ds_carry = params.w.t().dot(&du);
    }
    Ok(grads)
}

/// Summed cross-entropy over steps and `dL/dy_t` for a softmax-output network.
pub fn cross_entropy_loss_grads(
    trace: &ForwardTrace,
    targets: &[usize],
) -> Result<(f64, Vec<Array1<f64>>), RnnError> {
    check_len("targets", targets.len(), trace.len())?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(trace.len());
    for (step, &t) in trace.steps.iter().zip(targets) {
        loss += super::cross_entropy(&step.y, t)?;
        let mut g = Array1::zeros(step.y.len());
        g[t] = -1.0 / step.y[t].max(super::ops::PROB_EPS);
        grads.push(g);
    }
    Ok((loss, grads))
}
