//! Dense-layer, layer-norm, softmax, GELU, and attention primitives with
//! explicit backward passes. Everything is generic over f32/f64 so the same
//! code runs training at f32 and finite-difference checks at f64.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Element type of all model tensors.
pub trait Scalar:
    ndarray::LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + std::ops::AddAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lossy f64 -> F conversion of constants.
pub fn s<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("constant converts")
}

/// Fully connected layer parameters; `w` is `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }
}

/// Layer normalization parameters over the hidden dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gain: Array1<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn identity(width: usize) -> Self {
        Self {
            gain: Array1::ones(width),
            bias: Array1::zeros(width),
        }
    }
}

pub fn linear_forward<F: Scalar>(x: &Array2<F>, d: &Dense<F>) -> Array2<F> {
    x.dot(&d.w) + &d.b
}

/// Returns (dx, dw, db).
pub fn linear_backward<F: Scalar>(
    x: &Array2<F>,
    d: &Dense<F>,
    dy: &Array2<F>,
) -> (Array2<F>, Array2<F>, Array1<F>) {
    let dx = dy.dot(&d.w.t());
    let dw = x.t().dot(dy);
    let db = dy.sum_axis(Axis(0));
    (dx, dw, db)
}

pub const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LnCache<F> {
    pub xhat: Array2<F>,
    pub inv_std: Array1<F>,
}

/// Row-wise layer norm: `y = gain * (x - mean) / sqrt(var + eps) + bias`.
pub fn layernorm_forward<F: Scalar>(x: &Array2<F>, ln: &LayerNorm<F>) -> (Array2<F>, LnCache<F>) {
    let width = s::<F>(x.ncols() as f64);
    let eps = s::<F>(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, istd) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / width;
        let var = row.fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / width;
        let inv = (var + eps).sqrt().recip();
        row.mapv_inplace(|v| (v - mean) * inv);
        *istd = inv;
    }
    let y = &xhat * &ln.gain + &ln.bias;
    (y, LnCache { xhat, inv_std })
}

/// Returns (dx, dgain, dbias).
pub fn layernorm_backward<F: Scalar>(
    cache: &LnCache<F>,
    ln: &LayerNorm<F>,
    dy: &Array2<F>,
) -> (Array2<F>, Array1<F>, Array1<F>) {
    let width = s::<F>(dy.ncols() as f64);
    let dgain = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let dxhat = dy * &ln.gain;
    let mut dx = dxhat.clone();
    for ((mut row, xhat_row), (dxhat_row, &inv)) in dx
        .axis_iter_mut(Axis(0))
        .zip(cache.xhat.axis_iter(Axis(0)))
        .zip(dxhat.axis_iter(Axis(0)).zip(cache.inv_std.iter()))
    {
        let mean_d = dxhat_row.sum() / width;
        let mean_dx = dxhat_row
            .iter()
            .zip(xhat_row.iter())
            .fold(F::zero(), |acc, (&d, &h)| acc + d * h)
            / width;
        for ((v, &d), &h) in row.iter_mut().zip(dxhat_row.iter()).zip(xhat_row.iter()) {
            *v = inv * (d - mean_d - h * mean_dx);
        }
    }
    (dx, dgain, dbias)
}

/// Row-wise, max-shifted softmax.
pub fn softmax_rows<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Given softmax outputs `p` and upstream `dp`, returns dscores.
pub fn softmax_backward<F: Scalar>(p: &Array2<F>, dp: &Array2<F>) -> Array2<F> {
    let mut out = p.clone();
    for (mut row, (p_row, dp_row)) in out
        .axis_iter_mut(Axis(0))
        .zip(p.axis_iter(Axis(0)).zip(dp.axis_iter(Axis(0))))
    {
        let dot = p_row
            .iter()
            .zip(dp_row.iter())
            .fold(F::zero(), |acc, (&pv, &dv)| acc + pv * dv);
        for ((v, &pv), &dv) in row.iter_mut().zip(p_row.iter()).zip(dp_row.iter()) {
            *v = pv * (dv - dot);
        }
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Tanh-form GELU.
pub fn gelu<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    let c = s::<F>(GELU_C);
    let a = s::<F>(GELU_A);
    let half = s::<F>(0.5);
    x.mapv(|v| {
        let u = c * (v + a * v * v * v);
        half * v * (F::one() + u.tanh())
    })
}

pub fn gelu_backward<F: Scalar>(x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    let c = s::<F>(GELU_C);
    let a = s::<F>(GELU_A);
    let half = s::<F>(0.5);
    let three = s::<F>(3.0);
    let mut dx = x.clone();
    for (v, &g) in dx.iter_mut().zip(dy.iter()) {
        let x0 = *v;
        let u = c * (x0 + a * x0 * x0 * x0);
        let t = u.tanh();
        let sech2 = F::one() - t * t;
        let du = c * (F::one() + three * a * x0 * x0);
        *v = g * (half * (F::one() + t) + half * x0 * sech2 * du);
    }
    dx
}

/// Scaled dot-product attention for one (batch, head) slice.
/// `mask_bias` is a per-key additive bias (0 for real tokens, a large
/// negative value for padding). Returns (context, probabilities).
pub fn scaled_dot_attention<F: Scalar>(
    q: ArrayView2<'_, F>,
    k: ArrayView2<'_, F>,
    v: ArrayView2<'_, F>,
    mask_bias: ArrayView1<'_, F>,
) -> (Array2<F>, Array2<F>) {
    let scale = s::<F>(1.0 / (q.ncols() as f64).sqrt());
    let scores = q.dot(&k.t()) * scale + mask_bias;
    let probs = softmax_rows(&scores);
    let ctx = probs.dot(&v);
    (ctx, probs)
}

/// Inverted dropout. Returns the output and, in training mode, the mask
/// (entries are 0 or 1/(1-p)) needed by the backward pass.
pub fn dropout_forward<F: Scalar>(
    x: &Array2<F>,
    p: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array2<F>, Option<Array2<F>>) {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = s::<F>(1.0 / (1.0 - p));
            let mask = Array2::from_shape_fn(x.dim(), |_| {
                if rng.gen::<f64>() < p {
                    F::zero()
                } else {
                    keep
                }
            });
            (x * &mask, Some(mask))
        }
        _ => (x.clone(), None),
    }
}

pub fn dropout_backward<F: Scalar>(dy: &Array2<F>, mask: &Option<Array2<F>>) -> Array2<F> {
    match mask {
        Some(mask) => dy * mask,
        None => dy.clone(),
    }
}
