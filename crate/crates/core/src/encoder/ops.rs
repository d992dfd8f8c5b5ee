//! Dense row-major kernels used by the encoder forward and backward passes.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Float type the encoder is generic over: `f32` for training, `f64` for
/// finite-difference checking.
pub trait Scalar: Float + Default + Debug + Sum + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("representable constant")
    }
    fn as_f64(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `out (n×m) = a (n×k) · b (k×m)`, overwriting `out`.
pub fn matmul<F: Scalar>(a: &[F], b: &[F], n: usize, k: usize, m: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    out.fill(F::zero());
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let s = a[i * k + p];
            if s == F::zero() {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + s * bv;
            }
        }
    }
}

/// `out (n×k) += g (n×m) · w^T` where `w` is `k×m`.
pub fn matmul_bt_acc<F: Scalar>(g: &[F], w: &[F], n: usize, m: usize, k: usize, out: &mut [F]) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let wrow = &w[p * m..(p + 1) * m];
            let dot: F = grow.iter().zip(wrow).map(|(&x, &y)| x * y).sum();
            out[i * k + p] = out[i * k + p] + dot;
        }
    }
}

/// `dw (k×m) += a^T (k×n) · g (n×m)`.
pub fn matmul_at_acc<F: Scalar>(a: &[F], g: &[F], n: usize, k: usize, m: usize, dw: &mut [F]) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let s = a[i * k + p];
            if s == F::zero() {
                continue;
            }
            let drow = &mut dw[p * m..(p + 1) * m];
            for (d, &gv) in drow.iter_mut().zip(grow) {
                *d = *d + s * gv;
            }
        }
    }
}

pub fn add_bias<F: Scalar>(x: &mut [F], bias: &[F]) {
    for row in x.chunks_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
}

pub fn colsum_acc<F: Scalar>(g: &[F], width: usize, out: &mut [F]) {
    for row in g.chunks(width) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm. Returns (output, normalized input, 1/std per row).
pub fn layer_norm<F: Scalar>(x: &[F], gamma: &[F], beta: &[F]) -> (Vec<F>, Vec<F>, Vec<F>) {
    let d = gamma.len();
    let n = x.len() / d;
    let mut y = vec![F::zero(); x.len()];
    let mut xhat = vec![F::zero(); x.len()];
    let mut rstd = vec![F::zero(); n];
    let inv_d = F::of(1.0 / d as f64);
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<F>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
        let r = F::one() / (var + F::of(LN_EPS)).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = h * gamma[j] + beta[j];
        }
    }
    (y, xhat, rstd)
}

/// Backward of [`layer_norm`]; accumulates into `dgamma`/`dbeta` and adds the
/// input gradient into `dx`.
pub fn layer_norm_backward<F: Scalar>(
    dy: &[F],
    xhat: &[F],
    rstd: &[F],
    gamma: &[F],
    dgamma: &mut [F],
    dbeta: &mut [F],
    dx: &mut [F],
) {
    let d = gamma.len();
    let inv_d = F::of(1.0 / d as f64);
    let mut dxhat = vec![F::zero(); d];
    for (i, &r) in rstd.iter().enumerate() {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = F::zero();
        let mut mean_dxhat_xhat = F::zero();
        for j in 0..d {
            dgamma[j] = dgamma[j] + dyr[j] * xh[j];
            dbeta[j] = dbeta[j] + dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            mean_dxhat = mean_dxhat + dxhat[j];
            mean_dxhat_xhat = mean_dxhat_xhat + dxhat[j] * xh[j];
        }
        mean_dxhat = mean_dxhat * inv_d;
        mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
        for j in 0..d {
            let v = r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
            dx[i * d + j] = dx[i * d + j] + v;
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// tanh-approximated GELU.
pub fn gelu<F: Scalar>(u: F) -> F {
    let t = (F::of(GELU_C) * (u + F::of(GELU_K) * u * u * u)).tanh();
    F::of(0.5) * u * (F::one() + t)
}

pub fn gelu_grad<F: Scalar>(u: F) -> F {
    let t = (F::of(GELU_C) * (u + F::of(GELU_K) * u * u * u)).tanh();
    let ds = F::of(GELU_C) * (F::one() + F::of(3.0 * GELU_K) * u * u);
    F::of(0.5) * (F::one() + t) + F::of(0.5) * u * (F::one() - t * t) * ds
}

/// In-place numerically stable softmax over one row.
pub fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}
