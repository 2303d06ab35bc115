//! Forward and backward kernels for every differentiable operation.
//!
//! Convolution kernels split their work over independent output planes.
//! Under the `parallel` feature those planes go to rayon; each output
//! element is still produced by exactly one task with a fixed inner loop
//! order, so results are bit-identical to the serial path.

use alloc::format;

use super::scalar::Real;
use super::tensor::{Tensor, TensorError};

/// Probability floor inside cross entropy; cells at or below it contribute
/// a clamped loss and zero gradient.
const CE_EPS: f64 = 1e-12;

/// Output size of a convolution along one axis, or `None` when the kernel
/// does not fit. Uses the standard floor convention
/// `(input + 2*pad - k) / stride + 1`.
pub fn conv2d_output_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Runs `f` once per `plane_len`-sized chunk of `data`, in parallel when
/// the `parallel` feature is enabled.
fn for_each_plane<S, F>(data: &mut [S], plane_len: usize, f: F)
where
    S: Real,
    F: Fn(usize, &mut [S]) + Send + Sync,
{
    debug_assert_eq!(data.len() % plane_len.max(1), 0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(plane_len).enumerate().for_each(|(i, chunk)| f(i, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, chunk) in data.chunks_mut(plane_len).enumerate() {
            f(i, chunk);
        }
    }
}

/// Valid output range `[lo, hi)` along one axis such that
/// `out*stride + offset` stays inside `[0, input)`.
#[inline]
fn valid_range(out_len: usize, stride: usize, offset: isize, input: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset < 0 { ((-offset + s - 1) / s) as usize } else { 0 };
    let max_in = input as isize - 1 - offset;
    if max_in < 0 {
        return (0, 0);
    }
    let hi = ((max_in / s) + 1) as usize;
    (lo.min(out_len), hi.min(out_len))
}

fn check_conv_shapes<S: Real>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize), TensorError> {
    let (xd, wd) = (x.dims(), w.dims());
    let shape_err = |detail: alloc::string::String| TensorError::ShapeMismatch {
        op: "conv2d",
        detail,
    };
    if xd.len() != 3 || wd.len() != 4 || b.dims().len() != 1 {
        return Err(shape_err(format!(
            "expected x[C,H,W], w[Co,Ci,k,k], b[Co]; got x{:?} w{:?} b{:?}",
            xd,
            wd,
            b.dims()
        )));
    }
    let (cin, h, wdt) = (xd[0], xd[1], xd[2]);
    let (cout, k) = (wd[0], wd[2]);
    if wd[1] != cin || wd[3] != k || b.dims()[0] != cout {
        return Err(shape_err(format!(
            "x{:?} incompatible with w{:?} / b{:?}",
            xd,
            wd,
            b.dims()
        )));
    }
    if k % 2 == 0 {
        return Err(shape_err(format!("kernel size {k} must be odd")));
    }
    let ho = conv2d_output_dim(h, k, stride, pad);
    let wo = conv2d_output_dim(wdt, k, stride, pad);
    match (ho, wo) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 => Ok((cin, h, wdt, cout, k, ho, wo)),
        _ => Err(shape_err(format!(
            "kernel {k} with stride {stride}, pad {pad} does not fit input {h}x{wdt}"
        ))),
    }
}

/// Cross-correlation of `x[Ci,H,W]` with `w[Co,Ci,k,k]` plus bias.
pub(super) fn conv2d_forward<S: Real>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<S>, TensorError> {
    let (cin, h, win, cout, k, ho, wo) = check_conv_shapes(x, w, b, stride, pad)?;
    let mut out = Tensor::zeros(&[cout, ho, wo]);
    let xs = x.data();
    let ws = w.data();
    let bs = b.data();
    let pad = pad as isize;

    for_each_plane(out.data_mut(), ho * wo, |co, plane| {
        let bias = bs[co];
        for v in plane.iter_mut() {
            *v = bias;
        }
        for ci in 0..cin {
            let xplane = &xs[ci * h * win..(ci + 1) * h * win];
            for ky in 0..k {
                let oy_off = ky as isize - pad;
                let (oy_lo, oy_hi) = valid_range(ho, stride, oy_off, h);
                for kx in 0..k {
                    let wv = ws[((co * cin + ci) * k + ky) * k + kx];
                    let ox_off = kx as isize - pad;
                    let (ox_lo, ox_hi) = valid_range(wo, stride, ox_off, win);
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * stride) as isize + oy_off;
                        let in_row = &xplane[iy as usize * win..(iy as usize + 1) * win];
                        let out_row = &mut plane[oy * wo..(oy + 1) * wo];
                        if stride == 1 {
                            // Contiguous slices let the axpy vectorize.
                            let ix_lo = (ox_lo as isize + ox_off) as usize;
                            let src = &in_row[ix_lo..ix_lo + (ox_hi - ox_lo)];
                            let dst = &mut out_row[ox_lo..ox_hi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * *s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ((ox * stride) as isize + ox_off) as usize;
                                out_row[ox] += wv * in_row[ix];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of the convolution with respect to input, weights, and bias.
pub(super) fn conv2d_backward<S: Real>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let xd = x.dims();
    let wd = w.dims();
    let (cin, h, win) = (xd[0], xd[1], xd[2]);
    let (cout, k) = (wd[0], wd[2]);
    let (ho, wo) = (dy.dims()[1], dy.dims()[2]);
    let pad_i = pad as isize;
    let xs = x.data();
    let ws = w.data();
    let dys = dy.data();

    let mut db = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let mut acc = S::ZERO;
        for v in &dys[co * ho * wo..(co + 1) * ho * wo] {
            acc += *v;
        }
        db.data_mut()[co] = acc;
    }

    let mut dw = Tensor::zeros(&[cout, cin, k, k]);
    for_each_plane(dw.data_mut(), cin * k * k, |co, chunk| {
        let dyplane = &dys[co * ho * wo..(co + 1) * ho * wo];
        for ci in 0..cin {
            let xplane = &xs[ci * h * win..(ci + 1) * h * win];
            for ky in 0..k {
                let oy_off = ky as isize - pad_i;
                let (oy_lo, oy_hi) = valid_range(ho, stride, oy_off, h);
                for kx in 0..k {
                    let ox_off = kx as isize - pad_i;
                    let (ox_lo, ox_hi) = valid_range(wo, stride, ox_off, win);
                    let mut acc = S::ZERO;
                    for oy in oy_lo..oy_hi {
                        let iy = ((oy * stride) as isize + oy_off) as usize;
                        let in_row = &xplane[iy * win..(iy + 1) * win];
                        let dy_row = &dyplane[oy * wo..(oy + 1) * wo];
                        if stride == 1 {
                            let ix_lo = (ox_lo as isize + ox_off) as usize;
                            let src = &in_row[ix_lo..ix_lo + (ox_hi - ox_lo)];
                            for (d, s) in dy_row[ox_lo..ox_hi].iter().zip(src) {
                                acc += *d * *s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ((ox * stride) as isize + ox_off) as usize;
                                acc += dy_row[ox] * in_row[ix];
                            }
                        }
                    }
                    chunk[(ci * k + ky) * k + kx] = acc;
                }
            }
        }
    });

    let mut dx = Tensor::zeros(&[cin, h, win]);
    for_each_plane(dx.data_mut(), h * win, |ci, xgrad| {
        for co in 0..cout {
            let dyplane = &dys[co * ho * wo..(co + 1) * ho * wo];
            for ky in 0..k {
                let oy_off = ky as isize - pad_i;
                let (oy_lo, oy_hi) = valid_range(ho, stride, oy_off, h);
                for kx in 0..k {
                    let wv = ws[((co * cin + ci) * k + ky) * k + kx];
                    let ox_off = kx as isize - pad_i;
                    let (ox_lo, ox_hi) = valid_range(wo, stride, ox_off, win);
                    for oy in oy_lo..oy_hi {
                        let iy = ((oy * stride) as isize + oy_off) as usize;
                        let dy_row = &dyplane[oy * wo..(oy + 1) * wo];
                        let xg_row = &mut xgrad[iy * win..(iy + 1) * win];
                        if stride == 1 {
                            let ix_lo = (ox_lo as isize + ox_off) as usize;
                            let dst = &mut xg_row[ix_lo..ix_lo + (ox_hi - ox_lo)];
                            for (d, s) in dst.iter_mut().zip(&dy_row[ox_lo..ox_hi]) {
                                *d += wv * *s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ((ox * stride) as isize + ox_off) as usize;
                                xg_row[ix] += wv * dy_row[ox];
                            }
                        }
                    }
                }
            }
        }
    });

    (dx, dw, db)
}

/// Nearest-neighbor upsampling of `[C,H,W]` by an integer factor.
pub(super) fn upsample_forward<S: Real>(x: &Tensor<S>, factor: usize) -> Tensor<S> {
    let d = x.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let (ho, wo) = (h * factor, w * factor);
    let mut out = Tensor::zeros(&[c, ho, wo]);
    let xs = x.data();
    for ci in 0..c {
        for oy in 0..ho {
            let in_row = &xs[(ci * h + oy / factor) * w..];
            let out_row = &mut out.data_mut()[(ci * ho + oy) * wo..(ci * ho + oy + 1) * wo];
            for (ox, v) in out_row.iter_mut().enumerate() {
                *v = in_row[ox / factor];
            }
        }
    }
    out
}

/// Gradient of nearest-neighbor upsampling: each input cell collects the
/// gradients of the `factor x factor` block it fed.
pub(super) fn upsample_backward<S: Real>(
    dy: &Tensor<S>,
    factor: usize,
    in_dims: &[usize],
) -> Tensor<S> {
    let (c, h, w) = (in_dims[0], in_dims[1], in_dims[2]);
    let (ho, wo) = (h * factor, w * factor);
    let mut dx = Tensor::zeros(in_dims);
    let dys = dy.data();
    for ci in 0..c {
        for oy in 0..ho {
            let dy_row = &dys[(ci * ho + oy) * wo..(ci * ho + oy + 1) * wo];
            let dx_row = &mut dx.data_mut()[(ci * h + oy / factor) * w..];
            for ox in 0..wo {
                dx_row[ox / factor] += dy_row[ox];
            }
        }
    }
    dx
}

/// `x` where positive, `slope * x` otherwise.
pub(super) fn leaky_relu_forward<S: Real>(x: &Tensor<S>, slope: S) -> Tensor<S> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if !(*v > S::ZERO) {
            *v *= slope;
        }
    }
    out
}

/// Pass-through gradient on the positive side, `slope` elsewhere (the
/// subgradient at exactly zero is `slope`).
pub(super) fn leaky_relu_backward<S: Real>(x: &Tensor<S>, dy: &Tensor<S>, slope: S) -> Tensor<S> {
    let mut dx = dy.clone();
    for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
        if !(*v > S::ZERO) {
            *g *= slope;
        }
    }
    dx
}

/// Softmax across the class axis of `[G,K,H,W]`, independently per group
/// and spatial cell, with the usual max subtraction for stability.
pub(super) fn softmax_groups_forward<S: Real>(x: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
    let d = x.dims();
    if d.len() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_groups",
            detail: format!("expected [G,K,H,W], got {:?}", d),
        });
    }
    let (g, k, hw) = (d[0], d[1], d[2] * d[3]);
    let mut out = x.clone();
    let data = out.data_mut();
    for gi in 0..g {
        let base = gi * k * hw;
        for cell in 0..hw {
            let mut m = data[base + cell];
            for ki in 1..k {
                m = m.max(data[base + ki * hw + cell]);
            }
            let mut sum = S::ZERO;
            for ki in 0..k {
                let idx = base + ki * hw + cell;
                let e = (data[idx] - m).exp();
                data[idx] = e;
                sum += e;
            }
            for ki in 0..k {
                let idx = base + ki * hw + cell;
                data[idx] = data[idx] / sum;
            }
        }
    }
    Ok(out)
}

/// Jacobian-vector product of softmax: `dx = p * (dy - sum(p * dy))` per
/// group and cell.
pub(super) fn softmax_groups_backward<S: Real>(p: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let d = p.dims();
    let (g, k, hw) = (d[0], d[1], d[2] * d[3]);
    let mut dx = Tensor::zeros(d);
    let ps = p.data();
    let dys = dy.data();
    for gi in 0..g {
        let base = gi * k * hw;
        for cell in 0..hw {
            let mut dot = S::ZERO;
            for ki in 0..k {
                let idx = base + ki * hw + cell;
                dot += ps[idx] * dys[idx];
            }
            for ki in 0..k {
                let idx = base + ki * hw + cell;
                dx.data_mut()[idx] = ps[idx] * (dys[idx] - dot);
            }
        }
    }
    dx
}

/// Class-weighted cross entropy over probabilities `[G,K,H,W]` with labels
/// `[G,H,W]`: per group the mean over cells of `w[label] * -ln p[label]`,
/// then summed across groups.
pub(super) fn weighted_ce_forward<S: Real>(
    p: &Tensor<S>,
    labels: &[u8],
    weights: &[S],
) -> Result<S, TensorError> {
    let d = p.dims();
    if d.len() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            detail: format!("expected probs [G,K,H,W], got {:?}", d),
        });
    }
    let (g, k, hw) = (d[0], d[1], d[2] * d[3]);
    if labels.len() != g * hw || weights.len() != k {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            detail: format!(
                "probs {:?} need {} labels and {} weights, got {} and {}",
                d,
                g * hw,
                k,
                labels.len(),
                weights.len()
            ),
        });
    }
    let eps = S::from_f64(CE_EPS);
    let ps = p.data();
    let mut total = S::ZERO;
    let inv_cells = S::ONE / S::from_f64(hw as f64);
    for gi in 0..g {
        let mut group = S::ZERO;
        for cell in 0..hw {
            let label = labels[gi * hw + cell];
            if label as usize >= k {
                return Err(TensorError::LabelOutOfRange { label, classes: k });
            }
            let prob = ps[(gi * k + label as usize) * hw + cell].max(eps);
            group += weights[label as usize] * -prob.ln();
        }
        total += group * inv_cells;
    }
    Ok(total)
}

/// Gradient of the weighted cross entropy with respect to probabilities:
/// `-w[label] / (p * cells)` at the label class, zero elsewhere and for
/// clamped cells.
pub(super) fn weighted_ce_backward<S: Real>(
    p: &Tensor<S>,
    labels: &[u8],
    weights: &[S],
    upstream: S,
) -> Tensor<S> {
    let d = p.dims();
    let (g, k, hw) = (d[0], d[1], d[2] * d[3]);
    let eps = S::from_f64(CE_EPS);
    let inv_cells = S::ONE / S::from_f64(hw as f64);
    let mut dp = Tensor::zeros(d);
    let ps = p.data();
    for gi in 0..g {
        for cell in 0..hw {
            let label = labels[gi * hw + cell] as usize;
            let idx = (gi * k + label) * hw + cell;
            if ps[idx] > eps {
                dp.data_mut()[idx] = -upstream * weights[label] * inv_cells / ps[idx];
            }
        }
    }
    dp
}

/// Generator objective of least-squares GAN: `mean((s - 1)^2)`.
pub(super) fn lsgan_gen_forward<S: Real>(scores: &Tensor<S>) -> S {
    let n = S::from_f64(scores.len() as f64);
    let mut acc = S::ZERO;
    for &s in scores.data() {
        let d = s - S::ONE;
        acc += d * d;
    }
    acc / n
}

pub(super) fn lsgan_gen_backward<S: Real>(scores: &Tensor<S>, upstream: S) -> Tensor<S> {
    let scale = upstream * S::from_f64(2.0 / scores.len() as f64);
    let mut ds = scores.clone();
    for v in ds.data_mut() {
        *v = scale * (*v - S::ONE);
    }
    ds
}

/// Discriminator objective: `mean((real - 1)^2) + mean(fake^2)`.
pub(super) fn lsgan_disc_forward<S: Real>(real: &Tensor<S>, fake: &Tensor<S>) -> S {
    let mut acc = S::ZERO;
    for &s in real.data() {
        let d = s - S::ONE;
        acc += d * d;
    }
    let real_term = acc / S::from_f64(real.len() as f64);
    let mut acc = S::ZERO;
    for &s in fake.data() {
        acc += s * s;
    }
    real_term + acc / S::from_f64(fake.len() as f64)
}

pub(super) fn lsgan_disc_backward<S: Real>(
    real: &Tensor<S>,
    fake: &Tensor<S>,
    upstream: S,
) -> (Tensor<S>, Tensor<S>) {
    let rs = upstream * S::from_f64(2.0 / real.len() as f64);
    let mut dr = real.clone();
    for v in dr.data_mut() {
        *v = rs * (*v - S::ONE);
    }
    let fs = upstream * S::from_f64(2.0 / fake.len() as f64);
    let mut df = fake.clone();
    for v in df.data_mut() {
        *v = fs * *v;
    }
    (dr, df)
}
