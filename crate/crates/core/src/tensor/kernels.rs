//! Forward and adjoint kernels behind the tape operations.

use super::{FftPlan, Real, Tensor};
use num_complex::Complex;

/// Splits `shape` at `axis` into `(outer, len, inner)` element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[inline]
pub(crate) fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * *b;
    }
}

/// `y += Σ a[k]·x[k]` over four sources in one pass.
#[inline]
pub(crate) fn axpy4<T: Real>(y: &mut [T], a: [T; 4], x: [&[T]; 4]) {
    let n = y.len();
    let (x0, x1, x2, x3) = (&x[0][..n], &x[1][..n], &x[2][..n], &x[3][..n]);
    for k in 0..n {
        y[k] += a[0] * x0[k] + a[1] * x1[k] + a[2] * x2[k] + a[3] * x3[k];
    }
}

/// `y += Σ_i w[i]·x_i` where `x_i = src(i)`.
#[inline]
fn accumulate<'a, T: Real>(y: &mut [T], w: impl Fn(usize) -> T, src: impl Fn(usize) -> &'a [T], count: usize) {
    let mut i = 0;
    while i + 4 <= count {
        axpy4(y, [w(i), w(i + 1), w(i + 2), w(i + 3)], [src(i), src(i + 1), src(i + 2), src(i + 3)]);
        i += 4;
    }
    for i in i..count {
        axpy(y, w(i), src(i));
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    let mut tail = T::zero();
    for (a, b) in xr.iter().zip(yr) {
        tail += *a * *b;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `[B, Ci, ...] × [Co, Ci] + [Co] → [B, Co, ...]`.
pub(crate) fn pointwise<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let (batch, ci, p) = (x.shape[0], x.shape[1], x.shape[2..].iter().product::<usize>());
    let co = w.shape[0];
    let mut shape = x.shape.clone();
    shape[1] = co;
    let mut out = Tensor::zeros(&shape);
    for bi in 0..batch {
        let xb = &x.data[bi * ci * p..(bi + 1) * ci * p];
        for o in 0..co {
            let y = &mut out.data[(bi * co + o) * p..(bi * co + o + 1) * p];
            if let Some(b) = b {
                y.fill(b.data[o]);
            }
            accumulate(y, |i| w.data[o * ci + i], |i| &xb[i * p..(i + 1) * p], ci);
        }
    }
    out
}

pub(crate) fn pointwise_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    need_x: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let (batch, ci, p) = (x.shape[0], x.shape[1], x.shape[2..].iter().product::<usize>());
    let co = w.shape[0];
    let mut gw = Tensor::zeros(&w.shape);
    let mut gb = Tensor::zeros(&[co]);
    let mut gx = need_x.then(|| Tensor::zeros(&x.shape));
    for bi in 0..batch {
        let xb = &x.data[bi * ci * p..(bi + 1) * ci * p];
        for o in 0..co {
            let go = &g.data[(bi * co + o) * p..(bi * co + o + 1) * p];
            gb.data[o] += go.iter().copied().sum::<T>();
            for i in 0..ci {
                gw.data[o * ci + i] += dot(go, &xb[i * p..(i + 1) * p]);
            }
        }
        if let Some(gx) = gx.as_mut() {
            for i in 0..ci {
                let dst = &mut gx.data[(bi * ci + i) * p..(bi * ci + i + 1) * p];
                let gb = &g.data[bi * co * p..(bi + 1) * co * p];
                accumulate(dst, |o| w.data[o * ci + i], |o| &gb[o * p..(o + 1) * p], co);
            }
        }
    }
    (gx, gw, gb)
}

/// Valid index range `lo..hi` of output positions for a tap offset `d ∈ {-1, 0, 1}`.
#[inline]
fn tap_range(len: usize, d: isize) -> (usize, usize) {
    match d {
        -1 => (1, len),
        1 => (0, len.saturating_sub(1)),
        _ => (0, len),
    }
}

/// Per-channel 3×3 convolution with zero padding: `x [B, C, H, W]`, `w [C, 3, 3]`, `b [C]`.
pub(crate) fn depthwise3<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let (batch, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let mut out = Tensor::zeros(&x.shape);
    for bi in 0..batch {
        for ch in 0..c {
            let base = (bi * c + ch) * h * wd;
            let src = &x.data[base..base + h * wd];
            let dst = &mut out.data[base..base + h * wd];
            if let Some(b) = b {
                dst.fill(b.data[ch]);
            }
            for dh in -1isize..=1 {
                let (r0, r1) = tap_range(h, dh);
                for dw in -1isize..=1 {
                    let wv = w.data[ch * 9 + ((dh + 1) * 3 + dw + 1) as usize];
                    let (c0, c1) = tap_range(wd, dw);
                    for r in r0..r1 {
                        let sr = (r as isize + dh) as usize;
                        let sc = (c0 as isize + dw) as usize;
                        axpy(&mut dst[r * wd + c0..r * wd + c1], wv, &src[sr * wd + sc..sr * wd + sc + (c1 - c0)]);
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn depthwise3_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    need_x: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let (batch, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let mut gw = Tensor::zeros(&w.shape);
    let mut gb = Tensor::zeros(&[c]);
    let mut gx = need_x.then(|| Tensor::zeros(&x.shape));
    for bi in 0..batch {
        for ch in 0..c {
            let base = (bi * c + ch) * h * wd;
            let src = &x.data[base..base + h * wd];
            let go = &g.data[base..base + h * wd];
            gb.data[ch] += go.iter().copied().sum::<T>();
            for dh in -1isize..=1 {
                let (r0, r1) = tap_range(h, dh);
                for dw in -1isize..=1 {
                    let tap = ch * 9 + ((dh + 1) * 3 + dw + 1) as usize;
                    let (c0, c1) = tap_range(wd, dw);
                    let mut acc = T::zero();
                    for r in r0..r1 {
                        let sr = (r as isize + dh) as usize;
                        let sc = (c0 as isize + dw) as usize;
                        let gs = &go[r * wd + c0..r * wd + c1];
                        acc += dot(gs, &src[sr * wd + sc..sr * wd + sc + (c1 - c0)]);
                        if let Some(gx) = gx.as_mut() {
                            let dst = &mut gx.data[base + sr * wd + sc..base + sr * wd + sc + (c1 - c0)];
                            axpy(dst, w.data[tap], gs);
                        }
                    }
                    gw.data[tap] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Layer norm over channels at every pixel. Returns `(y, x̂, 1/σ)`.
pub(crate) fn channel_norm<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let (batch, c, p) = (x.shape[0], x.shape[1], x.shape[2..].iter().product::<usize>());
    let mut xhat = Tensor::zeros(&x.shape);
    let mut rstd = vec![T::zero(); batch * p];
    let inv_c = T::of(1.0 / c as f64);
    let eps = T::of(NORM_EPS);
    let mut mean = vec![T::zero(); p];
    let mut var = vec![T::zero(); p];
    for bi in 0..batch {
        let xb = &x.data[bi * c * p..(bi + 1) * c * p];
        mean.fill(T::zero());
        var.fill(T::zero());
        for ch in 0..c {
            axpy(&mut mean, inv_c, &xb[ch * p..(ch + 1) * p]);
        }
        for ch in 0..c {
            for ((v, &xv), &m) in var.iter_mut().zip(&xb[ch * p..(ch + 1) * p]).zip(&mean) {
                let d = xv - m;
                *v += d * d * inv_c;
            }
        }
        let rs = &mut rstd[bi * p..(bi + 1) * p];
        for (r, &v) in rs.iter_mut().zip(&var) {
            *r = T::one() / (v + eps).sqrt();
        }
        for ch in 0..c {
            let dst = &mut xhat.data[(bi * c + ch) * p..(bi * c + ch + 1) * p];
            for k in 0..p {
                dst[k] = (xb[ch * p + k] - mean[k]) * rs[k];
            }
        }
    }
    let mut y = xhat.clone();
    for bi in 0..batch {
        for ch in 0..c {
            let (gm, bt) = (gamma.data[ch], beta.data[ch]);
            for v in &mut y.data[(bi * c + ch) * p..(bi * c + ch + 1) * p] {
                *v = *v * gm + bt;
            }
        }
    }
    (y, xhat, rstd)
}

pub(crate) fn channel_norm_backward<T: Real>(
    xhat: &Tensor<T>,
    rstd: &[T],
    gamma: &Tensor<T>,
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, c, p) = (xhat.shape[0], xhat.shape[1], xhat.shape[2..].iter().product::<usize>());
    let mut gx = Tensor::zeros(&xhat.shape);
    let mut gg = Tensor::zeros(&[c]);
    let mut gb = Tensor::zeros(&[c]);
    let inv_c = T::of(1.0 / c as f64);
    let mut m1 = vec![T::zero(); p];
    let mut m2 = vec![T::zero(); p];
    for bi in 0..batch {
        m1.fill(T::zero());
        m2.fill(T::zero());
        for ch in 0..c {
            let off = (bi * c + ch) * p;
            let go = &g.data[off..off + p];
            let xh = &xhat.data[off..off + p];
            gg.data[ch] += dot(go, xh);
            gb.data[ch] += go.iter().copied().sum::<T>();
            let gm = gamma.data[ch];
            for k in 0..p {
                let d = go[k] * gm;
                m1[k] += d * inv_c;
                m2[k] += d * xh[k] * inv_c;
            }
        }
        let rs = &rstd[bi * p..(bi + 1) * p];
        for ch in 0..c {
            let off = (bi * c + ch) * p;
            let gm = gamma.data[ch];
            for k in 0..p {
                let d = g.data[off + k] * gm;
                gx.data[off + k] = rs[k] * (d - m1[k] - xhat.data[off + k] * m2[k]);
            }
        }
    }
    (gx, gg, gb)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub(crate) fn gelu<T: Real>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh_fast())
}

#[inline]
pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let t = u.tanh_fast();
    let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du
}

/// Unitary FFT of a complex tensor `[..., 2]` along spatial `axis`.
pub(crate) fn fft_axis<T: Real>(x: &Tensor<T>, axis: usize, inverse: bool) -> Tensor<T> {
    let cshape = &x.shape[..x.shape.len() - 1];
    let (outer, n, inner) = split_axis(cshape, axis);
    let plan = FftPlan::<T>::new(n);
    let scale = T::of(1.0 / (n as f64).sqrt());
    let mut out = Tensor::zeros(&x.shape);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for o in 0..outer {
        for i in 0..inner {
            for k in 0..n {
                let at = ((o * n + k) * inner + i) * 2;
                buf[k] = Complex::new(x.data[at], x.data[at + 1]);
            }
            if inverse {
                plan.inverse(&mut buf);
            } else {
                plan.forward(&mut buf);
            }
            for k in 0..n {
                let at = ((o * n + k) * inner + i) * 2;
                out.data[at] = buf[k].re * scale;
                out.data[at + 1] = buf[k].im * scale;
            }
        }
    }
    out
}

/// Copies the first `min(len, new_len)` entries along `axis` into a tensor
/// whose `axis` has length `new_len`, zero-filling the rest.
pub(crate) fn resize_axis<T: Real>(x: &Tensor<T>, axis: usize, new_len: usize) -> Tensor<T> {
    let (outer, n, inner) = split_axis(&x.shape, axis);
    let mut shape = x.shape.clone();
    shape[axis] = new_len;
    let mut out = Tensor::zeros(&shape);
    let keep = n.min(new_len);
    for o in 0..outer {
        let src = &x.data[o * n * inner..o * n * inner + keep * inner];
        out.data[o * new_len * inner..o * new_len * inner + keep * inner].copy_from_slice(src);
    }
    out
}

/// Per-mode complex channel mixing. `x [B, Ci, H, W, 2]`, `r [k, Ci, Co, 2]`
/// with `k` the length of spatial axis `axis ∈ {2, 3}` of `x`.
pub(crate) fn mode_mix<T: Real>(x: &Tensor<T>, r: &Tensor<T>, axis: usize) -> Tensor<T> {
    let (batch, ci, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let co = r.shape[2];
    let mut out = Tensor::zeros(&[batch, co, h, w, 2]);
    let hw = h * w;
    for b in 0..batch {
        for i in 0..ci {
            for o in 0..co {
                for s in 0..hw {
                    let m = if axis == 2 { s / w } else { s % w };
                    let ra = ((m * ci + i) * co + o) * 2;
                    let (rr, ri) = (r.data[ra], r.data[ra + 1]);
                    let xa = ((b * ci + i) * hw + s) * 2;
                    let (xr, xi) = (x.data[xa], x.data[xa + 1]);
                    let ya = ((b * co + o) * hw + s) * 2;
                    out.data[ya] += xr * rr - xi * ri;
                    out.data[ya + 1] += xr * ri + xi * rr;
                }
            }
        }
    }
    out
}

pub(crate) fn mode_mix_backward<T: Real>(x: &Tensor<T>, r: &Tensor<T>, g: &Tensor<T>, axis: usize) -> (Tensor<T>, Tensor<T>) {
    let (batch, ci, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let co = r.shape[2];
    let hw = h * w;
    let mut gx = Tensor::zeros(&x.shape);
    let mut gr = Tensor::zeros(&r.shape);
    for b in 0..batch {
        for i in 0..ci {
            for o in 0..co {
                for s in 0..hw {
                    let m = if axis == 2 { s / w } else { s % w };
                    let ra = ((m * ci + i) * co + o) * 2;
                    let (rr, ri) = (r.data[ra], r.data[ra + 1]);
                    let xa = ((b * ci + i) * hw + s) * 2;
                    let (xr, xi) = (x.data[xa], x.data[xa + 1]);
                    let ga = ((b * co + o) * hw + s) * 2;
                    let (gre, gim) = (g.data[ga], g.data[ga + 1]);
                    // g · conj(r)
                    gx.data[xa] += gre * rr + gim * ri;
                    gx.data[xa + 1] += gim * rr - gre * ri;
                    // conj(x) · g
                    gr.data[ra] += xr * gre + xi * gim;
                    gr.data[ra + 1] += xr * gim - xi * gre;
                }
            }
        }
    }
    (gx, gr)
}

pub(crate) fn slice_channels<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Tensor<T> {
    let (batch, c) = (x.shape[0], x.shape[1]);
    assert!(start + len <= c, "channel slice {start}+{len} exceeds {c}");
    let p: usize = x.shape[2..].iter().product();
    let mut shape = x.shape.clone();
    shape[1] = len;
    let mut data = Vec::with_capacity(batch * len * p);
    for b in 0..batch {
        data.extend_from_slice(&x.data[(b * c + start) * p..(b * c + start + len) * p]);
    }
    Tensor { shape, data }
}

pub(crate) fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let first = parts[0];
    let batch = first.shape[0];
    let p: usize = first.shape[2..].iter().product();
    let total: usize = parts.iter().map(|t| t.shape[1]).sum();
    for t in parts {
        assert_eq!(t.shape[0], batch, "concat batch mismatch");
        assert_eq!(&t.shape[2..], &first.shape[2..], "concat spatial mismatch");
    }
    let mut shape = first.shape.clone();
    shape[1] = total;
    let mut data = Vec::with_capacity(batch * total * p);
    for b in 0..batch {
        for t in parts {
            let c = t.shape[1];
            data.extend_from_slice(&t.data[b * c * p..(b + 1) * c * p]);
        }
    }
    Tensor { shape, data }
}
