//! Direct stride-1 convolution over one image, vectorized along output rows.
//!
//! With few channels per layer the im2col matrices are wide and short and
//! GEMM spends most of its time packing; sweeping register-sized row tiles
//! over a zero-padded copy of the input is faster.

use crate::tensor::Real;

const TILE: usize = 16;
const OUT_BLOCK: usize = 4;

/// Geometry of a stride-1 square-kernel convolution over one image.
#[derive(Clone, Copy, Debug)]
pub struct RowGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl RowGeom {
    pub fn out_h(&self) -> usize {
        self.height + 2 * self.pad + 1 - self.kernel
    }

    pub fn out_w(&self) -> usize {
        self.width + 2 * self.pad + 1 - self.kernel
    }
}

/// Copies `[C, H, W]` into a zeroed `[C, H + 2p, W + 2p]` buffer.
fn pad_planes<T: Real>(x: &[T], c: usize, h: usize, w: usize, p: usize) -> Vec<T> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::zero(); c * ph * pw];
    for ci in 0..c {
        for y in 0..h {
            let dst = (ci * ph + y + p) * pw + p;
            out[dst..dst + w].copy_from_slice(&x[(ci * h + y) * w..(ci * h + y + 1) * w]);
        }
    }
    out
}

#[inline(always)]
fn madd<T: Real, const FUSED: bool>(a: T, b: T, c: T) -> T {
    if FUSED {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

/// Valid cross-correlation of padded planes `xp` (`[C, PH, PW]`) with
/// `w` (`[O, C, k, k]`), accumulated onto `out` (`[O, PH-k+1, PW-k+1]`).
#[inline(always)]
fn correlate_body<T: Real, const FUSED: bool>(
    xp: &[T],
    c: usize,
    ph: usize,
    pw: usize,
    w: &[T],
    o_n: usize,
    k: usize,
    out: &mut [T],
) {
    let mut o = 0;
    while o + OUT_BLOCK <= o_n {
        correlate_block::<T, FUSED, OUT_BLOCK>(xp, c, ph, pw, w, o, k, out);
        o += OUT_BLOCK;
    }
    for o in o..o_n {
        correlate_block::<T, FUSED, 1>(xp, c, ph, pw, w, o, k, out);
    }
}

/// Output channels `o0..o0 + B` at once, sharing every input load.
#[inline(always)]
fn correlate_block<T: Real, const FUSED: bool, const B: usize>(
    xp: &[T],
    c: usize,
    ph: usize,
    pw: usize,
    w: &[T],
    o0: usize,
    k: usize,
    out: &mut [T],
) {
    let (oh, ow) = (ph + 1 - k, pw + 1 - k);
    let per_o = c * k * k;
    let wb = &w[o0 * per_o..(o0 + B) * per_o];
    for oy in 0..oh {
        let mut x0 = 0;
        while x0 + TILE <= ow {
            let mut acc = [[T::zero(); TILE]; B];
            for (b, a) in acc.iter_mut().enumerate() {
                let at = ((o0 + b) * oh + oy) * ow + x0;
                a.copy_from_slice(&out[at..at + TILE]);
            }
            for ci in 0..c {
                for ki in 0..k {
                    let base = (ci * ph + oy + ki) * pw + x0;
                    let src = &xp[base..base + TILE + k - 1];
                    for kj in 0..k {
                        let s = &src[kj..kj + TILE];
                        let wi = (ci * k + ki) * k + kj;
                        for (b, a) in acc.iter_mut().enumerate() {
                            let wv = wb[b * per_o + wi];
                            for l in 0..TILE {
                                a[l] = madd::<T, FUSED>(wv, s[l], a[l]);
                            }
                        }
                    }
                }
            }
            for (b, a) in acc.iter().enumerate() {
                let at = ((o0 + b) * oh + oy) * ow + x0;
                out[at..at + TILE].copy_from_slice(a);
            }
            x0 += TILE;
        }
        for b in 0..B {
            for ox in x0..ow {
                let mut v = out[((o0 + b) * oh + oy) * ow + ox];
                for ci in 0..c {
                    for ki in 0..k {
                        let base = (ci * ph + oy + ki) * pw + ox;
                        for kj in 0..k {
                            v += wb[b * per_o + (ci * k + ki) * k + kj] * xp[base + kj];
                        }
                    }
                }
                out[((o0 + b) * oh + oy) * ow + ox] = v;
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn correlate_fma<T: Real>(
    xp: &[T],
    c: usize,
    ph: usize,
    pw: usize,
    w: &[T],
    o_n: usize,
    k: usize,
    out: &mut [T],
) {
    correlate_body::<T, true>(xp, c, ph, pw, w, o_n, k, out)
}

fn correlate<T: Real>(xp: &[T], c: usize, ph: usize, pw: usize, w: &[T], o_n: usize, k: usize, out: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { correlate_fma(xp, c, ph, pw, w, o_n, k, out) };
    }
    correlate_body::<T, false>(xp, c, ph, pw, w, o_n, k, out)
}

/// `out[o] = bias[o] + sum_c w[o, c] * x[c]`, `out` laid out `[O, OH, OW]`.
pub fn forward<T: Real>(x: &[T], w: &[T], bias: &[T], g: &RowGeom, out: &mut [T]) {
    let plane = g.out_h() * g.out_w();
    for (o, chunk) in out.chunks_mut(plane).enumerate() {
        chunk.iter_mut().for_each(|v| *v = bias[o]);
    }
    let xp = pad_planes(x, g.in_channels, g.height, g.width, g.pad);
    let (ph, pw) = (g.height + 2 * g.pad, g.width + 2 * g.pad);
    correlate(&xp, g.in_channels, ph, pw, w, g.out_channels, g.kernel, out);
}

/// Accumulates the input gradient into `dx`, laid out `[C, H, W]`: a full
/// correlation of the output gradient with the flipped, transposed kernel.
pub fn backward_input<T: Real>(grad: &[T], w: &[T], g: &RowGeom, dx: &mut [T]) {
    let (c, o_n, k) = (g.in_channels, g.out_channels, g.kernel);
    assert!(g.pad < k, "direct conv needs pad < kernel");
    let mut wt = vec![T::zero(); w.len()];
    for o in 0..o_n {
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    wt[((ci * o_n + o) * k + ki) * k + kj] = w[((o * c + ci) * k + (k - 1 - ki)) * k + (k - 1 - kj)];
                }
            }
        }
    }
    let q = k - 1 - g.pad;
    let gp = pad_planes(grad, o_n, g.out_h(), g.out_w(), q);
    correlate(&gp, o_n, g.out_h() + 2 * q, g.out_w() + 2 * q, &wt, c, k, dx);
}

#[inline(always)]
fn dot<T: Real, const FUSED: bool>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); TILE];
    let (ac, bc) = (a.chunks_exact(TILE), b.chunks_exact(TILE));
    let tail: T = ac.remainder().iter().zip(bc.remainder()).map(|(&x, &y)| x * y).sum();
    for (xa, xb) in ac.zip(bc) {
        for l in 0..TILE {
            acc[l] = madd::<T, FUSED>(xa[l], xb[l], acc[l]);
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Accumulates the weight gradient into `dw`, laid out `[O, C, k, k]`.
pub fn backward_weight<T: Real>(x: &[T], grad: &[T], g: &RowGeom, dw: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { backward_weight_fma(x, grad, g, dw) };
    }
    backward_weight_body::<T, false>(x, grad, g, dw)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn backward_weight_fma<T: Real>(x: &[T], grad: &[T], g: &RowGeom, dw: &mut [T]) {
    backward_weight_body::<T, true>(x, grad, g, dw)
}

#[inline(always)]
fn backward_weight_body<T: Real, const FUSED: bool>(x: &[T], grad: &[T], g: &RowGeom, dw: &mut [T]) {
    let (c, k) = (g.in_channels, g.kernel);
    let (oh, ow) = (g.out_h(), g.out_w());
    let pw = g.width + 2 * g.pad;
    let ph = g.height + 2 * g.pad;
    let xp = pad_planes(x, c, g.height, g.width, g.pad);
    for o in 0..g.out_channels {
        let gplane = &grad[o * oh * ow..(o + 1) * oh * ow];
        for ci in 0..c {
            let src = &xp[ci * ph * pw..(ci + 1) * ph * pw];
            for ki in 0..k {
                for kj in 0..k {
                    let mut acc = T::zero();
                    for oy in 0..oh {
                        let s = (oy + ki) * pw + kj;
                        acc += dot::<T, FUSED>(&gplane[oy * ow..(oy + 1) * ow], &src[s..s + ow]);
                    }
                    dw[((o * c + ci) * k + ki) * k + kj] += acc;
                }
            }
        }
    }
}
