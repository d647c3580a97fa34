//! Patch extraction for convolution as matrix multiplication.
//!
//! `im2col` turns one `[C, H, W]` image into a `[C*k*k, OH*OW]` matrix whose
//! column `p` holds the receptive field of output position `p`. `col2im` is
//! its adjoint: it scatters-and-adds columns back onto the image.

use crate::tensor::Real;

/// Spatial geometry of a square-kernel convolution over one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

pub fn im2col<T: Real>(img: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ohw = oh * ow;
    debug_assert_eq!(img.len(), g.channels * g.height * g.width);
    debug_assert_eq!(cols.len(), g.rows() * ohw);
    let (h, w) = (g.height as isize, g.width as isize);
    let pad = g.pad as isize;
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        *v = if ix < 0 || ix >= w { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]; accumulates into `img`, which the caller zeroes.
pub fn col2im<T: Real>(cols: &[T], g: &ConvGeom, img: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ohw = oh * ow;
    debug_assert_eq!(img.len(), g.channels * g.height * g.width);
    debug_assert_eq!(cols.len(), g.rows() * ohw);
    let (h, w) = (g.height as isize, g.width as isize);
    let pad = g.pad as isize;
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * ohw..(row + 1) * ohw];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * ow..(oy + 1) * ow];
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn output_geometry_of_table_convs() {
        let g = ConvGeom { channels: 6, height: 128, width: 128, kernel: 4, stride: 2, pad: 1 };
        assert_eq!((g.out_h(), g.out_w()), (64, 64));
        let g = ConvGeom { channels: 3, height: 37, width: 21, kernel: 5, stride: 1, pad: 2 };
        assert_eq!((g.out_h(), g.out_w()), (37, 21));
    }

    #[test]
    fn identity_kernel_copies_pixels() {
        let g = ConvGeom { channels: 2, height: 3, width: 4, kernel: 1, stride: 1, pad: 0 };
        let img: Vec<f64> = (0..24).map(f64::from).collect();
        let mut cols = vec![0.0; g.rows() * g.cols()];
        im2col(&img, &g, &mut cols);
        assert_eq!(cols, img);
    }

    proptest! {
        // <im2col(x), y> == <x, col2im(y)> for every geometry.
        #[test]
        fn col2im_is_adjoint(
            c in 1usize..3, h in 1usize..9, w in 1usize..9,
            k in 1usize..5, s in 1usize..3, p in 0usize..3, seed in 0u64..1000,
        ) {
            prop_assume!(h + 2 * p >= k && w + 2 * p >= k);
            let g = ConvGeom { channels: c, height: h, width: w, kernel: k, stride: s, pad: p };
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f64) / (1u64 << 31) as f64 - 0.5
            };
            let x: Vec<f64> = (0..c * h * w).map(|_| next()).collect();
            let y: Vec<f64> = (0..g.rows() * g.cols()).map(|_| next()).collect();
            let mut cx = vec![0.0; y.len()];
            im2col(&x, &g, &mut cx);
            let mut ay = vec![0.0; x.len()];
            col2im(&y, &g, &mut ay);
            let lhs = dot(&cx, &y);
            let rhs = dot(&x, &ay);
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
