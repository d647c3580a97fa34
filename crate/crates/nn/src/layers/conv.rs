use ndarray::linalg::general_mat_mul;
use ndarray::{Array4, ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::{Layer, Mode};
use crate::direct::{self, RowGeom};
use crate::im2col::{col2im, im2col, ConvGeom};
use crate::init::{normal, WEIGHT_STD};
use crate::param::{Param, ParamKind};
use crate::tensor::{Real, Tensor};

fn standard<T: Real>(x: &Tensor<T>) -> std::borrow::Cow<'_, [T]> {
    match x.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(x.iter().copied().collect()),
    }
}

/// Square-kernel 2-D convolution with bias. Weight layout `[out, in, k, k]`.
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    weight: Param<T>,
    bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel, kernel];
        let n = shape.iter().product();
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: Param::new(&shape, normal(rng, n, WEIGHT_STD), ParamKind::Learnable),
            bias: Param::filled(&[out_channels], T::zero(), ParamKind::Learnable),
            input: None,
        }
    }

    fn geom(&self, h: usize, w: usize) -> ConvGeom {
        ConvGeom {
            channels: self.in_channels,
            height: h,
            width: w,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    fn row_geom(&self, h: usize, w: usize) -> Option<RowGeom> {
        (self.stride == 1 && !self.is_pointwise()).then_some(RowGeom {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            height: h,
            width: w,
            kernel: self.kernel,
            pad: self.pad,
        })
    }

    fn compute(&self, x: &Tensor<T>) -> Tensor<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channels");
        let g = self.geom(h, w);
        let (oh, ow) = (g.out_h(), g.out_w());
        let ohw = oh * ow;
        let xs = standard(x);
        let wm = ArrayView2::from_shape((self.out_channels, g.rows()), &self.weight.value).unwrap();
        let mut out = Array4::<T>::zeros((n, self.out_channels, oh, ow));
        let im2col_rows = if self.is_pointwise() || self.stride == 1 { 0 } else { g.rows() };
        let mut cols = vec![T::zero(); im2col_rows * ohw];
        let per_in = c * h * w;
        let per_out = self.out_channels * ohw;
        if let Some(rg) = self.row_geom(h, w) {
            for (i, chunk) in out.as_slice_mut().unwrap().chunks_mut(per_out).enumerate() {
                direct::forward(&xs[i * per_in..(i + 1) * per_in], &self.weight.value, &self.bias.value, &rg, chunk);
            }
            return out;
        }
        for (i, chunk) in out.as_slice_mut().unwrap().chunks_mut(per_out).enumerate() {
            let img = &xs[i * per_in..(i + 1) * per_in];
            let cm = if self.is_pointwise() {
                ArrayView2::from_shape((g.rows(), ohw), img).unwrap()
            } else {
                im2col(img, &g, &mut cols);
                ArrayView2::from_shape((g.rows(), ohw), &cols[..]).unwrap()
            };
            for (o, plane) in chunk.chunks_mut(ohw).enumerate() {
                plane.iter_mut().for_each(|v| *v = self.bias.value[o]);
            }
            let mut om = ArrayViewMut2::from_shape((self.out_channels, ohw), chunk).unwrap();
            general_mat_mul(T::one(), &wm, &cm, T::one(), &mut om);
        }
        out
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let y = self.compute(x);
        self.input = Some(x.clone());
        y
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("conv backward without forward");
        let (n, c, h, w) = x.dim();
        let g = self.geom(h, w);
        let pointwise = self.is_pointwise();
        let out_c = self.out_channels;
        let ohw = g.cols();
        let rows = g.rows();
        let xs = standard(&x);
        let gs = standard(grad);
        let row_geom = self.row_geom(h, w);
        let Self { weight, bias, .. } = self;
        let wm = ArrayView2::from_shape((out_c, rows), &weight.value).unwrap();
        let mut dw = ArrayViewMut2::from_shape((out_c, rows), &mut weight.grad[..]).unwrap();
        let mut dx = Array4::<T>::zeros((n, c, h, w));
        let im2col_rows = if pointwise || row_geom.is_some() { 0 } else { rows };
        let mut cols = vec![T::zero(); im2col_rows * ohw];
        let mut dcols = vec![T::zero(); im2col_rows * ohw];
        let per_in = c * h * w;
        let per_out = out_c * ohw;
        for (i, dxi) in dx.as_slice_mut().unwrap().chunks_mut(per_in).enumerate() {
            let img = &xs[i * per_in..(i + 1) * per_in];
            let gi = &gs[i * per_out..(i + 1) * per_out];
            let gm = ArrayView2::from_shape((out_c, ohw), gi).unwrap();
            for (o, plane) in gi.chunks(ohw).enumerate() {
                let mut acc = T::zero();
                for &v in plane {
                    acc += v;
                }
                bias.grad[o] += acc;
            }
            if let Some(rg) = &row_geom {
                direct::backward_weight(img, gi, rg, dw.as_slice_mut().unwrap());
                direct::backward_input(gi, &weight.value, rg, dxi);
                continue;
            }
            let cm = if pointwise {
                ArrayView2::from_shape((rows, ohw), img).unwrap()
            } else {
                im2col(img, &g, &mut cols);
                ArrayView2::from_shape((rows, ohw), &cols[..]).unwrap()
            };
            general_mat_mul(T::one(), &gm, &cm.t(), T::one(), &mut dw);
            if pointwise {
                let mut dm = ArrayViewMut2::from_shape((rows, ohw), dxi).unwrap();
                general_mat_mul(T::one(), &wm.t(), &gm, T::zero(), &mut dm);
            } else {
                let mut dm = ArrayViewMut2::from_shape((rows, ohw), &mut dcols[..]).unwrap();
                general_mat_mul(T::one(), &wm.t(), &gm, T::zero(), &mut dm);
                col2im(&dcols, &g, dxi);
            }
        }
        dx
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.compute(x)
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

/// Transposed convolution ("deconvolution"). Weight layout `[in, out, k, k]`.
///
/// Output size is `(in - 1) * stride - 2 * pad + kernel`, so kernel 4,
/// stride 2, pad 1 exactly doubles the spatial size.
pub struct ConvTranspose2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    weight: Param<T>,
    bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let shape = [in_channels, out_channels, kernel, kernel];
        let n = shape.iter().product();
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: Param::new(&shape, normal(rng, n, WEIGHT_STD), ParamKind::Learnable),
            bias: Param::filled(&[out_channels], T::zero(), ParamKind::Learnable),
            input: None,
        }
    }

    /// Geometry of the *output* image seen as the input of the adjoint conv.
    fn geom(&self, ih: usize, iw: usize) -> ConvGeom {
        let g = ConvGeom {
            channels: self.out_channels,
            height: (ih - 1) * self.stride + self.kernel - 2 * self.pad,
            width: (iw - 1) * self.stride + self.kernel - 2 * self.pad,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
        };
        debug_assert_eq!((g.out_h(), g.out_w()), (ih, iw));
        g
    }

    fn compute(&self, x: &Tensor<T>) -> Tensor<T> {
        let (n, c, ih, iw) = x.dim();
        assert_eq!(c, self.in_channels, "deconv input channels");
        let g = self.geom(ih, iw);
        let ihw = ih * iw;
        let ohw = g.height * g.width;
        let rows = g.rows();
        let xs = standard(x);
        let wm = ArrayView2::from_shape((self.in_channels, rows), &self.weight.value).unwrap();
        let mut out = Array4::<T>::zeros((n, self.out_channels, g.height, g.width));
        let mut cols = vec![T::zero(); rows * ihw];
        let per_in = c * ihw;
        let per_out = self.out_channels * ohw;
        for (i, chunk) in out.as_slice_mut().unwrap().chunks_mut(per_out).enumerate() {
            let xm = ArrayView2::from_shape((c, ihw), &xs[i * per_in..(i + 1) * per_in]).unwrap();
            let mut cm = ArrayViewMut2::from_shape((rows, ihw), &mut cols[..]).unwrap();
            general_mat_mul(T::one(), &wm.t(), &xm, T::zero(), &mut cm);
            col2im(&cols, &g, chunk);
            for (o, plane) in chunk.chunks_mut(ohw).enumerate() {
                let b = self.bias.value[o];
                plane.iter_mut().for_each(|v| *v += b);
            }
        }
        out
    }
}

impl<T: Real> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let y = self.compute(x);
        self.input = Some(x.clone());
        y
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("deconv backward without forward");
        let (n, c, ih, iw) = x.dim();
        let g = self.geom(ih, iw);
        let ihw = ih * iw;
        let ohw = g.height * g.width;
        let rows = g.rows();
        let xs = standard(&x);
        let gs = standard(grad);
        let wm = ArrayView2::from_shape((c, rows), &self.weight.value).unwrap();
        let mut dw = ArrayViewMut2::from_shape((c, rows), &mut self.weight.grad[..]).unwrap();
        let mut dx = Array4::<T>::zeros((n, c, ih, iw));
        let mut dcols = vec![T::zero(); rows * ihw];
        let per_in = c * ihw;
        let per_out = self.out_channels * ohw;
        for (i, dxi) in dx.as_slice_mut().unwrap().chunks_mut(per_in).enumerate() {
            let gi = &gs[i * per_out..(i + 1) * per_out];
            for (o, plane) in gi.chunks(ohw).enumerate() {
                let mut acc = T::zero();
                for &v in plane {
                    acc += v;
                }
                self.bias.grad[o] += acc;
            }
            im2col(gi, &g, &mut dcols);
            let dcm = ArrayView2::from_shape((rows, ihw), &dcols[..]).unwrap();
            let xm = ArrayView2::from_shape((c, ihw), &xs[i * per_in..(i + 1) * per_in]).unwrap();
            general_mat_mul(T::one(), &xm, &dcm.t(), T::one(), &mut dw);
            let mut dxm = ArrayViewMut2::from_shape((c, ihw), dxi).unwrap();
            general_mat_mul(T::one(), &wm, &dcm, T::zero(), &mut dxm);
        }
        dx
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.compute(x)
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_layer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution, independent of im2col.
    fn naive_conv(x: &Array4<f64>, w: &[f64], b: &[f64], oc: usize, k: usize, s: usize, p: usize) -> Array4<f64> {
        let (n, c, h, wd) = x.dim();
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (wd + 2 * p - k) / s + 1;
        Array4::from_shape_fn((n, oc, oh, ow), |(i, o, y, xx)| {
            let mut acc = b[o];
            for ci in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        let iy = (y * s + ki) as isize - p as isize;
                        let ix = (xx * s + kj) as isize - p as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc += w[((o * c + ci) * k + ki) * k + kj] * x[[i, ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
            acc
        })
    }

    /// Transposed convolution by scattering every input pixel.
    fn naive_deconv(x: &Array4<f64>, w: &[f64], b: &[f64], oc: usize, k: usize, s: usize, p: usize) -> Array4<f64> {
        let (n, c, h, wd) = x.dim();
        let oh = (h - 1) * s + k - 2 * p;
        let ow = (wd - 1) * s + k - 2 * p;
        let mut out = Array4::zeros((n, oc, oh, ow));
        for i in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for xx in 0..wd {
                        for o in 0..oc {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let oy = (y * s + ki) as isize - p as isize;
                                    let ox = (xx * s + kj) as isize - p as isize;
                                    if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                        out[[i, o, oy as usize, ox as usize]] +=
                                            w[((ci * oc + o) * k + ki) * k + kj] * x[[i, ci, y, xx]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for ((_, o, _, _), v) in out.indexed_iter_mut() {
            *v += b[o];
        }
        out
    }

    fn random_input(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Array4<f64> {
        let v = normal::<f64, _>(rng, shape.0 * shape.1 * shape.2 * shape.3, 1.0);
        Array4::from_shape_vec(shape, v).unwrap()
    }

    fn randomize_bias<L: Layer<f64>>(layer: &mut L, rng: &mut ChaCha8Rng) {
        layer.visit_mut(&mut |name, p| {
            if name == "bias" {
                p.value = normal(rng, p.len(), 0.5);
            }
        });
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, p) in &[(4, 2, 1), (3, 1, 1), (5, 1, 2), (1, 1, 0)] {
            let mut conv = Conv2d::<f64>::new(&mut rng, 3, 4, k, s, p);
            randomize_bias(&mut conv, &mut rng);
            let x = random_input(&mut rng, (2, 3, 8, 6));
            let y = conv.infer(&x);
            let want = naive_conv(&x, &conv.weight.value, &conv.bias.value, 4, k, s, p);
            assert!((&y - &want).iter().all(|d| d.abs() < 1e-12), "k={k} s={s} p={p}");
        }
    }

    #[test]
    fn row_sweep_conv_matches_naive_on_wide_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(k, p) in &[(3, 1), (5, 2), (3, 0)] {
            let mut conv = Conv2d::<f64>::new(&mut rng, 5, 6, k, 1, p);
            randomize_bias(&mut conv, &mut rng);
            let x = random_input(&mut rng, (2, 5, 7, 37));
            let y = conv.infer(&x);
            let want = naive_conv(&x, &conv.weight.value, &conv.bias.value, 6, k, 1, p);
            assert!((&y - &want).iter().all(|d| d.abs() < 1e-12), "k={k} p={p}");
        }
    }

    #[test]
    fn row_sweep_conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &(k, p) in &[(3, 1), (5, 2)] {
            let mut conv = Conv2d::<f64>::new(&mut rng, 2, 5, k, 1, p);
            let x = random_input(&mut rng, (1, 2, 4, 19));
            let report = check_layer(&mut conv, &x, Mode::Train, 1e-6, usize::MAX, 0);
            assert!(report.max_rel_error < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn deconv_matches_scatter_and_doubles_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut de = ConvTranspose2d::<f64>::new(&mut rng, 3, 2, 4, 2, 1);
        randomize_bias(&mut de, &mut rng);
        let x = random_input(&mut rng, (2, 3, 4, 5));
        let y = de.infer(&x);
        assert_eq!(y.dim(), (2, 2, 8, 10));
        let want = naive_deconv(&x, &de.weight.value, &de.bias.value, 2, 4, 2, 1);
        assert!((&y - &want).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(k, s, p) in &[(4, 2, 1), (3, 1, 1), (1, 1, 0)] {
            let mut conv = Conv2d::<f64>::new(&mut rng, 2, 3, k, s, p);
            let x = random_input(&mut rng, (2, 2, 6, 6));
            let report = check_layer(&mut conv, &x, Mode::Train, 1e-6, usize::MAX, 0);
            assert!(report.max_rel_error < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn deconv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut de = ConvTranspose2d::<f64>::new(&mut rng, 3, 2, 4, 2, 1);
        let x = random_input(&mut rng, (2, 3, 3, 4));
        let report = check_layer(&mut de, &x, Mode::Train, 1e-6, usize::MAX, 0);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
