use ndarray::Array4;

use super::{Layer, Mode};
use crate::param::{Param, ParamKind};
use crate::tensor::{Real, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

struct Cache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Per-channel batch normalization over `(batch, height, width)`.
pub struct BatchNorm2d<T> {
    pub channels: usize,
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: Param<T>,
    running_var: Param<T>,
    cache: Option<Cache<T>>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::filled(&[channels], T::one(), ParamKind::Learnable),
            beta: Param::filled(&[channels], T::zero(), ParamKind::Learnable),
            running_mean: Param::filled(&[channels], T::zero(), ParamKind::Buffer),
            running_var: Param::filled(&[channels], T::one(), ParamKind::Buffer),
            cache: None,
        }
    }

    /// Mean and biased variance per channel, accumulated in `f64`.
    fn batch_stats(x: &Tensor<T>) -> (Vec<f64>, Vec<f64>) {
        let (n, c, h, w) = x.dim();
        let hw = h * w;
        let m = (n * hw) as f64;
        let xs = x.as_slice().expect("standard layout");
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for i in 0..n {
                let base = (i * c + ch) * hw;
                s += xs[base..base + hw].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mu = s / m;
            let mut q = 0.0;
            for i in 0..n {
                let base = (i * c + ch) * hw;
                q += xs[base..base + hw].iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>();
            }
            mean[ch] = mu;
            var[ch] = q / m;
        }
        (mean, var)
    }

    fn normalize(x: &Tensor<T>, mean: &[f64], inv_std: &[f64]) -> Tensor<T> {
        let (_, c, h, w) = x.dim();
        let hw = h * w;
        let mut out = x.as_standard_layout().to_owned();
        for (k, plane) in out.as_slice_mut().unwrap().chunks_mut(hw).enumerate() {
            let ch = k % c;
            let (mu, is) = (T::of(mean[ch]), T::of(inv_std[ch]));
            plane.iter_mut().for_each(|v| *v = (*v - mu) * is);
        }
        out
    }

    fn affine(&self, xhat: &Tensor<T>) -> Tensor<T> {
        let (_, c, h, w) = xhat.dim();
        let hw = h * w;
        let mut out = xhat.clone();
        for (k, plane) in out.as_slice_mut().unwrap().chunks_mut(hw).enumerate() {
            let ch = k % c;
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            plane.iter_mut().for_each(|v| *v = *v * g + b);
        }
        out
    }

    fn running_inv_std(&self) -> (Vec<f64>, Vec<f64>) {
        let mean = self.running_mean.value.iter().map(|v| v.as_f64()).collect();
        let inv = self.running_var.value.iter().map(|v| 1.0 / (v.as_f64() + BN_EPS).sqrt()).collect();
        (mean, inv)
    }
}

impl<T: Real> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        assert_eq!(x.dim().1, self.channels, "batch norm channels");
        let x = x.as_standard_layout();
        let (mean, inv_std) = match mode {
            Mode::Train => {
                let (n, _, h, w) = x.dim();
                let m = n * h * w;
                let (mean, var) = Self::batch_stats(&x.to_owned());
                let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
                for ch in 0..self.channels {
                    let rm = self.running_mean.value[ch].as_f64();
                    let rv = self.running_var.value[ch].as_f64();
                    self.running_mean.value[ch] = T::of((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * mean[ch]);
                    self.running_var.value[ch] = T::of((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * var[ch] * unbias);
                }
                let inv = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect::<Vec<_>>();
                (mean, inv)
            }
            Mode::Eval => self.running_inv_std(),
        };
        let normalized = Self::normalize(&x.to_owned(), &mean, &inv_std);
        let y = self.affine(&normalized);
        self.cache = Some(Cache { normalized, inv_std: inv_std.into_iter().map(T::of).collect(), mode });
        y
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let Cache { normalized, inv_std, mode } = self.cache.take().expect("bn backward without forward");
        let (n, c, h, w) = normalized.dim();
        let hw = h * w;
        let m = (n * hw) as f64;
        let g = grad.as_standard_layout();
        let gs = g.as_slice().unwrap();
        let xs = normalized.as_slice().unwrap();

        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (k, (gp, xp)) in gs.chunks(hw).zip(xs.chunks(hw)).enumerate() {
            let ch = k % c;
            for (&gv, &xv) in gp.iter().zip(xp) {
                sum_g[ch] += gv.as_f64();
                sum_gx[ch] += gv.as_f64() * xv.as_f64();
            }
        }
        for ch in 0..c {
            self.gamma.grad[ch] += T::of(sum_gx[ch]);
            self.beta.grad[ch] += T::of(sum_g[ch]);
        }

        let mut dx = Array4::<T>::zeros((n, c, h, w));
        for (k, ((dp, gp), xp)) in
            dx.as_slice_mut().unwrap().chunks_mut(hw).zip(gs.chunks(hw)).zip(xs.chunks(hw)).enumerate()
        {
            let ch = k % c;
            let scale = self.gamma.value[ch] * inv_std[ch];
            match mode {
                Mode::Train => {
                    let mean_g = T::of(sum_g[ch] / m);
                    let mean_gx = T::of(sum_gx[ch] / m);
                    for ((d, &gv), &xv) in dp.iter_mut().zip(gp).zip(xp) {
                        *d = scale * (gv - mean_g - xv * mean_gx);
                    }
                }
                Mode::Eval => {
                    for (d, &gv) in dp.iter_mut().zip(gp) {
                        *d = scale * gv;
                    }
                }
            }
        }
        dx
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let (mean, inv_std) = self.running_inv_std();
        let x = x.as_standard_layout().to_owned();
        self.affine(&Self::normalize(&x, &mean, &inv_std))
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("gamma", &self.gamma);
        f("beta", &self.beta);
        f("running_mean", &self.running_mean);
        f("running_var", &self.running_var);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("gamma", &mut self.gamma);
        f("beta", &mut self.beta);
        f("running_mean", &mut self.running_mean);
        f("running_var", &mut self.running_var);
    }
}
