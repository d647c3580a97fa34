use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, Ix4};
use rand::Rng;

use super::{Layer, Mode};
use crate::init::{normal, WEIGHT_STD};
use crate::param::{Param, ParamKind};
use crate::tensor::{Real, Tensor};

/// Reshapes `[N, C, H, W]` into `[N, C*H*W, 1, 1]`.
#[derive(Default)]
pub struct Flatten {
    shape: Option<Ix4>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

fn flat<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = x.dim();
    x.as_standard_layout().to_owned().into_shape_with_order((n, c * h * w, 1, 1)).unwrap()
}

impl<T: Real> Layer<T> for Flatten {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        self.shape = Some(x.raw_dim());
        flat(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let shape = self.shape.take().expect("flatten backward without forward");
        grad.as_standard_layout().to_owned().into_shape_with_order(shape).unwrap()
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        flat(x)
    }
}

/// Fully-connected layer on flattened `[N, F, 1, 1]` activations.
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    weight: Param<T>,
    bias: Param<T>,
    input: Option<Array2<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::new(
                &[out_features, in_features],
                normal(rng, in_features * out_features, WEIGHT_STD),
                ParamKind::Learnable,
            ),
            bias: Param::filled(&[out_features], T::zero(), ParamKind::Learnable),
            input: None,
        }
    }

    fn as_matrix(x: &Tensor<T>) -> Array2<T> {
        let (n, f, h, w) = x.dim();
        assert_eq!((h, w), (1, 1), "linear expects flattened input");
        x.as_standard_layout().to_owned().into_shape_with_order((n, f)).unwrap()
    }

    fn compute(&self, xm: &Array2<T>) -> Tensor<T> {
        let n = xm.nrows();
        assert_eq!(xm.ncols(), self.in_features, "linear input features");
        let wm = ArrayView2::from_shape((self.out_features, self.in_features), &self.weight.value).unwrap();
        let mut y = Array2::from_shape_fn((n, self.out_features), |(_, o)| self.bias.value[o]);
        general_mat_mul(T::one(), xm, &wm.t(), T::one(), &mut y);
        y.into_shape_with_order((n, self.out_features, 1, 1)).unwrap()
    }
}

impl<T: Real> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let xm = Self::as_matrix(x);
        let y = self.compute(&xm);
        self.input = Some(xm);
        y
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let xm = self.input.take().expect("linear backward without forward");
        let n = xm.nrows();
        let gm = grad.as_standard_layout().to_owned().into_shape_with_order((n, self.out_features)).unwrap();
        {
            let mut dw =
                ArrayViewMut2::from_shape((self.out_features, self.in_features), &mut self.weight.grad[..]).unwrap();
            general_mat_mul(T::one(), &gm.t(), &xm, T::one(), &mut dw);
        }
        for row in gm.rows() {
            for (b, &g) in self.bias.grad.iter_mut().zip(row) {
                *b += g;
            }
        }
        let wm = ArrayView2::from_shape((self.out_features, self.in_features), &self.weight.value).unwrap();
        let dx = gm.dot(&wm);
        let dx: Array4<T> = dx.into_shape_with_order((n, self.in_features, 1, 1)).unwrap();
        dx
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.compute(&Self::as_matrix(x))
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
