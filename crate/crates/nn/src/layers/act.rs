use super::{Layer, Mode};
use crate::tensor::{Real, Tensor};

pub struct LeakyRelu<T> {
    pub slope: f64,
    input: Option<Tensor<T>>,
}

impl<T: Real> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        Self { slope, input: None }
    }
}

impl<T: Real> Layer<T> for LeakyRelu<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("leaky relu backward without forward");
        let slope = T::of(self.slope);
        let mut g = grad.to_owned();
        g.zip_mut_with(&x, |g, &x| {
            if x <= T::zero() {
                *g *= slope
            }
        });
        g
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let slope = T::of(self.slope);
        x.mapv(|v| if v > T::zero() { v } else { v * slope })
    }
}

#[derive(Default)]
pub struct Relu<T> {
    input: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }
}

impl<T: Real> Layer<T> for Relu<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("relu backward without forward");
        let mut g = grad.to_owned();
        g.zip_mut_with(&x, |g, &x| {
            if x <= T::zero() {
                *g = T::zero()
            }
        });
        g
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.mapv(|v| v.max(T::zero()))
    }
}

/// Logistic sigmoid; outputs lie strictly inside (0, 1) for finite input.
#[derive(Default)]
pub struct Sigmoid<T> {
    output: Option<Tensor<T>>,
}

impl<T: Real> Sigmoid<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let y = self.infer(x);
        self.output = Some(y.clone());
        y
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let y = self.output.take().expect("sigmoid backward without forward");
        let mut g = grad.to_owned();
        g.zip_mut_with(&y, |g, &y| *g *= y * (T::one() - y));
        g
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.mapv(sigmoid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_layer;
    use ndarray::Array4;

    fn ramp() -> Array4<f64> {
        // avoids exact zeros, where the rectifiers have a kink
        Array4::from_shape_fn((2, 2, 3, 3), |(n, c, h, w)| {
            (n as f64 - 0.5) * (c as f64 + 1.0) + 0.37 * h as f64 - 0.41 * w as f64 + 0.013
        })
    }

    #[test]
    fn leaky_relu_values_and_grad() {
        let mut l = LeakyRelu::<f64>::new(0.2);
        let y = l.infer(&Array4::from_shape_vec((1, 1, 1, 2), vec![-1.0, 2.0]).unwrap());
        assert_eq!(y.as_slice().unwrap(), &[-0.2, 2.0]);
        assert!(check_layer(&mut l, &ramp(), Mode::Train, 1e-6, usize::MAX, 0).max_rel_error < 1e-6);
    }

    #[test]
    fn relu_and_sigmoid_grads() {
        assert!(check_layer(&mut Relu::new(), &ramp(), Mode::Train, 1e-6, usize::MAX, 0).max_rel_error < 1e-6);
        assert!(check_layer(&mut Sigmoid::new(), &ramp(), Mode::Train, 1e-6, usize::MAX, 0).max_rel_error < 1e-6);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(-800.0f64) < 1e-300);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }
}
