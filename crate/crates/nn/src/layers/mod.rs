mod act;
mod conv;
mod linear;
mod norm;

pub use act::{sigmoid, LeakyRelu, Relu, Sigmoid};
pub use conv::{Conv2d, ConvTranspose2d};
pub use linear::{Flatten, Linear};
pub use norm::BatchNorm2d;

use thiserror::Error;

use crate::param::{Param, StateDict};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics are updated.
    Train,
    /// Running statistics, nothing is mutated except the backward cache.
    Eval,
}

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("unexpected tensor `{0}`")]
    Unexpected(String),
}

pub trait Layer<T: Real>: Send + Sync {
    /// Forward pass that records whatever `backward` needs.
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T>;

    /// Accumulates parameter gradients and returns the gradient w.r.t. the
    /// input of the most recent `forward`.
    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T>;

    /// Evaluation-mode forward pass without side effects.
    fn infer(&self, x: &Tensor<T>) -> Tensor<T>;

    fn visit(&self, _f: &mut dyn FnMut(&str, &Param<T>)) {}

    fn visit_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Param<T>)) {}

    /// Number of learnable scalars.
    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| {
            if p.is_learnable() {
                n += p.len()
            }
        });
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    fn state_dict(&self) -> StateDict {
        let mut sd = StateDict::default();
        self.visit(&mut |name, p| sd.insert(name, p));
        sd
    }

    fn load_state_dict(&mut self, sd: &StateDict) -> Result<(), StateError> {
        let mut err = None;
        let mut seen = 0;
        self.visit_mut(&mut |name, p| {
            if err.is_some() {
                return;
            }
            match sd.tensors.get(name) {
                None => err = Some(StateError::Missing(name.to_string())),
                Some((shape, _)) if *shape != p.shape => {
                    err = Some(StateError::Shape {
                        name: name.to_string(),
                        expected: p.shape.clone(),
                        found: shape.clone(),
                    })
                }
                Some((_, values)) => {
                    seen += 1;
                    for (dst, &v) in p.value.iter_mut().zip(values) {
                        *dst = T::of(v);
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen != sd.len() {
            let mut known = Vec::new();
            self.visit(&mut |name, _| known.push(name.to_string()));
            if let Some(extra) = sd.tensors.keys().find(|k| !known.contains(k)) {
                return Err(StateError::Unexpected(extra.clone()));
            }
        }
        Ok(())
    }
}

/// Layers applied one after another; parameters are named `"{index}.{name}"`.
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Real> Default for Sequential<T> {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}

impl<T: Real> Sequential<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, layer: impl Layer<T> + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Calls `f` with the index and a shared reference of every layer in order.
    pub fn visit_layers(&self, f: &mut dyn FnMut(usize, &dyn Layer<T>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            f(i, layer.as_ref());
        }
    }
}

impl<T: Real> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let mut iter = self.layers.iter_mut();
        let Some(first) = iter.next() else {
            return x.clone();
        };
        let mut h = first.forward(x, mode);
        for layer in iter {
            h = layer.forward(&h, mode);
        }
        h
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut iter = self.layers.iter();
        let Some(first) = iter.next() else {
            return x.clone();
        };
        let mut h = first.infer(x);
        for layer in iter {
            h = layer.infer(&h);
        }
        h
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&mut |name, p| f(&format!("{i}.{name}"), p));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&mut |name, p| f(&format!("{i}.{name}"), p));
        }
    }
}

/// Prefixes every parameter name visited through `inner` with `prefix.`.
pub fn visit_prefixed<T: Real>(prefix: &str, inner: &dyn Layer<T>, f: &mut dyn FnMut(&str, &Param<T>)) {
    inner.visit(&mut |name, p| f(&format!("{prefix}.{name}"), p));
}

pub fn visit_prefixed_mut<T: Real>(prefix: &str, inner: &mut dyn Layer<T>, f: &mut dyn FnMut(&str, &mut Param<T>)) {
    inner.visit_mut(&mut |name, p| f(&format!("{prefix}.{name}"), p));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> Sequential<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sequential::new().push(Conv2d::new(&mut rng, 2, 3, 3, 1, 1)).push(BatchNorm2d::new(3)).push(LeakyRelu::new(0.2))
    }

    #[test]
    fn parameter_names_carry_layer_index() {
        let net = small_net(0);
        let mut names = Vec::new();
        net.visit(&mut |n, _| names.push(n.to_string()));
        assert_eq!(names, ["0.weight", "0.bias", "1.gamma", "1.beta", "1.running_mean", "1.running_var"]);
        // 3*2*3*3 + 3 + 2*3
        assert_eq!(net.num_parameters(), 54 + 3 + 6);
    }

    #[test]
    fn state_dict_roundtrip() {
        let a = small_net(1);
        let mut b = small_net(2);
        assert_ne!(a.state_dict(), b.state_dict());
        b.load_state_dict(&a.state_dict()).unwrap();
        assert_eq!(a.state_dict(), b.state_dict());
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let a = small_net(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut other = Sequential::new().push(Conv2d::<f64>::new(&mut rng, 2, 4, 3, 1, 1));
        let err = other.load_state_dict(&a.state_dict()).unwrap_err();
        assert!(matches!(err, StateError::Shape { .. }));
    }
}
