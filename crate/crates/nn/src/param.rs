use std::collections::BTreeMap;

use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer and counted as a learnable scalar.
    Learnable,
    /// Persistent state such as batch-norm running statistics.
    Buffer,
}

/// A flat parameter tensor together with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub kind: ParamKind,
}

impl<T: Real> Param<T> {
    pub fn new(shape: &[usize], value: Vec<T>, kind: ParamKind) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "shape/value mismatch");
        let grad = vec![T::zero(); value.len()];
        Self { shape: shape.to_vec(), value, grad, kind }
    }

    pub fn filled(shape: &[usize], v: T, kind: ParamKind) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![v; n], kind)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn is_learnable(&self) -> bool {
        self.kind == ParamKind::Learnable
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Named snapshot of every parameter and buffer of a network, in `f64`.
///
/// Used for checkpoints and for keeping the best-so-far weights in memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateDict {
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl StateDict {
    pub fn insert<T: Real>(&mut self, name: &str, p: &Param<T>) {
        let values = p.value.iter().map(|v| v.as_f64()).collect();
        self.tensors.insert(name.to_string(), (p.shape.clone(), values));
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}
