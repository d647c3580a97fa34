//! Losses return `(value, d value / d prediction)`.

use ndarray::Array2;

use crate::layers::sigmoid;
use crate::tensor::{Real, Tensor};

/// Mean absolute error over every element.
pub fn l1<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> (f64, Tensor<T>) {
    assert_eq!(pred.dim(), target.dim(), "l1 shape mismatch");
    let n = pred.len() as f64;
    let mut total = 0.0;
    let scale = T::of(1.0 / n);
    let mut grad = pred.clone();
    grad.zip_mut_with(target, |p, &t| {
        let d = *p - t;
        total += d.abs().as_f64();
        *p = if d > T::zero() {
            scale
        } else if d < T::zero() {
            -scale
        } else {
            T::zero()
        };
    });
    (total / n, grad)
}

/// Row-wise softmax of `[N, K, 1, 1]` logits.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Array2<f64> {
    let (n, k, _, _) = logits.dim();
    let mut p = Array2::zeros((n, k));
    for i in 0..n {
        let row: Vec<f64> = (0..k).map(|j| logits[[i, j, 0, 0]].as_f64()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..k {
            p[[i, j]] = exps[j] / sum;
        }
    }
    p
}

/// Mean softmax cross-entropy for integer class labels.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> (f64, Tensor<T>) {
    let (n, k, _, _) = logits.dim();
    assert_eq!(n, labels.len(), "one label per row");
    let p = softmax(logits);
    let mut loss = 0.0;
    let mut grad = Tensor::<T>::zeros((n, k, 1, 1));
    for (i, &label) in labels.iter().enumerate() {
        assert!(label < k, "label {label} out of range");
        loss -= p[[i, label]].max(1e-300).ln();
        for j in 0..k {
            let onehot = if j == label { 1.0 } else { 0.0 };
            grad[[i, j, 0, 0]] = T::of((p[[i, j]] - onehot) / n as f64);
        }
    }
    (loss / n as f64, grad)
}

/// Mean binary cross-entropy on `[N, 1, 1, 1]` logits with targets in [0, 1].
pub fn bce_with_logits<T: Real>(logits: &Tensor<T>, targets: &[f64]) -> (f64, Tensor<T>) {
    let n = logits.dim().0;
    assert_eq!(logits.len(), n, "bce expects one logit per row");
    assert_eq!(n, targets.len(), "one target per row");
    let mut loss = 0.0;
    let mut grad = Tensor::<T>::zeros((n, 1, 1, 1));
    for (i, &t) in targets.iter().enumerate() {
        let z = logits[[i, 0, 0, 0]].as_f64();
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad[[i, 0, 0, 0]] = T::of((sigmoid(z) - t) / n as f64);
    }
    (loss / n as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn numeric<F: Fn(&Tensor<f64>) -> f64>(f: F, x: &Tensor<f64>) -> Tensor<f64> {
        let h = 1e-6;
        let mut g = x.clone();
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a.as_slice_mut().unwrap()[i] += h;
            b.as_slice_mut().unwrap()[i] -= h;
            g.as_slice_mut().unwrap()[i] = (f(&a) - f(&b)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn l1_constant_gap() {
        let a = Array4::<f64>::from_elem((1, 3, 2, 2), 0.3);
        let b = Array4::<f64>::from_elem((1, 3, 2, 2), 0.4);
        let (v, g) = l1(&a, &b);
        assert!((v - 0.1).abs() < 1e-12);
        assert!(g.iter().all(|&x| (x + 1.0 / 12.0).abs() < 1e-15));
        assert_eq!(l1(&a, &a).0, 0.0);
    }

    #[test]
    fn cross_entropy_gradient() {
        let z = Array4::from_shape_vec((2, 4, 1, 1), vec![0.1, -0.3, 2.0, 0.5, 1.0, 1.0, -1.0, 0.0]).unwrap();
        let labels = [2, 0];
        let (_, g) = cross_entropy(&z, &labels);
        let n = numeric(|x| cross_entropy(x, &labels).0, &z);
        assert!((&g - &n).iter().all(|d| d.abs() < 1e-8));
        let p = softmax(&z);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_gradient_and_value() {
        let z = Array4::from_shape_vec((3, 1, 1, 1), vec![0.0, 3.0, -2.0]).unwrap();
        let t = [1.0, 0.0, 1.0];
        let (v, g) = bce_with_logits(&z, &t);
        let n = numeric(|x| bce_with_logits(x, &t).0, &z);
        assert!((&g - &n).iter().all(|d| d.abs() < 1e-8));
        let expect = ((2f64).ln() + (1.0 + 3f64.exp()).ln() + (1.0 + 2f64.exp()).ln()) / 3.0;
        assert!((v - expect).abs() < 1e-12);
    }
}
