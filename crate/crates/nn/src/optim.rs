use crate::layers::Layer;
use crate::tensor::Real;

/// Step decay: `base * factor^(step / interval)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub interval: usize,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self { base, factor: 1.0, interval: usize::MAX }
    }

    pub fn at(&self, step: usize) -> f64 {
        let k = if self.interval == 0 { 0 } else { step / self.interval };
        self.base * self.factor.powi(k as i32)
    }
}

/// Stochastic gradient descent with heavy-ball momentum:
/// `v = momentum * v + g; p -= lr * v`.
pub struct Sgd<T> {
    pub schedule: LrSchedule,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(schedule: LrSchedule, momentum: f64) -> Self {
        Self { schedule, momentum, velocity: Vec::new() }
    }

    /// Applies one update to every learnable parameter of `net` using its
    /// accumulated gradients, then clears them.
    pub fn step(&mut self, net: &mut dyn Layer<T>, step: usize) {
        let lr = T::of(self.schedule.at(step));
        let mu = T::of(self.momentum);
        let velocity = &mut self.velocity;
        let mut idx = 0;
        net.visit_mut(&mut |_, p| {
            if !p.is_learnable() {
                return;
            }
            if velocity.len() <= idx {
                velocity.push(vec![T::zero(); p.len()]);
            }
            let v = &mut velocity[idx];
            for ((w, g), v) in p.value.iter_mut().zip(p.grad.iter_mut()).zip(v.iter_mut()) {
                *v = mu * *v + *g;
                *w -= lr * *v;
                *g = T::zero();
            }
            idx += 1;
        });
    }
}

/// Adam with bias correction; the learning rate follows the same schedule.
pub struct Adam<T> {
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(schedule: LrSchedule) -> Self {
        Self { schedule, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    pub fn step(&mut self, net: &mut dyn Layer<T>, step: usize) {
        self.t += 1;
        let lr = self.schedule.at(step) * (1.0 - self.beta2.powi(self.t)).sqrt() / (1.0 - self.beta1.powi(self.t));
        let (lr, b1, b2, eps) = (T::of(lr), T::of(self.beta1), T::of(self.beta2), T::of(self.eps));
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        net.visit_mut(&mut |_, p| {
            if !p.is_learnable() {
                return;
            }
            if ms.len() <= idx {
                ms.push(vec![T::zero(); p.len()]);
                vs.push(vec![T::zero(); p.len()]);
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            for i in 0..p.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                p.value[i] -= lr * m[i] / (v[i].sqrt() + eps);
                p.grad[i] = T::zero();
            }
            idx += 1;
        });
    }
}

/// Either optimizer behind one interface.
pub enum Optimizer<T> {
    Sgd(Sgd<T>),
    Adam(Adam<T>),
}

impl<T: Real> Optimizer<T> {
    pub fn step(&mut self, net: &mut dyn Layer<T>, step: usize) {
        match self {
            Optimizer::Sgd(o) => o.step(net, step),
            Optimizer::Adam(o) => o.step(net, step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Linear, Mode};
    use crate::loss::l1;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adam_reduces_a_simple_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lin = Linear::<f64>::new(&mut rng, 3, 2);
        let x = Array4::from_shape_vec((4, 3, 1, 1), (0..12).map(|v| v as f64 / 12.0).collect()).unwrap();
        let target = Array4::from_elem((4, 2, 1, 1), 0.7);
        let mut opt = Adam::new(LrSchedule::constant(0.01));
        let first = l1(&lin.infer(&x), &target).0;
        for step in 0..300 {
            let y = lin.forward(&x, Mode::Train);
            let (_, g) = l1(&y, &target);
            lin.backward(&g);
            opt.step(&mut lin, step);
        }
        let last = l1(&lin.infer(&x), &target).0;
        assert!(last < 0.2 * first, "{first} -> {last}");
    }

    #[test]
    fn step_decay_schedule() {
        let s = LrSchedule { base: 0.1, factor: 0.1, interval: 10 };
        assert_eq!(s.at(0), 0.1);
        assert!((s.at(10) - 0.01).abs() < 1e-15);
        assert!((s.at(25) - 0.001).abs() < 1e-15);
        assert_eq!(LrSchedule::constant(0.5).at(1_000_000), 0.5);
    }

    #[test]
    fn sgd_reduces_a_simple_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = Linear::<f64>::new(&mut rng, 3, 2);
        let x = Array4::from_shape_vec((4, 3, 1, 1), (0..12).map(|v| v as f64 / 12.0).collect()).unwrap();
        let target = Array4::from_elem((4, 2, 1, 1), 0.7);
        let mut opt = Sgd::new(LrSchedule::constant(0.05), 0.9);
        let first = l1(&lin.infer(&x), &target).0;
        for step in 0..100 {
            let y = lin.forward(&x, Mode::Train);
            let (_, g) = l1(&y, &target);
            lin.backward(&g);
            opt.step(&mut lin, step);
        }
        let last = l1(&lin.infer(&x), &target).0;
        assert!(last < 0.2 * first, "{first} -> {last}");
    }
}
