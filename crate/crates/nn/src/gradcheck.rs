//! Central finite-difference checks of analytic gradients.

use ndarray::Dimension;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{Layer, Mode};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    /// Number of scalar parameters and inputs compared.
    pub checked: usize,
    pub max_rel_error: f64,
    /// Name and element offset of the worst parameter, if any.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric gradient at the worst entry.
    pub worst_values: (f64, f64),
}

const REL_FLOOR: f64 = 1e-8;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Like [`rel_error`], but differences below the rounding noise of the
/// central difference count as exact.
fn fd_error(analytic: f64, numeric: f64, loss_scale: f64, h: f64) -> f64 {
    let noise = 100.0 * f64::EPSILON * loss_scale.max(1.0) / h;
    if (analytic - numeric).abs() <= noise {
        0.0
    } else {
        rel_error(analytic, numeric)
    }
}

/// Location of one learnable scalar inside a layer.
#[derive(Clone, Debug)]
struct Slot {
    name: String,
    offset: usize,
}

fn learnable_slots(layer: &dyn Layer<f64>) -> Vec<Slot> {
    let mut slots = Vec::new();
    layer.visit(&mut |name, p| {
        if p.is_learnable() {
            slots.extend((0..p.len()).map(|offset| Slot { name: name.to_string(), offset }));
        }
    });
    slots
}

fn nudge(layer: &mut dyn Layer<f64>, slot: &Slot, delta: f64) {
    layer.visit_mut(&mut |name, p| {
        if name == slot.name {
            p.value[slot.offset] += delta;
        }
    });
}

fn grad_at(layer: &dyn Layer<f64>, slot: &Slot) -> f64 {
    let mut g = 0.0;
    layer.visit(&mut |name, p| {
        if name == slot.name {
            g = p.grad[slot.offset];
        }
    });
    g
}

/// Compares the gradient of `loss(layer(x))` w.r.t. up to `max_params`
/// sampled learnable parameters and a handful of input elements.
///
/// `loss` returns the scalar loss and its gradient w.r.t. the layer output.
pub fn check_with_loss<F>(
    layer: &mut dyn Layer<f64>,
    x: &Tensor<f64>,
    mode: Mode,
    loss: F,
    h: f64,
    max_params: usize,
    seed: u64,
) -> GradReport
where
    F: Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layer.zero_grad();
    let y = layer.forward(x, mode);
    let (_, gy) = loss(&y);
    let gx = layer.backward(&gy);

    let slots = learnable_slots(layer);
    let picked: Vec<Slot> = if slots.len() <= max_params {
        slots
    } else {
        sample(&mut rng, slots.len(), max_params).into_iter().map(|i| slots[i].clone()).collect()
    };

    let mut report = GradReport::default();
    let eval = |layer: &mut dyn Layer<f64>| loss(&layer.forward(x, mode)).0;
    for slot in &picked {
        let analytic = grad_at(layer, slot);
        nudge(layer, slot, h);
        let plus = eval(layer);
        nudge(layer, slot, -2.0 * h);
        let minus = eval(layer);
        nudge(layer, slot, h);
        let numeric = (plus - minus) / (2.0 * h);
        let err = fd_error(analytic, numeric, plus.abs().max(minus.abs()), h);
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((slot.name.clone(), slot.offset));
            report.worst_values = (analytic, numeric);
        }
    }

    let n_inputs = x.len().min(8);
    for i in sample(&mut rng, x.len(), n_inputs) {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_slice_mut().unwrap()[i] += h;
        xm.as_slice_mut().unwrap()[i] -= h;
        let plus = loss(&layer.forward(&xp, mode)).0;
        let minus = loss(&layer.forward(&xm, mode)).0;
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = gx.as_standard_layout().as_slice().unwrap()[i];
        let err = fd_error(analytic, numeric, plus.abs().max(minus.abs()), h);
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(("<input>".into(), i));
            report.worst_values = (analytic, numeric);
        }
    }
    report
}

/// Gradient check against a fixed random linear functional of the output.
pub fn check_layer(
    layer: &mut dyn Layer<f64>,
    x: &Tensor<f64>,
    mode: Mode,
    h: f64,
    max_params: usize,
    seed: u64,
) -> GradReport {
    let probe_shape = layer.infer(x).raw_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let n = probe_shape.size();
    let w = crate::init::normal::<f64, _>(&mut rng, n, 1.0);
    let probe = Tensor::from_shape_vec(probe_shape, w).unwrap();
    check_with_loss(layer, x, mode, |y| ((y * &probe).sum(), probe.clone()), h, max_params, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_noise_is_not_an_error() {
        assert_eq!(fd_error(2.2e-16, 1.4e-8, 300.0, 1e-6), 0.0);
        assert!(fd_error(0.0, 1e-3, 300.0, 1e-6) > 0.99);
        assert!(fd_error(1.0, 1.01, 300.0, 1e-6) > 5e-3);
        assert!(fd_error(1.0, 1.0 + 1e-7, 300.0, 1e-6) < 1e-6);
    }
}
