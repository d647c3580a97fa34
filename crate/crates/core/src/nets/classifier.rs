use rand::Rng;
use vidsteg_nn::{BatchNorm2d, Conv2d, Flatten, Layer, LeakyRelu, Linear, Mode, Param, Real, Sequential, Tensor};

use super::hnet::LEAKY_SLOPE;

pub const CLASSIFIER_CONVS: usize = 5;
const MULT: [usize; CLASSIFIER_CONVS] = [1, 2, 4, 8, 8];

/// Five strided conv stages (4x4, stride 2) followed by one fully-connected
/// layer producing `outputs` logits. The input size is fixed at construction
/// because the head sees the flattened feature map.
pub struct ConvClassifier<T> {
    pub base: usize,
    pub input_size: (usize, usize),
    pub outputs: usize,
    body: Sequential<T>,
}

impl<T: Real> ConvClassifier<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, base: usize, input_size: (usize, usize), outputs: usize) -> Self {
        let (h, w) = input_size;
        let scale = 1 << CLASSIFIER_CONVS;
        assert!(h % scale == 0 && w % scale == 0, "classifier input must be a multiple of {scale}");
        let mut body = Sequential::new();
        let mut c_in = 3;
        for m in MULT {
            let c_out = m * base;
            body = body
                .push(Conv2d::new(rng, c_in, c_out, 4, 2, 1))
                .push(BatchNorm2d::new(c_out))
                .push(LeakyRelu::new(LEAKY_SLOPE));
            c_in = c_out;
        }
        let features = c_in * (h / scale) * (w / scale);
        body = body.push(Flatten::new()).push(Linear::new(rng, features, outputs));
        Self { base, input_size, outputs, body }
    }
}

impl<T: Real> Layer<T> for ConvClassifier<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        self.body.forward(x, mode)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        self.body.backward(grad)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.body.infer(x)
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.body.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.body.visit_mut(f)
    }
}
