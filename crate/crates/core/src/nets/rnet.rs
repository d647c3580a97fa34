use rand::Rng;
use vidsteg_nn::layers::{visit_prefixed, visit_prefixed_mut};
use vidsteg_nn::tensor::{concat_channels, split_channels};
use vidsteg_nn::{BatchNorm2d, Conv2d, Layer, Mode, Param, Real, Relu, Sequential, Sigmoid, Tensor};

pub const REVEAL_BLOCKS: usize = 5;

/// Parallel 3x3 and 5x5 stride-1 convolutions whose outputs are concatenated.
pub struct MultiKernel<T> {
    pub branch_width: usize,
    k3: Conv2d<T>,
    k5: Conv2d<T>,
}

impl<T: Real> MultiKernel<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, in_channels: usize, branch_width: usize) -> Self {
        Self {
            branch_width,
            k3: Conv2d::new(rng, in_channels, branch_width, 3, 1, 1),
            k5: Conv2d::new(rng, in_channels, branch_width, 5, 1, 2),
        }
    }
}

impl<T: Real> Layer<T> for MultiKernel<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        concat_channels(&self.k3.forward(x, mode), &self.k5.forward(x, mode))
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let (g3, g5) = split_channels(grad, self.branch_width);
        let mut gx = self.k3.backward(&g3);
        gx += &self.k5.backward(&g5);
        gx
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        concat_channels(&self.k3.infer(x), &self.k5.infer(x))
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        visit_prefixed("k3", &self.k3, f);
        visit_prefixed("k5", &self.k5, f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        visit_prefixed_mut("k3", &mut self.k3, f);
        visit_prefixed_mut("k5", &mut self.k5, f);
    }
}

/// Reveal network: five multi-kernel blocks at full resolution and a 1x1
/// sigmoid head.
pub struct RNet<T> {
    pub branch_width: usize,
    body: Sequential<T>,
}

impl<T: Real> RNet<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, branch_width: usize) -> Self {
        let mut body = Sequential::new();
        let mut c_in = 3;
        for _ in 0..REVEAL_BLOCKS {
            body = body
                .push(MultiKernel::new(rng, c_in, branch_width))
                .push(BatchNorm2d::new(2 * branch_width))
                .push(Relu::new());
            c_in = 2 * branch_width;
        }
        body = body.push(Conv2d::new(rng, c_in, 3, 1, 1, 0)).push(Sigmoid::new());
        Self { branch_width, body }
    }

    /// Output of every block (after normalization and activation) plus the head.
    pub fn infer_traced(&self, x: &Tensor<T>) -> (Vec<Tensor<T>>, Tensor<T>) {
        // body layout: [mk, bn, relu] x 5, conv, sigmoid
        let mut blocks = Vec::with_capacity(REVEAL_BLOCKS);
        let mut h = x.clone();
        let mut out = None;
        self.body.visit_layers(&mut |i, layer| {
            h = layer.infer(&h);
            if i % 3 == 2 && blocks.len() < REVEAL_BLOCKS {
                blocks.push(h.clone());
            }
            out = Some(h.clone());
        });
        (blocks, out.unwrap())
    }
}

impl<T: Real> Layer<T> for RNet<T> {
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
