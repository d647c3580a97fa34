//! A small CPU neural-network substrate: NCHW tensors, convolution and
//! transposed convolution via im2col + GEMM (direct row sweeps for
//! stride-1 kernels), batch normalization, the usual
//! activations, a fully-connected layer, pixel/classification losses and an
//! SGD optimizer.
//!
//! Every layer caches what it needs during [`Layer::forward`] and consumes the
//! cache in [`Layer::backward`]. [`Layer::infer`] is the cache-free evaluation
//! path and only needs `&self`, so a frozen network can be shared between
//! threads.
//!
//! All layers are generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

pub mod direct;
pub mod gradcheck;
pub mod im2col;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod param;
pub mod tensor;

pub use layers::{
    BatchNorm2d, Conv2d, ConvTranspose2d, Flatten, Layer, LeakyRelu, Linear, Mode, Relu, Sequential, Sigmoid,
};
pub use optim::{Adam, LrSchedule, Optimizer, Sgd};
pub use param::{Param, ParamKind, StateDict};
pub use tensor::{Real, Tensor};
