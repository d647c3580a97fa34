use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{concatenate, s, Array4, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Activations are always laid out as `[batch, channels, height, width]`.
pub type Tensor<T> = Array4<T>;

/// Floating point element type usable by every layer.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Concatenates two activations along the channel axis.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    concatenate(Axis(1), &[a.view(), b.view()])
        .expect("concat: batch and spatial dims must agree")
        .as_standard_layout()
        .to_owned()
}

/// Splits a gradient over a channel concatenation back into its two halves.
pub fn split_channels<T: Real>(g: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let a = g.slice(s![.., ..first, .., ..]).to_owned();
    let b = g.slice(s![.., first.., .., ..]).to_owned();
    (a, b)
}

/// Casts a tensor between float widths.
pub fn cast<A: Real, B: Real>(x: &Tensor<A>) -> Tensor<B> {
    x.mapv(|v| B::of(v.as_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_is_identity() {
        let a = Array4::from_shape_fn((2, 3, 4, 5), |(n, c, h, w)| (n + c * 10 + h * 100 + w) as f32);
        let b = Array4::from_shape_fn((2, 2, 4, 5), |(n, c, h, w)| -((n + c + h + w) as f32));
        let cat = concat_channels(&a, &b);
        assert_eq!(cat.dim(), (2, 5, 4, 5));
        let (a2, b2) = split_channels(&cat, 3);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }
}
