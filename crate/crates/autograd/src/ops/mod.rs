//! Differentiable operations, exposed as methods on [`Var`](crate::Var).

mod attention;
mod basic;
mod conv;
mod loss;
mod norm;

pub use loss::softmax_last;

/// Splits a shape into (rows, last) for ops that act on the last axis.
pub(crate) fn rows_last(shape: &[usize]) -> (usize, usize) {
    let last = *shape.last().expect("rank >= 1");
    (shape[..shape.len() - 1].iter().product(), last)
}

/// Splits a channels-last shape `[batch, ..spatial, channels]` into
/// (batch, spatial, channels).
pub(crate) fn batch_spatial_channels(shape: &[usize]) -> (usize, usize, usize) {
    assert!(shape.len() >= 2, "expected [batch, .., channels], got {shape:?}");
    let b = shape[0];
    let c = shape[shape.len() - 1];
    let s = shape[1..shape.len() - 1].iter().product();
    (b, s, c)
}
