//! Minimal dense array engine with handwritten per-op backward passes.
//!
//! All image tensors are NCHW. Each differentiable op comes as a pair of
//! functions: a forward that returns its output (plus whatever it needs to
//! save) and a backward that consumes the saved values together with the
//! upstream gradient. There is no general tape; the model code strings the
//! pairs together in reverse order.

mod conv;
mod norm;
mod ops;
mod optim;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

use crate::error::{shape_err, Error, Result};

pub use conv::{conv2d, conv2d_backward, depthwise_conv2d, depthwise_conv2d_backward};
pub use norm::{
    batchnorm_backward, batchnorm_eval, batchnorm_forward, BnCache, BnMode, BnState, BN_EPS,
    BN_MOMENTUM,
};
pub use ops::{
    add, global_avg_pool, global_avg_pool_backward, linear, linear_backward, relu, relu_backward,
    softmax_cross_entropy,
};
pub use optim::{cosine_lr, sgd_step, SgdConfig};

/// Element type of a [`Tensor`]. Implemented for `f32` (training) and `f64`
/// (gradient checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }
    fn as_f64(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense n-dimensional array with an optional gradient buffer.
///
/// `grad == None` means nothing has written a gradient since the last
/// [`Tensor::take_grad`]; the optimizer uses that to skip untouched
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(shape_err("tensor", format!("zero dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); numel],
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
            grad: None,
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..numel).map(&mut f).collect(),
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    /// Adds `g` into the gradient buffer.
    pub fn accumulate_grad(&mut self, g: &[T]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(shape_err(
                "accumulate_grad",
                format!("{} vs {}", g.len(), self.data.len()),
            ));
        }
        for (a, &b) in self.grad_mut().iter_mut().zip(g) {
            *a += b;
        }
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(shape_err(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// `(N, C, H, W)` of a rank-4 tensor.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(shape_err(op, format!("expected rank 4, got {:?}", self.shape))),
        }
    }

    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(shape_err(op, format!("expected rank 2, got {:?}", self.shape))),
        }
    }

    pub fn check_finite(&self, op: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(op.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Converts element type, dropping any gradient.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
            grad: None,
        }
    }

    /// Rows `start..start + len` along the leading dimension.
    pub fn slice_batch(&self, start: usize, len: usize) -> Result<Self> {
        let n = self.shape[0];
        if start + len > n || len == 0 {
            return Err(shape_err(
                "slice_batch",
                format!("{start}..{} of {n}", start + len),
            ));
        }
        let row: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = len;
        Ok(Self {
            shape,
            data: self.data[start * row..(start + len) * row].to_vec(),
            grad: None,
        })
    }

    /// Gathers rows of the leading dimension by index.
    pub fn gather_batch(&self, indices: &[usize]) -> Result<Self> {
        let n = self.shape[0];
        let row: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            if i >= n {
                return Err(shape_err("gather_batch", format!("index {i} of {n}")));
            }
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_is_lazily_allocated() {
        let mut t = Tensor::<f64>::zeros(&[3]);
        assert!(t.grad().is_none());
        t.accumulate_grad(&[1.0, 2.0, 3.0]).unwrap();
        t.accumulate_grad(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0]);
        assert_eq!(t.take_grad().unwrap().len(), 3);
        assert!(t.grad().is_none());
    }

    #[test]
    fn non_finite_detected() {
        let t = Tensor::<f32>::new(vec![2], vec![1.0, f32::NAN]).unwrap();
        assert!(matches!(t.check_finite("x"), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gather_and_slice() {
        let t = Tensor::<f32>::from_fn(&[3, 2], |i| i as f32);
        let g = t.gather_batch(&[2, 0]).unwrap();
        assert_eq!(g.data(), &[4.0, 5.0, 0.0, 1.0]);
        let s = t.slice_batch(1, 2).unwrap();
        assert_eq!(s.data(), &[2.0, 3.0, 4.0, 5.0]);
        assert!(t.slice_batch(2, 2).is_err());
    }
}
