use mdfeat_core::rng::Rng;
use mdfeat_core::Real;
use ndarray::{Array, Dimension, ShapeBuilder};
use rand::Rng as _;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T, D: Dimension> {
    pub value: Array<T, D>,
    pub grad: Array<T, D>,
}

/// Flat mutable view of one parameter, as seen by optimizers and
/// checkpoints.
pub struct ParamRef<'a, T> {
    pub shape: Vec<usize>,
    pub value: &'a mut [T],
    pub grad: &'a mut [T],
}

impl<T: Real, D: Dimension> Param<T, D> {
    pub fn new(value: Array<T, D>) -> Self {
        let grad = Array::from_elem(value.raw_dim(), T::zero());
        Self { value, grad }
    }

    pub fn zeros<Sh: ShapeBuilder<Dim = D>>(shape: Sh) -> Self {
        Self::new(Array::from_elem(shape, T::zero()))
    }

    /// Entries uniform in `[-bound, bound]`.
    pub fn uniform<Sh: ShapeBuilder<Dim = D>>(shape: Sh, bound: f64, rng: &mut Rng) -> Self {
        let mut value = Array::from_elem(shape, T::zero());
        for v in value.iter_mut() {
            *v = T::lit(rng.random_range(-bound..=bound));
        }
        Self::new(value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn view_mut(&mut self) -> ParamRef<'_, T> {
        let shape = self.value.shape().to_vec();
        ParamRef {
            shape,
            value: self.value.as_slice_mut().expect("parameters are stored contiguously"),
            grad: self.grad.as_slice_mut().expect("gradients are stored contiguously"),
        }
    }
}

/// Anything holding trainable parameters in a fixed order.
pub trait Parameters<T: Real> {
    fn params(&mut self) -> Vec<ParamRef<'_, T>>;

    fn zero_grad(&mut self) {
        for p in self.params() {
            p.grad.fill(T::zero());
        }
    }

    fn num_params(&mut self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

/// He-uniform bound for a layer followed by ReLU.
pub fn relu_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// LeCun-uniform bound for a linear layer.
pub fn linear_bound(fan_in: usize) -> f64 {
    (3.0 / fan_in as f64).sqrt()
}
