use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Real;

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<F>) -> Self {
        let shape = shape.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: F) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: F) -> Self {
        Self::new(vec![], vec![value])
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> F) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn from_f64_slice(shape: impl Into<Vec<usize>>, values: &[f64]) -> Self {
        Self::new(shape, values.iter().map(|&v| F::from_f64(v)).collect())
    }

    /// Standard normal entries scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| {
            let z: f64 = StandardNormal.sample(rng);
            F::from_f64(z * std)
        })
    }

    /// Uniform entries in `[-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, bound: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| F::from_f64(rng.random_range(-bound..bound)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// The single element of a scalar (or one-element) tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "cannot reshape {:?} into {shape:?}",
            self.shape
        );
        self.shape = shape;
        self
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: F) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn sum_sq(&self) -> F {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows `[start, end)` along axis 0.
    pub fn slice_outer(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.shape[0]);
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Self {
            shape,
            data: self.data[start * inner..end * inner].to_vec(),
        }
    }

    /// Concatenates along axis 0.
    pub fn cat_outer(parts: &[Tensor<F>]) -> Self {
        assert!(!parts.is_empty());
        let tail = parts[0].shape[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.shape[1..], tail[..], "cat_outer trailing shape mismatch");
            rows += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Self { shape, data }
    }
}
