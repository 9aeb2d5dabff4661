//! Dense row-major tensors of rank 1 to 4.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Largest supported rank.
pub const MAX_RANK: usize = 4;

/// Dense, row-major value array.
///
/// The data length always equals the product of the extents. Images and
/// activations are `channels x height x width`; convolution kernels are
/// `out x in x kh x kw`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S = f32> {
    shape: Vec<usize>,
    data: Vec<S>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::shape(format!(
            "rank must be in 1..={MAX_RANK}, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<S: Scalar> Tensor<S> {
    /// Tensor of `shape` with every element equal to `fill`.
    pub fn new(shape: &[usize], fill: S) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; n],
        })
    }

    /// Zero tensor.
    ///
    /// # Panics
    /// If the shape is empty, has a zero extent or exceeds rank 4.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, S::zero()).expect("valid shape")
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![S::zero(); other.data.len()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| S::lit(v)).collect())
    }

    /// Normally distributed tensor; deterministic for a given generator state.
    pub fn randn(shape: &[usize], mean: S, stddev: S, rng: &mut Rng) -> Result<Self> {
        if !(stddev >= S::zero()) {
            return Err(Error::invalid(format!("negative stddev {stddev}")));
        }
        let n = check_shape(shape)?;
        let (m, s) = (mean.as_f64(), stddev.as_f64());
        let data = (0..n).map(|_| S::lit(m + s * rng.normal())).collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform values in `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        let n = check_shape(shape)?;
        let data = (0..n).map(|_| S::lit(rng.uniform_in(lo, hi))).collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a C x H x W tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &e)| {
                debug_assert!(i < e, "index {index:?} out of bounds for {:?}", self.shape);
                acc * e + i
            })
    }

    pub fn get(&self, index: &[usize]) -> S {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], v: S) {
        let o = self.offset(index);
        self.data[o] = v;
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    /// `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: S, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> S {
        self.sum() / S::lit(self.data.len() as f64)
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts the element type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::lit(v.as_f64())).collect(),
        }
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool
    where
        S: BitPattern,
    {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.bits() == b.bits())
    }

    /// One channel plane of a `C x H x W` tensor.
    pub fn plane(&self, c: usize) -> &[S] {
        let hw: usize = self.shape[1..].iter().product();
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [S] {
        let hw: usize = self.shape[1..].iter().product();
        &mut self.data[c * hw..(c + 1) * hw]
    }
}

/// Raw bit access for bit-exact comparisons.
pub trait BitPattern {
    fn bits(&self) -> u64;
}

impl BitPattern for f32 {
    fn bits(&self) -> u64 {
        self.to_bits() as u64
    }
}

impl BitPattern for f64 {
    fn bits(&self) -> u64 {
        self.to_bits()
    }
}

/// A value together with the gradient accumulated for it.
#[derive(Clone, Debug)]
pub struct DualSlot<S = f32> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

impl<S: Scalar> DualSlot<S> {
    pub fn new(value: Tensor<S>) -> Self {
        let grad = Tensor::zeros_like(&value);
        Self { value, grad }
    }

    pub fn accumulate(&mut self, g: &Tensor<S>) -> Result<()> {
        self.grad.add_assign(g)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }
}
