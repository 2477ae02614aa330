//! Dense row-major tensors over a configurable floating point type.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating point element type. `f64` is used for gradient checking, `f32` for training.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.contains(&0) {
            return Err(Error::Shape {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![R::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: R) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn vector(data: Vec<R>) -> Self {
        assert!(!data.is_empty(), "vector must be non-empty");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<R>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&x| R::of(x)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = R::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns of a matrix (1 for a vector).
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[R] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> R {
        self.data[i * self.cols() + j]
    }

    pub fn fill(&mut self, value: R) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.f64()).collect()
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| S::of(x.f64())).collect(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x.f64() * x.f64()).sum()
    }

    /// Eager matrix product, used outside the tape (tests and accounting helpers).
    pub fn matmul(&self, other: &Tensor<R>) -> Result<Tensor<R>> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![R::zero(); m * n];
        kernels::matmul(&self.data, &other.data, &mut out, m, k, n);
        Tensor::new(vec![m, n], out)
    }
}

pub(crate) mod kernels {
    use super::Real;

    /// out[m×n] += a[m×k] · b[k×n]
    pub fn matmul<R: Real>(a: &[R], b: &[R], out: &mut [R], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == R::zero() {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }

    /// out[m] += w[m×n] · x[n]
    pub fn matvec<R: Real>(w: &[R], x: &[R], out: &mut [R], m: usize, n: usize) {
        for i in 0..m {
            let row = &w[i * n..(i + 1) * n];
            let mut acc = R::zero();
            for (&a, &b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[i] += acc;
        }
    }

    /// out[n] += wᵀ[n×m] · x[m] for w[m×n]
    pub fn matvec_t<R: Real>(w: &[R], x: &[R], out: &mut [R], m: usize, n: usize) {
        for i in 0..m {
            let xi = x[i];
            if xi == R::zero() {
                continue;
            }
            let row = &w[i * n..(i + 1) * n];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
    }

    /// out[m×n] += x[m] ⊗ y[n]
    pub fn outer<R: Real>(x: &[R], y: &[R], out: &mut [R]) {
        let n = y.len();
        for (i, &xi) in x.iter().enumerate() {
            if xi == R::zero() {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &yj) in row.iter_mut().zip(y) {
                *o += xi * yj;
            }
        }
    }

    pub fn max<R: Real>(x: &[R]) -> R {
        x.iter().copied().fold(R::neg_infinity(), R::max)
    }

    pub fn softmax<R: Real>(x: &[R]) -> Vec<R> {
        let m = max(x);
        let mut out: Vec<R> = x.iter().map(|&v| (v - m).exp()).collect();
        let z: R = out.iter().copied().sum();
        out.iter_mut().for_each(|v| *v = *v / z);
        out
    }

    pub fn log_softmax<R: Real>(x: &[R]) -> Vec<R> {
        let m = max(x);
        let lse = x.iter().map(|&v| (v - m).exp()).sum::<R>().ln() + m;
        x.iter().map(|&v| v - lse).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = Tensor::<f64>::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_computed() {
        let a = Tensor::<f64>::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap();
        let b = Tensor::<f64>::from_f64(&[2, 1], &[5., 6.]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[17., 39.]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Tensor::<f64>::zeros(&[3, 2]);
        let b = Tensor::<f64>::from_f64(&[2, 2], &[1., -2., 3., 7.]).unwrap();
        assert!(z.matmul(&b).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
    }
}
