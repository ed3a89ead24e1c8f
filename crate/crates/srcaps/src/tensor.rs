//! Dense rank-4 tensor: batch x channels x height x width.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shape of a [`Tensor4`]. All components are strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape4 {
    pub n: usize,
    pub ch: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub fn new(n: usize, ch: usize, h: usize, w: usize) -> Self {
        Shape4 { n, ch, h, w }
    }

    pub fn count(&self) -> usize {
        self.n * self.ch * self.h * self.w
    }

    pub fn is_scalar(&self) -> bool {
        self.count() == 1
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.ch, self.h, self.w)
    }
}

/// Dense rank-4 array with value semantics. Cloning is cheap (shared
/// storage); mutation copies on write, so a tensor handed out is never
/// modified behind the caller's back.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    shape: Shape4,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(shape: Shape4, data: Vec<T>) -> Result<Self> {
        if shape.n == 0 || shape.ch == 0 || shape.h == 0 || shape.w == 0 {
            return Err(Error::config(format!(
                "tensor shape components must be positive, got {shape}"
            )));
        }
        if data.len() != shape.count() {
            return Err(Error::config(format!(
                "tensor data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.count()
            )));
        }
        Ok(Tensor4 {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn full(shape: Shape4, value: T) -> Self {
        Tensor4 {
            shape,
            data: Arc::new(vec![value; shape.count()]),
        }
    }

    pub fn zeros(shape: Shape4) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: Shape4) -> Self {
        Self::full(shape, T::one())
    }

    /// One-element tensor holding `v`; the representation of scalars on the tape.
    pub fn scalar_value(v: T) -> Self {
        Self::full(Shape4::new(1, 1, 1, 1), v)
    }

    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.count());
        for b in 0..shape.n {
            for c in 0..shape.ch {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(b, c, y, x));
                    }
                }
            }
        }
        Tensor4 {
            shape,
            data: Arc::new(data),
        }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn rand_uniform<R: Rng>(shape: Shape4, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..shape.count())
            .map(|_| T::of(rng.random_range(lo..hi)))
            .collect();
        Tensor4 {
            shape,
            data: Arc::new(data),
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access; copies the storage if it is shared.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape.ch + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx(b, c, y, x)]
    }

    /// The `(b, c)` image plane as a flat `h*w` slice.
    #[inline]
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let hw = self.shape.h * self.shape.w;
        let start = (b * self.shape.ch + c) * hw;
        &self.data[start..start + hw]
    }

    /// Value of a one-element tensor.
    pub fn scalar(&self) -> Result<T> {
        if !self.shape.is_scalar() {
            return Err(Error::usage(format!(
                "expected a scalar tensor, got shape {}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            shape: self.shape,
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::usage(format!(
                "shape mismatch: {} vs {}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor4 {
            shape: self.shape,
            data: Arc::new(data),
        })
    }

    /// Accumulate `other` into `self` elementwise.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::usage(format!(
                "shape mismatch in accumulation: {} vs {}",
                self.shape, other.shape
            )));
        }
        let dst = self.data_mut();
        for (d, &s) in dst.iter_mut().zip(other.data.iter()) {
            *d = *d + s;
        }
        Ok(())
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Convert element type, e.g. to run an f32 tensor through f64 metrics.
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: Arc::new(self.data.iter().map(|&v| U::of(v.as_f64())).collect()),
        }
    }
}
