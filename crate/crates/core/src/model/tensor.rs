//! Dense NCHW tensors backing the network.

use crate::error::{Error, Result};

/// A dense rank-4 tensor, laid out N-major (index = ((n*C + c)*H + h)*W + w).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor4 { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(n, c, h, w)]
    }

    /// One (n, c) plane as a contiguous H*W slice.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
        if a.n() != b.n() || a.h() != b.h() || a.w() != b.w() {
            return Err(Error::ShapeMismatch(format!(
                "concat {:?} with {:?}",
                a.shape, b.shape
            )));
        }
        let mut out = Tensor4::zeros([a.n(), a.c() + b.c(), a.h(), a.w()]);
        for n in 0..a.n() {
            for c in 0..a.c() {
                out.plane_mut(n, c).copy_from_slice(a.plane(n, c));
            }
            for c in 0..b.c() {
                out.plane_mut(n, a.c() + c).copy_from_slice(b.plane(n, c));
            }
        }
        Ok(out)
    }

    /// Split a channel-concatenated gradient back into its two halves.
    pub fn split_channels(&self, c_first: usize) -> (Tensor4, Tensor4) {
        debug_assert!(c_first <= self.c());
        let mut a = Tensor4::zeros([self.n(), c_first, self.h(), self.w()]);
        let mut b = Tensor4::zeros([self.n(), self.c() - c_first, self.h(), self.w()]);
        for n in 0..self.n() {
            for c in 0..c_first {
                a.plane_mut(n, c).copy_from_slice(self.plane(n, c));
            }
            for c in c_first..self.c() {
                b.plane_mut(n, c - c_first).copy_from_slice(self.plane(n, c));
            }
        }
        (a, b)
    }

    /// Debug-mode guard: no NaN/Inf may leave an op.
    #[inline]
    pub fn debug_check_finite(&self, context: &str) {
        if cfg!(debug_assertions) {
            for &v in &self.data {
                assert!(v.is_finite(), "non-finite value in {context}");
            }
        }
    }
}
