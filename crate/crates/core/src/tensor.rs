//! Dense rank-5 tensors laid out as `(batch, channel, band, row, col)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Extents of a [`Tensor5`]. Every dimension is at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape5 {
    pub n: usize,
    pub c: usize,
    pub l: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape5 {
    pub const fn new(n: usize, c: usize, l: usize, h: usize, w: usize) -> Self {
        Self { n, c, l, h, w }
    }

    /// The `(1, 1, 1, 1, 1)` shape of scalar results.
    pub const fn scalar() -> Self {
        Self::new(1, 1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.l * self.h * self.w
    }

    /// Number of elements in one `(l, h, w)` volume.
    pub const fn volume(&self) -> usize {
        self.l * self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 5] {
        [self.n, self.c, self.l, self.h, self.w]
    }

    pub fn is_valid(&self) -> bool {
        self.dims().iter().all(|&d| d >= 1)
    }

    #[inline]
    pub const fn index(&self, n: usize, c: usize, l: usize, h: usize, w: usize) -> usize {
        (((n * self.c + c) * self.l + l) * self.h + h) * self.w + w
    }

    /// Reports the first axis along which `self` and `other` differ.
    pub fn check_same(&self, other: &Shape5, op: &'static str) -> Result<()> {
        const AXES: [&str; 5] = ["batch", "channel", "band", "row", "col"];
        for ((&a, &b), axis) in self.dims().iter().zip(other.dims().iter()).zip(AXES) {
            if a != b {
                return Err(Error::Dimension {
                    op,
                    axis,
                    expected: a,
                    found: b,
                });
            }
        }
        Ok(())
    }
}

/// Float64 tensor with an optional gradient buffer of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5 {
    shape: Shape5,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor5 {
    pub fn zeros(shape: Shape5) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape5, value: f64) -> Self {
        assert!(shape.is_valid(), "tensor dimensions must be >= 1: {shape:?}");
        Self {
            shape,
            data: vec![value; shape.numel()],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<f64>) -> Result<Self> {
        if !shape.is_valid() {
            return Err(Error::Contract(alloc::format!(
                "tensor dimensions must be >= 1, got {:?}",
                shape.dims()
            )));
        }
        if data.len() != shape.numel() {
            return Err(Error::Contract(alloc::format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape.dims(),
                shape.numel()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(Shape5::scalar(), value)
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.data.len());
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, l: usize, h: usize, w: usize) -> f64 {
        self.data[self.shape.index(n, c, l, h, w)]
    }

    /// The single value of a scalar-shaped tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// Copies channels `start..start + count` into a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Tensor5> {
        let s = self.shape;
        if count == 0 || start + count > s.c {
            return Err(Error::Dimension {
                op: "slice_channels",
                axis: "channel",
                expected: s.c,
                found: start + count,
            });
        }
        let out_shape = Shape5::new(s.n, count, s.l, s.h, s.w);
        let vol = s.volume();
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..s.n {
            let from = s.index(n, start, 0, 0, 0);
            data.extend_from_slice(&self.data[from..from + count * vol]);
        }
        Tensor5::from_vec(out_shape, data)
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Tensor5) -> Result<f64> {
        self.shape.check_same(&other.shape, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_is_row_major() {
        let s = Shape5::new(2, 3, 4, 5, 6);
        assert_eq!(s.index(0, 0, 0, 0, 1), 1);
        assert_eq!(s.index(0, 0, 0, 1, 0), 6);
        assert_eq!(s.index(0, 0, 1, 0, 0), 30);
        assert_eq!(s.index(0, 1, 0, 0, 0), 120);
        assert_eq!(s.index(1, 0, 0, 0, 0), 360);
        assert_eq!(s.index(1, 2, 3, 4, 5), s.numel() - 1);
    }

    #[test]
    fn from_vec_rejects_bad_length_and_zero_dims() {
        assert!(Tensor5::from_vec(Shape5::new(1, 1, 1, 2, 2), vec![0.0; 3]).is_err());
        assert!(Tensor5::from_vec(Shape5::new(1, 0, 1, 2, 2), vec![]).is_err());
    }

    #[test]
    fn check_same_names_axis() {
        let a = Shape5::new(1, 2, 3, 4, 5);
        let b = Shape5::new(1, 2, 3, 7, 5);
        match a.check_same(&b, "t") {
            Err(Error::Dimension { axis, expected, found, .. }) => {
                assert_eq!((axis, expected, found), ("row", 4, 7));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor5::zeros(Shape5::new(1, 1, 1, 1, 2));
        t.accumulate_grad(&[1.0, 2.0]);
        t.accumulate_grad(&[1.0, 2.0]);
        assert_eq!(t.grad(), Some(&[2.0, 4.0][..]));
        t.zero_grad();
        assert!(t.grad().is_none());
    }
}
