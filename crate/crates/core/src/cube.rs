//! Single hyperspectral images stored band-major in `f32`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// A `(band, row, col)` cube of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    bands: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl HsiCube {
    pub fn new(bands: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::Contract(format!(
                "cube dimensions must be >= 1, got ({bands}, {height}, {width})"
            )));
        }
        let expected = bands
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::Contract("cube dimensions overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Contract(format!(
                "cube ({bands}, {height}, {width}) needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("cube value at flat index {pos}"),
            });
        }
        Ok(Self {
            bands,
            height,
            width,
            values,
        })
    }

    pub fn zeros(bands: usize, height: usize, width: usize) -> Self {
        Self::new(bands, height, width, alloc::vec![0.0; bands * height * width]).expect("valid dims")
    }

    /// Builds a cube from `f(band, row, col)`.
    pub fn from_fn(bands: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(bands * height * width);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    values.push(f(b, r, c));
                }
            }
        }
        Self::new(bands, height, width, values)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.bands, self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn at(&self, band: usize, row: usize, col: usize) -> f32 {
        self.values[(band * self.height + row) * self.width + col]
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.values[band * plane..(band + 1) * plane]
    }

    /// Spectrum of one pixel, one value per band.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f32> {
        (0..self.bands).map(|b| self.at(b, row, col)).collect()
    }

    pub fn check_same_dims(&self, other: &HsiCube, op: &'static str) -> Result<()> {
        for (axis, a, b) in [
            ("band", self.bands, other.bands),
            ("row", self.height, other.height),
            ("col", self.width, other.width),
        ] {
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

    /// Sub-block with top-left corner `(row, col)`, full band depth.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<HsiCube> {
        if height == 0 || width == 0 || row + height > self.height || col + width > self.width {
            return Err(Error::Geometry {
                op: "crop",
                detail: format!(
                    "window {height}x{width} at ({row}, {col}) does not fit in {}x{}",
                    self.height, self.width
                ),
            });
        }
        Self::from_fn(self.bands, height, width, |b, r, c| self.at(b, row + r, col + c))
    }

    /// Converts to a `(1, 1, L, H, W)` tensor after subtracting `offset`.
    pub fn to_tensor(&self, offset: f64) -> Tensor5 {
        let data = self.values.iter().map(|&v| f64::from(v) - offset).collect();
        Tensor5::from_vec(Shape5::new(1, 1, self.bands, self.height, self.width), data).expect("matching length")
    }

    /// Inverse of [`HsiCube::to_tensor`] for a single-channel, single-batch tensor.
    pub fn from_tensor(tensor: &Tensor5, offset: f64) -> Result<HsiCube> {
        let s = tensor.shape();
        if s.n != 1 || s.c != 1 {
            return Err(Error::Contract(format!(
                "cube conversion needs a (1, 1, L, H, W) tensor, got {:?}",
                s.dims()
            )));
        }
        let values = tensor.data().iter().map(|&v| (v + offset) as f32).collect();
        HsiCube::new(s.l, s.h, s.w, values)
    }

    /// Applies `f` to every value.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<HsiCube> {
        HsiCube::new(self.bands, self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }
}
