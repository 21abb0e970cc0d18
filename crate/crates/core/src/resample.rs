//! Separable bicubic resampling of the spatial axes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// Kernel parameter `a` (Catmull-Rom family).
pub const BICUBIC_A: f64 = -0.5;

/// Smallest output side accepted by [`bicubic_resize`].
pub const MIN_RESIZE_DIM: usize = 4;

/// Cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = libm::fabs(x);
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four clamped source taps and weights for one output coordinate.
#[derive(Debug, Clone, Copy)]
struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

fn taps(input: usize, output: usize) -> Vec<Taps> {
    let ratio = input as f64 / output as f64;
    let last = input as isize - 1;
    (0..output)
        .map(|o| {
            // pixel centers line up: src = (dst + 0.5) · in/out − 0.5
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let base = libm::floor(src);
            let frac = src - base;
            let mut t = Taps {
                index: [0; 4],
                weight: [0.0; 4],
            };
            for k in 0..4 {
                let offset = k as isize - 1;
                t.index[k] = (base as isize + offset).clamp(0, last) as usize;
                t.weight[k] = cubic_kernel(frac - offset as f64);
            }
            t
        })
        .collect()
}

/// Resizes every band to `out_h × out_w` with clamp-to-edge bicubic
/// interpolation. Bands are never mixed.
pub fn bicubic_resize(cube: &HsiCube, out_h: usize, out_w: usize) -> Result<HsiCube> {
    if out_h < MIN_RESIZE_DIM || out_w < MIN_RESIZE_DIM {
        return Err(Error::Geometry {
            op: "bicubic_resize",
            detail: format!("output {out_h}x{out_w} is below the {MIN_RESIZE_DIM}x{MIN_RESIZE_DIM} minimum"),
        });
    }
    let (bands, h, w) = cube.dims();
    let rows = taps(h, out_h);
    let cols = taps(w, out_w);
    let mut out = Vec::with_capacity(bands * out_h * out_w);
    let mut tmp = vec![0.0f64; h * out_w];
    for b in 0..bands {
        let src = cube.band(b);
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            for (x, t) in cols.iter().enumerate() {
                tmp[y * out_w + x] = (0..4).map(|k| t.weight[k] * f64::from(line[t.index[k]])).sum();
            }
        }
        for t in &rows {
            for x in 0..out_w {
                let v: f64 = (0..4).map(|k| t.weight[k] * tmp[t.index[k] * out_w + x]).sum();
                out.push(v as f32);
            }
        }
    }
    HsiCube::new(bands, out_h, out_w, out)
}

/// `bicubic_resize` by an integer factor in both spatial directions.
pub fn downsample(cube: &HsiCube, factor: usize) -> Result<HsiCube> {
    let (_, h, w) = cube.dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::Geometry {
            op: "downsample",
            detail: format!("{h}x{w} is not divisible by {factor}"),
        });
    }
    bicubic_resize(cube, h / factor, w / factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..=100 {
            let f = i as f64 / 100.0;
            let s: f64 = (-1..=2).map(|k| cubic_kernel(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14, "{f}");
        }
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
    }

    #[test]
    fn constant_cube_stays_constant() {
        let c = HsiCube::from_fn(3, 10, 12, |b, _, _| 0.25 * b as f32).unwrap();
        for (h, w) in [(5, 6), (4, 4), (20, 24), (7, 13)] {
            let out = bicubic_resize(&c, h, w).unwrap();
            assert_eq!(out.dims(), (3, h, w));
            for b in 0..3 {
                assert!(out.band(b).iter().all(|&v| (v - 0.25 * b as f32).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn linear_ramp_reproduced_in_interior() {
        let (h, w) = (32, 32);
        let ramp = |r: f64, c: f64| 0.01 * r + 0.02 * c + 0.1;
        let c = HsiCube::from_fn(1, h, w, |_, r, col| ramp(r as f64, col as f64) as f32).unwrap();
        let out = downsample(&c, 2).unwrap();
        for r in 2..14 {
            for col in 2..14 {
                // output pixel r sits at source coordinate 2r + 0.5
                let expected = ramp(2.0 * r as f64 + 0.5, 2.0 * col as f64 + 0.5);
                assert!((f64::from(out.at(0, r, col)) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identity_size_is_identity() {
        let c = HsiCube::from_fn(2, 9, 7, |b, r, col| ((b * 31 + r * 7 + col) % 11) as f32 / 11.0).unwrap();
        assert_eq!(bicubic_resize(&c, 9, 7).unwrap(), c);
    }

    #[test]
    fn small_output_and_bad_factor_rejected() {
        let c = HsiCube::zeros(1, 8, 8);
        assert!(bicubic_resize(&c, 3, 8).is_err());
        assert!(downsample(&c, 3).is_err());
    }
}
