//! Seeded synthetic hyperspectral cubes for desk-scale runs.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::HsiCube;
use crate::error::{Error, Result};

pub const MIN_SYNTH_BANDS: usize = 4;
pub const MIN_SYNTH_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    /// Smooth Gaussian blobs, each with its own smooth spectral signature.
    GaussianBlobs,
    /// Linear spatial gradients whose slope drifts with the band.
    SpectralRamps,
    /// Hard-edged checkerboard tiles with per-tile spectra.
    Checker,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::GaussianBlobs => "blobs",
            SynthKind::SpectralRamps => "ramps",
            SynthKind::Checker => "checker",
        }
    }
}

impl core::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" | "gaussian-blobs" => Ok(SynthKind::GaussianBlobs),
            "ramps" | "spectral-ramps" => Ok(SynthKind::SpectralRamps),
            "checker" => Ok(SynthKind::Checker),
            other => Err(Error::Config(format!(
                "unknown synthetic kind `{other}` (expected blobs, ramps or checker)"
            ))),
        }
    }
}

/// Smooth bump over normalized band position `t ∈ [0, 1]`.
fn signature(t: f64, center: f64, width: f64, floor: f64) -> f64 {
    let d = (t - center) / width;
    floor + (1.0 - floor) * libm::exp(-0.5 * d * d)
}

fn band_pos(b: usize, bands: usize) -> f64 {
    b as f64 / (bands - 1) as f64
}

/// Generates a `(bands, height, width)` cube with values in `[0, 1]`.
pub fn synth_cube(kind: SynthKind, bands: usize, height: usize, width: usize, seed: u64) -> Result<HsiCube> {
    if bands < MIN_SYNTH_BANDS || height < MIN_SYNTH_SIDE || width < MIN_SYNTH_SIDE {
        return Err(Error::Geometry {
            op: "synth_cube",
            detail: format!(
                "{bands}x{height}x{width} is below the minimum {MIN_SYNTH_BANDS} bands and {MIN_SYNTH_SIDE}x{MIN_SYNTH_SIDE} pixels"
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = match kind {
        SynthKind::GaussianBlobs => blobs(&mut rng, bands, height, width),
        SynthKind::SpectralRamps => ramps(&mut rng, bands, height, width),
        SynthKind::Checker => checker(&mut rng, bands, height, width),
    };
    let values = raw.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    HsiCube::new(bands, height, width, values)
}

fn blobs(rng: &mut ChaCha8Rng, bands: usize, height: usize, width: usize) -> Vec<f64> {
    struct Blob {
        row: f64,
        col: f64,
        sigma: f64,
        amp: f64,
        center: f64,
        width: f64,
    }
    let side = height.min(width) as f64;
    let count = 4 + (height * width) / 256;
    let list: Vec<Blob> = (0..count.min(24))
        .map(|_| Blob {
            row: rng.random_range(0.0..height as f64),
            col: rng.random_range(0.0..width as f64),
            sigma: side * rng.random_range(0.06..0.22),
            amp: rng.random_range(0.3..1.0),
            center: rng.random_range(0.0..1.0),
            width: rng.random_range(0.25..0.6),
        })
        .collect();
    let mut maps = Vec::with_capacity(list.len());
    for blob in &list {
        let m: Vec<f64> = (0..height * width)
            .map(|i| {
                let (dr, dc) = ((i / width) as f64 - blob.row, (i % width) as f64 - blob.col);
                blob.amp * libm::exp(-(dr * dr + dc * dc) / (2.0 * blob.sigma * blob.sigma))
            })
            .collect();
        maps.push(m);
    }
    let mut out = Vec::with_capacity(bands * height * width);
    for b in 0..bands {
        let t = band_pos(b, bands);
        let weights: Vec<f64> = list.iter().map(|bl| signature(t, bl.center, bl.width, 0.2)).collect();
        for i in 0..height * width {
            let v: f64 = maps.iter().zip(&weights).map(|(m, w)| m[i] * w).sum();
            out.push(0.05 + 0.9 * (1.0 - libm::exp(-v)));
        }
    }
    out
}

fn ramps(rng: &mut ChaCha8Rng, bands: usize, height: usize, width: usize) -> Vec<f64> {
    let angle0 = rng.random_range(0.0..core::f64::consts::TAU);
    let drift = rng.random_range(-1.0..1.0);
    let offset = rng.random_range(0.2..0.4);
    let mut out = Vec::with_capacity(bands * height * width);
    for b in 0..bands {
        let t = band_pos(b, bands);
        let angle = angle0 + drift * t;
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let gain = 0.5 + 0.4 * t;
        for r in 0..height {
            for col in 0..width {
                let (y, x) = (r as f64 / (height - 1) as f64 - 0.5, col as f64 / (width - 1) as f64 - 0.5);
                out.push(offset + gain * (0.5 + 0.7 * (c * x + s * y)) * 0.6);
            }
        }
    }
    out
}

fn checker(rng: &mut ChaCha8Rng, bands: usize, height: usize, width: usize) -> Vec<f64> {
    let tile = rng.random_range(2..=4usize);
    let tiles_r = height.div_ceil(tile);
    let tiles_c = width.div_ceil(tile);
    let spectra: Vec<(f64, f64, f64)> = (0..tiles_r * tiles_c)
        .map(|_| (rng.random_range(0.1..0.9), rng.random_range(0.0..1.0), rng.random_range(0.3..0.8)))
        .collect();
    let mut out = Vec::with_capacity(bands * height * width);
    for b in 0..bands {
        let t = band_pos(b, bands);
        for r in 0..height {
            for col in 0..width {
                let (tr, tc) = (r / tile, col / tile);
                let (level, center, width_s) = spectra[tr * tiles_c + tc];
                let parity = if (tr + tc) % 2 == 0 { 1.0 } else { 0.35 };
                out.push(parity * level * signature(t, center, width_s, 0.4));
            }
        }
    }
    out
}

/// Mean Pearson correlation between consecutive bands.
pub fn adjacent_band_correlation(cube: &HsiCube) -> f64 {
    let bands = cube.bands();
    let mut total = 0.0;
    for b in 0..bands - 1 {
        total += pearson(cube.band(b), cube.band(b + 1));
    }
    total / (bands - 1) as f64
}

fn pearson(x: &[f32], y: &[f32]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let my = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (f64::from(a) - mx, f64::from(b) - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    sxy / libm::sqrt(sxx * syy)
}
