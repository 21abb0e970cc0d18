//! Patch sampling, augmentation, degradation and mean handling.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::resample::{bicubic_resize, downsample};
use crate::tensor::Tensor5;

/// Smallest HR side an augmented patch may have.
pub const MIN_PATCH_SIDE: usize = 8;
/// Smallest LR side after degradation.
pub const MIN_LR_SIDE: usize = 4;

/// Which element of the augmentation orbit produced a patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub flip: bool,
    /// Counter-clockwise quarter turns, `0..4`.
    pub quarter_turns: u8,
    pub scale: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        flip: false,
        quarter_turns: 0,
        scale: 1.0,
    };

    /// Short tag such as `f1r2s0.75`.
    pub fn tag(&self) -> alloc::string::String {
        format!("f{}r{}s{}", u8::from(self.flip), self.quarter_turns, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub cube: HsiCube,
    /// Index of the cube the patch was cut from.
    pub source: usize,
    /// Top-left corner in the source cube.
    pub origin: (usize, usize),
    pub transform: Transform,
}

/// HR patches whose spatial sides are all divisible by the scale factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    patches: Vec<Patch>,
    scale: usize,
}

impl PatchSet {
    pub fn new(patches: Vec<Patch>, scale: usize) -> Result<Self> {
        if let Some(p) = patches
            .iter()
            .find(|p| p.cube.height() % scale != 0 || p.cube.width() % scale != 0)
        {
            return Err(Error::Geometry {
                op: "PatchSet::new",
                detail: format!(
                    "patch {}x{} from cube {} is not divisible by scale {scale}",
                    p.cube.height(),
                    p.cube.width(),
                    p.source
                ),
            });
        }
        Ok(Self { patches, scale })
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn into_patches(self) -> Vec<Patch> {
        self.patches
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Cuts `count` square patches at seeded uniform positions. All bands kept.
pub fn extract_patches(cube: &HsiCube, source: usize, count: usize, patch_hw: usize, seed: u64) -> Result<Vec<Patch>> {
    let (_, h, w) = cube.dims();
    if patch_hw == 0 || patch_hw > h || patch_hw > w {
        return Err(Error::Geometry {
            op: "extract_patches",
            detail: format!("patch side {patch_hw} does not fit cube {source} of {h}x{w}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let row = rng.random_range(0..=h - patch_hw);
            let col = rng.random_range(0..=w - patch_hw);
            Ok(Patch {
                cube: cube.crop(row, col, patch_hw, patch_hw)?,
                source,
                origin: (row, col),
                transform: Transform::IDENTITY,
            })
        })
        .collect()
}

/// Mirrors every band left to right.
pub fn flip_horizontal(cube: &HsiCube) -> HsiCube {
    let (bands, h, w) = cube.dims();
    HsiCube::from_fn(bands, h, w, |b, r, c| cube.at(b, r, w - 1 - c)).expect("values come from a valid cube")
}

/// Rotates every band a quarter turn counter-clockwise.
pub fn rotate90(cube: &HsiCube) -> HsiCube {
    let (bands, h, w) = cube.dims();
    // output is w × h; output (r, c) reads input (c, w − 1 − r)
    HsiCube::from_fn(bands, w, h, |b, r, c| cube.at(b, c, w - 1 - r)).expect("values come from a valid cube")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub flips: bool,
    pub rotations: bool,
    pub scales: Vec<f64>,
}

impl Default for AugmentConfig {
    /// Full orbit: 2 flips × 4 rotations × 3 scales.
    fn default() -> Self {
        Self {
            flips: true,
            rotations: true,
            scales: alloc::vec![1.0, 0.75, 0.5],
        }
    }
}

impl AugmentConfig {
    /// Identity only.
    pub fn none() -> Self {
        Self {
            flips: false,
            rotations: false,
            scales: alloc::vec![1.0],
        }
    }
}

/// Side length of a patch rescaled by `s`, floored to a multiple of `r`.
/// `None` when it would be too small to degrade and train on.
pub fn scaled_side(side: usize, s: f64, r: usize) -> Option<usize> {
    let raw = libm::round(side as f64 * s) as usize;
    let fitted = raw - raw % r;
    (fitted >= MIN_PATCH_SIDE && fitted / r >= MIN_LR_SIDE).then_some(fitted)
}

/// Result of [`augment`]: the orbit plus how many (patch, scale) pairs were
/// skipped because the scaled patch would be too small.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub set: PatchSet,
    pub skipped: usize,
}

/// Emits the orbit of every patch under flip × rotation × scale.
pub fn augment(patches: &[Patch], config: &AugmentConfig, r: usize) -> Result<Augmented> {
    let flips: &[bool] = if config.flips { &[false, true] } else { &[false] };
    let turns = if config.rotations { 4 } else { 1 };
    let mut out = Vec::with_capacity(patches.len() * flips.len() * turns * config.scales.len());
    let mut skipped = 0;
    for p in patches {
        let (_, h, w) = p.cube.dims();
        for &s in &config.scales {
            let (Some(sh), Some(sw)) = (scaled_side(h, s, r), scaled_side(w, s, r)) else {
                skipped += 1;
                continue;
            };
            let base = if (sh, sw) == (h, w) {
                p.cube.clone()
            } else {
                bicubic_resize(&p.cube, sh, sw)?
            };
            for &flip in flips {
                let mut cur = if flip { flip_horizontal(&base) } else { base.clone() };
                for q in 0..turns {
                    if q > 0 {
                        cur = rotate90(&cur);
                    }
                    out.push(Patch {
                        cube: cur.clone(),
                        source: p.source,
                        origin: p.origin,
                        transform: Transform {
                            flip,
                            quarter_turns: q as u8,
                            scale: s,
                        },
                    });
                }
            }
        }
    }
    Ok(Augmented {
        set: PatchSet::new(out, r)?,
        skipped,
    })
}

/// Global mean over every value of every cube.
pub fn compute_mean(cubes: &[HsiCube]) -> Result<f64> {
    let count: usize = cubes.iter().map(|c| c.values().len()).sum();
    if count == 0 {
        return Err(Error::Contract("cannot take the mean of an empty training set".into()));
    }
    let sum: f64 = cubes.iter().flat_map(|c| c.values()).map(|&v| f64::from(v)).sum();
    Ok(sum / count as f64)
}

/// Network-ready tensor `(1, 1, L, H, W)` with the training mean removed.
pub fn mean_subtract(cube: &HsiCube, mean: f64) -> Tensor5 {
    cube.to_tensor(mean)
}

/// Inverse of [`mean_subtract`]; exact after the `f32` cast.
pub fn add_mean(tensor: &Tensor5, mean: f64) -> Result<HsiCube> {
    HsiCube::from_tensor(tensor, mean)
}

/// An aligned LR/HR training pair, mean-subtracted.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub lr: Tensor5,
    pub hr: Tensor5,
}

/// Bicubic-downsamples an HR patch by `r` and removes the mean from both.
pub fn degrade(hr: &HsiCube, r: usize, mean: f64) -> Result<Sample> {
    let lr = downsample(hr, r)?;
    Ok(Sample {
        lr: mean_subtract(&lr, mean),
        hr: mean_subtract(hr, mean),
    })
}
