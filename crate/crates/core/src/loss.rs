//! Differentiable training losses.
//!
//! All losses are normalized per element so their magnitude does not depend
//! on patch size. The spectral-angle term treats every `(batch, channel,
//! row, col)` position as one pixel whose spectrum runs along the band axis.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// Which objective the trainer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    L1,
    Mse,
    /// `0.5 · MSE + 0.5 · SAM` with the angle in radians.
    Combo,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::Mse => "mse",
            LossKind::Combo => "combo",
        }
    }
}

impl core::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossKind::L1),
            "mse" => Ok(LossKind::Mse),
            "combo" => Ok(LossKind::Combo),
            other => Err(Error::Config(alloc::format!(
                "unknown loss `{other}` (expected l1, mse or combo)"
            ))),
        }
    }
}

/// A recorded loss plus the number of pixels the spectral term skipped
/// because one of the two spectra had zero norm.
#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub var: Var,
    pub skipped_pixels: usize,
}

pub fn loss(tape: &mut Tape, kind: LossKind, sr: Var, hr: Var) -> Result<LossValue> {
    match kind {
        LossKind::L1 => Ok(LossValue {
            var: l1_loss(tape, sr, hr)?,
            skipped_pixels: 0,
        }),
        LossKind::Mse => Ok(LossValue {
            var: mse_loss(tape, sr, hr)?,
            skipped_pixels: 0,
        }),
        LossKind::Combo => combo_loss(tape, sr, hr),
    }
}

/// Mean absolute error. The subgradient of `|0|` is taken as 0.
pub fn l1_loss(tape: &mut Tape, sr: Var, hr: Var) -> Result<Var> {
    let (a, b) = (tape.value(sr), tape.value(hr));
    a.shape().check_same(&b.shape(), "l1_loss")?;
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| libm::fabs(x - y)).sum();
    let value = total / a.shape().numel() as f64;
    Ok(tape.record(&[sr, hr], Tensor5::scalar(value), Box::new(L1Op)))
}

/// Mean squared error.
pub fn mse_loss(tape: &mut Tape, sr: Var, hr: Var) -> Result<Var> {
    let (a, b) = (tape.value(sr), tape.value(hr));
    a.shape().check_same(&b.shape(), "mse_loss")?;
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    let value = total / a.shape().numel() as f64;
    Ok(tape.record(&[sr, hr], Tensor5::scalar(value), Box::new(MseOp)))
}

/// Mean spectral angle in radians over pixels whose spectra are both nonzero.
pub fn sam_loss(tape: &mut Tape, sr: Var, hr: Var) -> Result<LossValue> {
    let (a, b) = (tape.value(sr), tape.value(hr));
    let s = a.shape();
    s.check_same(&b.shape(), "sam_loss")?;
    if s.l < 2 {
        return Err(Error::Contract("spectral angle needs at least two bands".into()));
    }
    let mut total = 0.0;
    let mut valid = 0usize;
    for_each_pixel(s, |idx| {
        if let Some(p) = PixelAngle::compute(a.data(), b.data(), &idx) {
            total += p.angle;
            valid += 1;
        }
    });
    let skipped = s.n * s.c * s.h * s.w - valid;
    let value = if valid > 0 { total / valid as f64 } else { 0.0 };
    let var = tape.record(&[sr, hr], Tensor5::scalar(value), Box::new(SamOp { valid }));
    Ok(LossValue {
        var,
        skipped_pixels: skipped,
    })
}

/// `0.5 · MSE + 0.5 · SAM(radians)`.
pub fn combo_loss(tape: &mut Tape, sr: Var, hr: Var) -> Result<LossValue> {
    let mse = mse_loss(tape, sr, hr)?;
    let sam = sam_loss(tape, sr, hr)?;
    let half_mse = tape.scale(mse, 0.5);
    let half_sam = tape.scale(sam.var, 0.5);
    Ok(LossValue {
        var: tape.add(half_mse, half_sam)?,
        skipped_pixels: sam.skipped_pixels,
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct L1Op;

impl BackwardOp for L1Op {
    fn name(&self) -> &'static str {
        "l1_loss"
    }

    fn backward(&self, inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let scale = grad_output[0] / inputs[0].shape().numel() as f64;
        let g: Vec<f64> = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(x, y)| sign(x - y) * scale)
            .collect();
        let neg = wanted[1].then(|| g.iter().map(|v| -v).collect());
        vec![wanted[0].then_some(g), neg]
    }
}

struct MseOp;

impl BackwardOp for MseOp {
    fn name(&self) -> &'static str {
        "mse_loss"
    }

    fn backward(&self, inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let scale = 2.0 * grad_output[0] / inputs[0].shape().numel() as f64;
        let g: Vec<f64> = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(x, y)| (x - y) * scale)
            .collect();
        let neg = wanted[1].then(|| g.iter().map(|v| -v).collect());
        vec![wanted[0].then_some(g), neg]
    }
}

/// Flat indices of the band-axis spectrum of one pixel.
struct PixelIndex {
    start: usize,
    step: usize,
    len: usize,
}

impl PixelIndex {
    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).map(move |k| self.start + k * self.step)
    }
}

fn for_each_pixel(s: Shape5, mut f: impl FnMut(PixelIndex)) {
    let step = s.h * s.w;
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                for w in 0..s.w {
                    f(PixelIndex {
                        start: s.index(n, c, 0, h, w),
                        step,
                        len: s.l,
                    });
                }
            }
        }
    }
}

struct PixelAngle {
    angle: f64,
    cos: f64,
    dot: f64,
    norm_a: f64,
    norm_b: f64,
}

impl PixelAngle {
    fn compute(a: &[f64], b: &[f64], idx: &PixelIndex) -> Option<Self> {
        let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in idx.iter() {
            dot += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        if aa == 0.0 || bb == 0.0 {
            return None;
        }
        let (norm_a, norm_b) = (libm::sqrt(aa), libm::sqrt(bb));
        let cos = (dot / (norm_a * norm_b)).clamp(-1.0, 1.0);
        let (mut diff, mut sum) = (0.0, 0.0);
        for i in idx.iter() {
            let (u, v) = (a[i] / norm_a, b[i] / norm_b);
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
        Some(Self {
            angle: 2.0 * libm::atan2(libm::sqrt(diff), libm::sqrt(sum)),
            cos,
            dot,
            norm_a,
            norm_b,
        })
    }
}

struct SamOp {
    valid: usize,
}

impl BackwardOp for SamOp {
    fn name(&self) -> &'static str {
        "sam_loss"
    }

    fn backward(&self, inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (a, b) = (inputs[0].data(), inputs[1].data());
        let mut ga = wanted[0].then(|| vec![0.0; a.len()]);
        let mut gb = wanted[1].then(|| vec![0.0; b.len()]);
        if self.valid == 0 {
            return vec![ga, gb];
        }
        let scale = grad_output[0] / self.valid as f64;
        for_each_pixel(inputs[0].shape(), |idx| {
            let Some(p) = PixelAngle::compute(a, b, &idx) else {
                return;
            };
            let sin_sq = 1.0 - p.cos * p.cos;
            // d acos(u) / du is unbounded at |u| = 1; parallel spectra
            // contribute no gradient.
            if sin_sq <= 1e-24 || p.dot.is_nan() {
                return;
            }
            let k = -scale / libm::sqrt(sin_sq);
            let nab = p.norm_a * p.norm_b;
            if let Some(g) = ga.as_mut() {
                let aa = p.norm_a * p.norm_a;
                for i in idx.iter() {
                    g[i] += k * (b[i] / nab - p.cos * a[i] / aa);
                }
            }
            if let Some(g) = gb.as_mut() {
                let bb = p.norm_b * p.norm_b;
                for i in idx.iter() {
                    g[i] += k * (a[i] / nab - p.cos * b[i] / bb);
                }
            }
        });
        vec![ga, gb]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(tape: &mut Tape, shape: Shape5, a: Vec<f64>, b: Vec<f64>) -> (Var, Var) {
        let sr = tape.param(Tensor5::from_vec(shape, a).unwrap());
        let hr = tape.constant(Tensor5::from_vec(shape, b).unwrap());
        (sr, hr)
    }

    #[test]
    fn identical_inputs_give_zero() {
        let s = Shape5::new(1, 1, 3, 2, 2);
        let data: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 + 0.05).collect();
        for kind in [LossKind::L1, LossKind::Mse, LossKind::Combo] {
            let mut tape = Tape::new();
            let (sr, hr) = pair(&mut tape, s, data.clone(), data.clone());
            let l = loss(&mut tape, kind, sr, hr).unwrap();
            assert_eq!(tape.value(l.var).item(), Some(0.0), "{kind:?}");
        }
    }

    #[test]
    fn constant_differences() {
        let s = Shape5::new(2, 1, 2, 3, 3);
        let hr: Vec<f64> = (0..s.numel()).map(|i| i as f64 * 0.01).collect();
        let mut tape = Tape::new();
        let (sr, h) = pair(&mut tape, s, hr.iter().map(|v| v + 0.5).collect(), hr.clone());
        let l1 = l1_loss(&mut tape, sr, h).unwrap();
        assert!((tape.value(l1).item().unwrap() - 0.5).abs() < 1e-15);

        let mut tape = Tape::new();
        let (sr, h) = pair(&mut tape, s, hr.iter().map(|v| v - 0.1).collect(), hr.clone());
        let mse = mse_loss(&mut tape, sr, h).unwrap();
        assert!((tape.value(mse).item().unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn l1_gradient_is_scaled_sign() {
        let s = Shape5::new(2, 1, 1, 1, 3);
        let mut tape = Tape::new();
        let (sr, hr) = pair(&mut tape, s, vec![1.0, -1.0, 0.5, 2.0, 0.0, 0.0], vec![0.0, 0.0, 0.5, 1.0, 1.0, 0.0]);
        let l = l1_loss(&mut tape, sr, hr).unwrap();
        tape.backward(l).unwrap();
        let e = 1.0 / 6.0;
        assert_eq!(tape.grad(sr).unwrap(), &[e, -e, 0.0, e, -e, 0.0]);
    }

    #[test]
    fn parallel_spectra_make_combo_half_mse() {
        let s = Shape5::new(1, 1, 2, 2, 2);
        let hr = vec![0.2, 0.4, 0.6, 0.8, 0.1, 0.3, 0.5, 0.7];
        let scales = [1.5, 2.0, 0.5, 3.0];
        let mut sr = hr.clone();
        for p in 0..4 {
            sr[p] *= scales[p];
            sr[p + 4] *= scales[p];
        }
        let mut tape = Tape::new();
        let (a, b) = pair(&mut tape, s, sr.clone(), hr.clone());
        let combo = combo_loss(&mut tape, a, b).unwrap();
        let mse = mse_loss(&mut tape, a, b).unwrap();
        let c = tape.value(combo.var).item().unwrap();
        let m = tape.value(mse).item().unwrap();
        assert!((c - 0.5 * m).abs() < 1e-12, "{c} vs {m}");
        assert_eq!(combo.skipped_pixels, 0);
    }

    #[test]
    fn sam_loss_skips_zero_spectra() {
        let s = Shape5::new(1, 1, 2, 1, 2);
        let mut tape = Tape::new();
        // pixel 0: (1, 0) vs (0, 1); pixel 1: zero spectrum in sr
        let (a, b) = pair(&mut tape, s, vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0, 1.0]);
        let l = sam_loss(&mut tape, a, b).unwrap();
        assert_eq!(l.skipped_pixels, 1);
        let v = tape.value(l.var).item().unwrap();
        assert!((v - core::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn sam_loss_needs_two_bands() {
        let s = Shape5::new(1, 1, 1, 2, 2);
        let mut tape = Tape::new();
        let (a, b) = pair(&mut tape, s, vec![1.0; 4], vec![1.0; 4]);
        assert!(sam_loss(&mut tape, a, b).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor5::zeros(Shape5::new(1, 1, 2, 2, 2)));
        let b = tape.constant(Tensor5::zeros(Shape5::new(1, 1, 2, 2, 3)));
        assert!(l1_loss(&mut tape, a, b).is_err());
        assert!(mse_loss(&mut tape, a, b).is_err());
        assert!(sam_loss(&mut tape, a, b).is_err());
    }

    #[test]
    fn loss_kind_parses() {
        assert_eq!("combo".parse::<LossKind>().unwrap(), LossKind::Combo);
        assert!("huber".parse::<LossKind>().is_err());
    }
}
