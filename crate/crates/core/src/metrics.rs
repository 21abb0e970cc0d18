//! Image-quality metrics: PSNR, SSIM and spectral angle.
//!
//! PSNR and SSIM are computed per band and averaged over bands. SAM is the
//! mean per-pixel angle between spectra, in degrees.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::tensor::Tensor5;

/// Read access to a `(band, row, col)` volume, widened to `f64`.
pub trait SpectralCube {
    /// `(bands, height, width)`.
    fn cube_dims(&self) -> Result<(usize, usize, usize)>;

    /// Band-major flat value.
    fn value(&self, index: usize) -> f64;
}

impl SpectralCube for HsiCube {
    fn cube_dims(&self) -> Result<(usize, usize, usize)> {
        Ok(self.dims())
    }

    #[inline]
    fn value(&self, index: usize) -> f64 {
        f64::from(self.values()[index])
    }
}

/// Single-batch, single-channel tensors are cubes of their `(l, h, w)`.
impl SpectralCube for Tensor5 {
    fn cube_dims(&self) -> Result<(usize, usize, usize)> {
        let s = self.shape();
        if s.n != 1 || s.c != 1 {
            return Err(Error::Contract(format!(
                "metrics need a (1, 1, L, H, W) tensor, got {:?}",
                s.dims()
            )));
        }
        Ok((s.l, s.h, s.w))
    }

    #[inline]
    fn value(&self, index: usize) -> f64 {
        self.data()[index]
    }
}

fn matching_dims<A: SpectralCube, B: SpectralCube>(a: &A, b: &B, op: &'static str) -> Result<(usize, usize, usize)> {
    let da = a.cube_dims()?;
    let db = b.cube_dims()?;
    for (axis, x, y) in [("band", da.0, db.0), ("row", da.1, db.1), ("col", da.2, db.2)] {
        if x != y {
            return Err(Error::Dimension {
                op,
                axis,
                expected: x,
                found: y,
            });
        }
    }
    Ok(da)
}

/// Side of the square Gaussian SSIM window.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the SSIM window.
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Evaluation of one reconstructed cube against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Decibels; `f64::INFINITY` when the cubes are identical.
    pub psnr: f64,
    pub ssim: f64,
    /// Degrees, in `[0, 180]`.
    pub sam: f64,
    /// Pixels left out of SAM because a spectrum had zero norm.
    pub sam_skipped: usize,
}

/// PSNR, SSIM and SAM at the given peak value.
pub fn evaluate<C: SpectralCube>(sr: &C, hr: &C, peak: f64) -> Result<MetricsReport> {
    let psnr = psnr(sr, hr, peak)?;
    let ssim = ssim(sr, hr, peak)?;
    let sam = sam(sr, hr)?;
    Ok(MetricsReport {
        psnr,
        ssim,
        sam: sam.degrees,
        sam_skipped: sam.skipped,
    })
}

/// Band-averaged peak signal-to-noise ratio.
///
/// Bands that match exactly are left out of the average; when every band
/// matches the result is `f64::INFINITY`.
pub fn psnr<C: SpectralCube>(sr: &C, hr: &C, peak: f64) -> Result<f64> {
    let (bands, h, w) = matching_dims(sr, hr, "psnr")?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::Contract(format!("psnr peak must be positive, got {peak}")));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    let plane = h * w;
    for b in 0..bands {
        let mse = band_mse(sr, hr, b * plane, plane);
        if mse > 0.0 {
            total += 10.0 * libm::log10(peak * peak / mse);
            counted += 1;
        }
    }
    Ok(if counted == 0 { f64::INFINITY } else { total / counted as f64 })
}

fn band_mse<C: SpectralCube>(a: &C, b: &C, start: usize, len: usize) -> f64 {
    let sum: f64 = (start..start + len)
        .map(|i| {
            let d = a.value(i) - b.value(i);
            d * d
        })
        .sum();
    sum / len as f64
}

/// Normalized 1D Gaussian taps of the full SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    taps.copy_from_slice(&gaussian_taps(SSIM_WINDOW));
    taps
}

fn gaussian_taps(side: usize) -> Vec<f64> {
    let center = (side / 2) as f64;
    let mut taps: Vec<f64> = (0..side)
        .map(|i| {
            let d = i as f64 - center;
            libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Window side used for an `h × w` band: 11, or the largest odd side that
/// fits when the band is smaller.
pub fn ssim_window_side(h: usize, w: usize) -> usize {
    let fit = h.min(w);
    let odd = if fit % 2 == 0 { fit.saturating_sub(1) } else { fit };
    odd.min(SSIM_WINDOW)
}

/// Band-averaged single-scale SSIM over every fully-contained window.
pub fn ssim<C: SpectralCube>(sr: &C, hr: &C, peak: f64) -> Result<f64> {
    let (bands, h, w) = matching_dims(sr, hr, "ssim")?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::Contract(format!("ssim peak must be positive, got {peak}")));
    }
    let side = ssim_window_side(h, w);
    if side < 3 {
        return Err(Error::Geometry {
            op: "ssim",
            detail: format!("spatial size {h}x{w} is smaller than the 3x3 minimum window"),
        });
    }
    let taps = gaussian_taps(side);
    let plane = h * w;
    let total: f64 = (0..bands)
        .map(|b| {
            let xs: Vec<f64> = (b * plane..(b + 1) * plane).map(|i| sr.value(i)).collect();
            let ys: Vec<f64> = (b * plane..(b + 1) * plane).map(|i| hr.value(i)).collect();
            band_ssim(&xs, &ys, h, w, peak, &taps)
        })
        .sum();
    Ok(total / bands as f64)
}

fn band_ssim(xs: &[f64], ys: &[f64], h: usize, w: usize, peak: f64, taps: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys.iter()).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(xs, h, w, taps);
    let mu_y = filter_valid(ys, h, w, taps);
    let e_xx = filter_valid(&xx, h, w, taps);
    let e_yy = filter_valid(&yy, h, w, taps);
    let e_xy = filter_valid(&xy, h, w, taps);

    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    total / n as f64
}

/// Separable "valid" correlation with the Gaussian window.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &img[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&src[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|t| taps[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean spectral angle and how many pixels were skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamReport {
    pub degrees: f64,
    pub skipped: usize,
}

/// Mean per-pixel spectral angle in degrees. Pixels where either spectrum
/// has zero norm are skipped and counted.
pub fn sam<C: SpectralCube>(sr: &C, hr: &C) -> Result<SamReport> {
    let (bands, h, w) = matching_dims(sr, hr, "sam")?;
    if bands < 2 {
        return Err(Error::Contract("spectral angle needs at least two bands".into()));
    }
    let plane = h * w;
    let mut total = 0.0;
    let mut valid = 0usize;
    for p in 0..plane {
        let (mut aa, mut bb) = (0.0, 0.0);
        for b in 0..bands {
            let x = sr.value(b * plane + p);
            let y = hr.value(b * plane + p);
            aa += x * x;
            bb += y * y;
        }
        if aa == 0.0 || bb == 0.0 {
            continue;
        }
        // Half-angle form: exact zero for identical spectra, unlike acos.
        let (na, nb) = (libm::sqrt(aa), libm::sqrt(bb));
        let (mut diff, mut sum) = (0.0, 0.0);
        for b in 0..bands {
            let u = sr.value(b * plane + p) / na;
            let v = hr.value(b * plane + p) / nb;
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
        total += 2.0 * libm::atan2(libm::sqrt(diff), libm::sqrt(sum));
        valid += 1;
    }
    if valid == 0 {
        return Err(Error::UndefinedMetric(
            "every pixel has a zero spectrum; spectral angle is undefined".into(),
        ));
    }
    Ok(SamReport {
        degrees: (total / valid as f64) * (180.0 / core::f64::consts::PI),
        skipped: plane - valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(bands: usize, h: usize, w: usize, f: impl FnMut(usize, usize, usize) -> f32) -> HsiCube {
        HsiCube::from_fn(bands, h, w, f).unwrap()
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = cube(3, 4, 4, |b, r, c| (b + r + c) as f32 * 0.05);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_uniform_tenth_is_twenty_db() {
        let hr = cube(4, 8, 8, |b, r, c| ((b * 7 + r * 3 + c) % 5) as f32 * 0.1);
        let sr = hr.map(|v| v + 0.1).unwrap();
        let p = psnr(&sr, &hr, 1.0).unwrap();
        // f32 storage perturbs the 0.1 offset slightly.
        assert!((p - 20.0).abs() < 1e-5, "{p}");
    }

    #[test]
    fn psnr_rejects_bad_peak() {
        let a = cube(1, 2, 2, |_, _, _| 0.0);
        assert!(psnr(&a, &a, 0.0).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = cube(2, 12, 13, |b, r, c| ((b * 31 + r * 17 + c * 7) % 11) as f32 / 11.0);
        assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_drops_with_offset() {
        let a = cube(1, 16, 16, |_, r, c| ((r * 5 + c * 3) % 7) as f32 / 14.0);
        let b = a.map(|v| v + 0.5).unwrap();
        assert!(ssim(&b, &a, 1.0).unwrap() < 1.0);
    }

    #[test]
    fn ssim_window_shrinks_to_fit() {
        assert_eq!(ssim_window_side(64, 64), 11);
        assert_eq!(ssim_window_side(10, 16), 9);
        assert_eq!(ssim_window_side(8, 8), 7);
        let a = cube(1, 2, 16, |_, _, _| 0.0);
        assert!(matches!(ssim(&a, &a, 1.0), Err(Error::Geometry { .. })));
        let b = cube(1, 8, 8, |_, r, c| (r * c) as f32 / 64.0);
        assert!((ssim(&b, &b, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_window_is_normalized_and_symmetric() {
        let t = gaussian_window();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(t[i], t[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn sam_known_angles() {
        let a = cube(2, 1, 1, |b, _, _| if b == 0 { 1.0 } else { 0.0 });
        let b = cube(2, 1, 1, |b, _, _| if b == 0 { 0.0 } else { 1.0 });
        let c = cube(2, 1, 1, |_, _, _| 1.0);
        assert!((sam(&a, &b).unwrap().degrees - 90.0).abs() < 1e-12);
        assert!((sam(&a, &c).unwrap().degrees - 45.0).abs() < 1e-9);
        assert_eq!(sam(&a, &a).unwrap().degrees, 0.0);
    }

    #[test]
    fn sam_skips_and_errors_on_zero_spectra() {
        let a = cube(2, 1, 2, |b, _, c| if c == 0 { 0.0 } else { 1.0 + b as f32 });
        let r = sam(&a, &a).unwrap();
        assert_eq!(r.skipped, 1);
        let z = cube(2, 1, 2, |_, _, _| 0.0);
        assert!(matches!(sam(&z, &a), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn evaluate_identical_reports_sentinels() {
        let a = cube(3, 12, 12, |b, r, c| 0.1 + ((b + r * c) % 9) as f32 / 10.0);
        let m = evaluate(&a, &a, 1.0).unwrap();
        assert_eq!(m.psnr, f64::INFINITY);
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert_eq!(m.sam, 0.0);
    }
}
