//! CSV tables, error maps and spectrum dumps.

use std::fs;
use std::path::Path;

use ssr3d_core::train::LossRecord;
use ssr3d_core::{HsiCube, MetricsReport};

use crate::error::{AppError, AppResult};

/// Metric values as written to CSV; infinities print as `inf`.
pub fn fmt_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "step", "lr", "loss"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.step.to_string(), r.lr.to_string(), r.loss.to_string()])?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn write_metrics_csv(path: &Path, rows: &[(String, MetricsReport)]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cube_id", "psnr", "ssim", "sam"])?;
    for (id, m) in rows {
        w.write_record([id.clone(), fmt_metric(m.psnr), fmt_metric(m.ssim), fmt_metric(m.sam)])?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Per-pixel absolute error, one map per band.
pub fn band_error_maps(sr: &HsiCube, hr: &HsiCube) -> AppResult<Vec<Vec<f64>>> {
    sr.check_same_dims(hr, "error map")?;
    Ok((0..hr.bands())
        .map(|b| sr.band(b).iter().zip(hr.band(b)).map(|(s, t)| (f64::from(*s) - f64::from(*t)).abs()).collect())
        .collect())
}

/// Writes one binary PGM per map under `dir`, all with the same scale, plus
/// `scale.txt` giving the error that maps to 255.
pub fn write_error_maps(dir: &Path, maps: &[(String, usize, usize, Vec<f64>)]) -> AppResult<f64> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let scale = maps.iter().flat_map(|(_, _, _, m)| m.iter().copied()).fold(0.0, f64::max);
    for (id, h, w, map) in maps {
        let path = dir.join(format!("{id}.pgm"));
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        bytes.extend(map.iter().map(|&e| if scale > 0.0 { (255.0 * e / scale).round() as u8 } else { 0 }));
        fs::write(&path, bytes).map_err(|e| AppError::io(&path, e))?;
    }
    let path = dir.join("scale.txt");
    fs::write(&path, format!("error_at_255 = {scale}\n")).map_err(|e| AppError::io(&path, e))?;
    Ok(scale)
}

pub fn write_spectrum_csv(path: &Path, hr: &HsiCube, sr: &HsiCube, row: usize, col: usize) -> AppResult<()> {
    let (_, h, w) = hr.dims();
    if row >= h || col >= w {
        return Err(AppError::Usage(format!("spectrum pixel ({row}, {col}) lies outside the {h}x{w} evaluated area")));
    }
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["band", "hr", "sr"])?;
    for (b, (t, s)) in hr.spectrum(row, col).iter().zip(sr.spectrum(row, col)).enumerate() {
        wr.write_record([b.to_string(), t.to_string(), s.to_string()])?;
    }
    wr.flush().map_err(|e| AppError::io(path, e))
}
