//! One function per subcommand. Tables go to stdout, progress to the log.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ssr3d_core::gradcheck::{run_suite, GradcheckReport};
use ssr3d_core::model::{compare_block_kinds, predict, BlockComparison, ParamGroup, ParamStore};
use ssr3d_core::patches::{add_mean, mean_subtract, AugmentConfig};
use ssr3d_core::resample::{bicubic_resize, downsample};
use ssr3d_core::train::{DataConfig, Trainer};
use ssr3d_core::{evaluate, Error, HsiCube, MetricsReport, SsrnetConfig};

use crate::checkpoint::{self, Checkpoint};
use crate::dataset::{self, NamedCube};
use crate::error::{AppError, AppResult};
use crate::hsc::write_hsc;
use crate::outputs;
use crate::settings::{write_manifest, Settings};

/// Reflectance data is taken to lie in `[0, 1]`.
pub const PEAK: f64 = 1.0;
/// Epoch interval between intermediate checkpoints.
pub const CHECKPOINT_EVERY: usize = 35;
/// Caps worker threads for evaluation and ablation.
pub const THREADS_ENV: &str = "SSR3D_THREADS";

fn create_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

pub fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

/// Runs `f` over `items` on up to [`worker_count`] threads, keeping order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> AppResult<R> + Sync) -> AppResult<Vec<R>> {
    let workers = worker_count(items.len());
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<AppResult<Vec<R>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

fn data_config(settings: &Settings) -> DataConfig {
    DataConfig {
        patch_hw: settings.patch_size,
        patches_per_image: settings.patches_per_image,
        augment: if settings.augment {
            AugmentConfig::default()
        } else {
            AugmentConfig::none()
        },
    }
}

fn config_error(e: Error) -> AppError {
    match e {
        Error::Config(m) => AppError::Usage(m),
        other => AppError::Core(other),
    }
}

/// Result of evaluating one cube.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub id: String,
    pub sr_metrics: MetricsReport,
    pub bicubic_metrics: MetricsReport,
    pub hr: HsiCube,
    pub sr: HsiCube,
}

/// Top-left square crop of side `min(crop, H, W)`, floored to a multiple of `r`.
pub fn eval_crop(cube: &HsiCube, crop: usize, r: usize) -> AppResult<HsiCube> {
    let side = crop.min(cube.height()).min(cube.width());
    let side = side - side % r;
    if side / r < ssr3d_core::resample::MIN_RESIZE_DIM {
        return Err(AppError::Usage(format!(
            "cube of {}x{} is too small to evaluate at scale {r}",
            cube.height(),
            cube.width()
        )));
    }
    Ok(cube.crop(0, 0, side, side)?)
}

/// Super-resolves `lr` with the mean handled as in training.
pub fn super_resolve(store: &ParamStore, config: &SsrnetConfig, mean: f64, lr: &HsiCube) -> AppResult<HsiCube> {
    let out = predict(store, config, &mean_subtract(lr, mean))?;
    Ok(add_mean(&out, mean)?)
}

pub fn eval_cube(store: &ParamStore, config: &SsrnetConfig, mean: f64, named: &NamedCube, crop: usize) -> AppResult<Evaluated> {
    let hr = eval_crop(&named.cube, crop, config.scale)?;
    let lr = downsample(&hr, config.scale)?;
    let sr = super_resolve(store, config, mean, &lr)?;
    let bicubic = bicubic_resize(&lr, hr.height(), hr.width())?;
    Ok(Evaluated {
        id: named.id.clone(),
        sr_metrics: evaluate(&sr, &hr, PEAK)?,
        bicubic_metrics: evaluate(&bicubic, &hr, PEAK)?,
        hr,
        sr,
    })
}

pub fn eval_all(store: &ParamStore, config: &SsrnetConfig, mean: f64, cubes: &[NamedCube], crop: usize) -> AppResult<Vec<Evaluated>> {
    par_map(cubes, |c| eval_cube(store, config, mean, c, crop))
}

/// Mean of each metric; PSNR averages only finite values.
pub fn mean_report(reports: impl IntoIterator<Item = MetricsReport>) -> MetricsReport {
    let all: Vec<MetricsReport> = reports.into_iter().collect();
    let n = all.len().max(1) as f64;
    let finite: Vec<f64> = all.iter().map(|m| m.psnr).filter(|p| p.is_finite()).collect();
    MetricsReport {
        psnr: if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        ssim: all.iter().map(|m| m.ssim).sum::<f64>() / n,
        sam: all.iter().map(|m| m.sam).sum::<f64>() / n,
        sam_skipped: all.iter().map(|m| m.sam_skipped).sum(),
    }
}

/// Writes the metric tables and optional extras for an evaluation.
fn write_eval_outputs(dir: &Path, settings: &Settings, results: &[Evaluated], artifacts: &mut Vec<(String, PathBuf)>) -> AppResult<()> {
    let metrics = dir.join("metrics.csv");
    outputs::write_metrics_csv(&metrics, &results.iter().map(|e| (e.id.clone(), e.sr_metrics)).collect::<Vec<_>>())?;
    artifacts.push(("metrics".into(), metrics));
    let bicubic = dir.join("bicubic.csv");
    outputs::write_metrics_csv(&bicubic, &results.iter().map(|e| (e.id.clone(), e.bicubic_metrics)).collect::<Vec<_>>())?;
    artifacts.push(("bicubic".into(), bicubic));
    if settings.error_maps {
        let mut maps = Vec::new();
        for e in results {
            for (b, map) in outputs::band_error_maps(&e.sr, &e.hr)?.into_iter().enumerate() {
                maps.push((format!("{}_band{b:03}", e.id), e.hr.height(), e.hr.width(), map));
            }
        }
        let err_dir = dir.join("error_maps");
        outputs::write_error_maps(&err_dir, &maps)?;
        artifacts.push(("error_maps".into(), err_dir));
    }
    if let Some((r, c)) = settings.spectrum {
        for e in results {
            let path = dir.join(format!("spectrum_{}.csv", e.id));
            outputs::write_spectrum_csv(&path, &e.hr, &e.sr, r, c)?;
            artifacts.push((format!("spectrum_{}", e.id), path));
        }
    }
    let sr = mean_report(results.iter().map(|e| e.sr_metrics));
    let bi = mean_report(results.iter().map(|e| e.bicubic_metrics));
    println!("{:<8} {:>10} {:>8} {:>8}", "method", "PSNR", "SSIM", "SAM");
    println!("{:<8} {:>10.4} {:>8.4} {:>8.4}", "ssrnet", sr.psnr, sr.ssim, sr.sam);
    println!("{:<8} {:>10.4} {:>8.4} {:>8.4}", "bicubic", bi.psnr, bi.ssim, bi.sam);
    Ok(())
}

/// Trains epoch by epoch. `on_epoch` sees the trainer after every epoch.
/// A non-finite loss or gradient stops before the optimizer step, so the
/// trainer still holds the parameters of the last completed step.
fn fit(trainer: &mut Trainer, mut on_epoch: impl FnMut(&Trainer, usize) -> AppResult<()>) -> AppResult<()> {
    for epoch in 0..trainer.train.epochs {
        let summary = trainer.run_epoch(epoch)?;
        log::info!(
            "epoch {:>3}: {} samples, mean loss {:.6}, {} variants skipped",
            epoch + 1,
            summary.samples,
            summary.mean_loss,
            summary.skipped_variants
        );
        on_epoch(trainer, epoch)?;
    }
    Ok(())
}

pub fn train(settings: &Settings) -> AppResult<PathBuf> {
    let out = settings.out_dir()?.to_path_buf();
    let model = settings.model();
    model.validate().map_err(config_error)?;
    let split = dataset::split(dataset::load(settings)?, settings.seed);
    create_dir(&out)?;
    let mut artifacts = Vec::new();
    let split_path = out.join("split.csv");
    dataset::write_split_csv(&split_path, &split)?;
    artifacts.push(("split".into(), split_path));
    if split.shared {
        log::warn!("only {} cube(s): evaluating on the training set", split.train.len());
    }
    let cubes = split.train.iter().map(|c| c.cube.clone()).collect();
    let mut trainer = Trainer::new(model, settings.train(), data_config(settings), cubes).map_err(config_error)?;
    log::info!("training on {} cube(s), mean {:.6}", split.train.len(), trainer.mean);

    let started = Instant::now();
    let result = fit(&mut trainer, |t, epoch| {
        if (epoch + 1) % CHECKPOINT_EVERY == 0 {
            let path = out.join(format!("epoch_{:03}.ssrc", epoch + 1));
            checkpoint::save(&Checkpoint::rounded(t.model, t.mean, &t.store), &path)?;
        }
        Ok(())
    });
    let loss_path = out.join("loss.csv");
    outputs::write_loss_csv(&loss_path, &trainer.history)?;
    artifacts.push(("loss".into(), loss_path));
    if let Err(AppError::Core(Error::NonFinite { what })) = result {
        let path = out.join("last_good.ssrc");
        checkpoint::save(&Checkpoint::rounded(trainer.model, trainer.mean, &trainer.store), &path)?;
        return Err(AppError::Aborted {
            message: format!("training stopped: non-finite {what}; last good parameters saved to {}", path.display()),
        });
    }
    result?;
    log::info!("trained {} epochs in {:.1?}", settings.epochs, started.elapsed());

    let ck = Checkpoint::rounded(trainer.model, trainer.mean, &trainer.store);
    let final_path = out.join("final.ssrc");
    checkpoint::save(&ck, &final_path)?;
    artifacts.push(("checkpoint".into(), final_path.clone()));
    let results = eval_all(&ck.store, &ck.config, ck.mean, &split.test, settings.crop)?;
    write_eval_outputs(&out, settings, &results, &mut artifacts)?;
    write_manifest(&out, "train", settings, &artifacts)?;
    Ok(final_path)
}

/// `scale_flag` is the scale given on the command line, if any.
pub fn eval(settings: &Settings, scale_flag: Option<usize>) -> AppResult<Vec<Evaluated>> {
    let out = settings.out_dir()?.to_path_buf();
    let ck_path = settings
        .checkpoint
        .as_deref()
        .ok_or_else(|| AppError::Usage("eval needs --checkpoint <file>".into()))?;
    let ck = checkpoint::load(ck_path)?;
    if let Some(r) = scale_flag.filter(|&r| r != ck.config.scale) {
        return Err(AppError::Usage(format!(
            "--scale {r} does not match the checkpoint's scale {}",
            ck.config.scale
        )));
    }
    let cubes = dataset::load(settings)?;
    create_dir(&out)?;
    let results = eval_all(&ck.store, &ck.config, ck.mean, &cubes, settings.crop)?;
    let mut artifacts = vec![("checkpoint".to_owned(), ck_path.to_path_buf())];
    write_eval_outputs(&out, settings, &results, &mut artifacts)?;
    let mut resolved = settings.clone();
    resolved.scale = ck.config.scale;
    write_manifest(&out, "eval", &resolved, &artifacts)?;
    Ok(results)
}

/// One row of the ablation table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub lff: bool,
    pub grl: bool,
    pub metrics: MetricsReport,
    pub final_loss: f64,
}

pub const ABLATIONS: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

pub fn ablation_name(lff: bool, grl: bool) -> String {
    format!("LFF{}GRL{}", u8::from(lff), u8::from(grl))
}

fn ablate_one(settings: &Settings, split: &dataset::Split, lff: bool, grl: bool, out: &Path) -> AppResult<AblationRow> {
    let name = ablation_name(lff, grl);
    let s = Settings { lff, grl, ..settings.clone() };
    let cubes = split.train.iter().map(|c| c.cube.clone()).collect();
    let mut trainer = Trainer::new(s.model(), s.train(), data_config(&s), cubes).map_err(config_error)?;
    let result = fit(&mut trainer, |_, _| Ok(()));
    outputs::write_loss_csv(&out.join(format!("loss_{name}.csv")), &trainer.history)?;
    result.map_err(|e| AppError::Aborted {
        message: format!("{name}: {e}"),
    })?;
    let ck = Checkpoint::rounded(trainer.model, trainer.mean, &trainer.store);
    let results = split
        .test
        .iter()
        .map(|c| eval_cube(&ck.store, &ck.config, ck.mean, c, s.crop))
        .collect::<AppResult<Vec<_>>>()?;
    Ok(AblationRow {
        name,
        lff,
        grl,
        metrics: mean_report(results.iter().map(|e| e.sr_metrics)),
        final_loss: trainer.history.last().map_or(f64::NAN, |r| r.loss),
    })
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mark = |b: bool| if b { "✓" } else { "✗" };
    let mut s = format!("{:<10} {:^5} {:^5} {:>10} {:>8} {:>8}\n", "config", "LFF", "GRL", "PSNR", "SSIM", "SAM");
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:^5} {:^5} {:>10.4} {:>8.4} {:>8.4}\n",
            r.name,
            mark(r.lff),
            mark(r.grl),
            r.metrics.psnr,
            r.metrics.ssim,
            r.metrics.sam
        ));
    }
    s
}

/// Trains and evaluates the four LFF/GRL combinations side by side.
pub fn ablate(settings: &Settings) -> AppResult<Vec<AblationRow>> {
    let out = settings.out_dir()?.to_path_buf();
    settings.model().validate().map_err(config_error)?;
    let split = dataset::split(dataset::load(settings)?, settings.seed);
    create_dir(&out)?;
    dataset::write_split_csv(&out.join("split.csv"), &split)?;
    let rows = par_map(&ABLATIONS, |&(lff, grl)| ablate_one(settings, &split, lff, grl, &out))?;
    let path = out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["config", "lff", "grl", "psnr", "ssim", "sam", "final_loss"])?;
    for r in &rows {
        w.write_record([
            r.name.clone(),
            r.lff.to_string(),
            r.grl.to_string(),
            outputs::fmt_metric(r.metrics.psnr),
            outputs::fmt_metric(r.metrics.ssim),
            outputs::fmt_metric(r.metrics.sam),
            r.final_loss.to_string(),
        ])?;
    }
    w.flush().map_err(|e| AppError::io(&path, e))?;
    print!("{}", ablation_table(&rows));
    let mut artifacts = vec![("ablation".to_owned(), path)];
    artifacts.extend(rows.iter().map(|r| (format!("loss_{}", r.name), out.join(format!("loss_{}.csv", r.name)))));
    write_manifest(&out, "ablate", settings, &artifacts)?;
    Ok(rows)
}

pub fn params_text(cmp: &BlockComparison, csv: bool) -> String {
    let mut s = String::new();
    if csv {
        s.push_str("group,separable,standard\n");
    } else {
        s.push_str(&format!("{:<16} {:>12} {:>12}\n", "group", "separable", "standard"));
    }
    let rows = ParamGroup::ALL
        .iter()
        .map(|&g| (g.as_str(), cmp.separable.group(g), cmp.standard.group(g)))
        .chain([("total", cmp.separable.total, cmp.standard.total)]);
    for (name, a, b) in rows {
        if csv {
            s.push_str(&format!("{name},{a},{b}\n"));
        } else {
            s.push_str(&format!("{name:<16} {a:>12} {b:>12}\n"));
        }
    }
    if csv {
        s.push_str(&format!("ratio,{:.5},\n", cmp.ratio));
    } else {
        s.push_str(&format!("{:<16} {:>12.5}\n", "ratio", cmp.ratio));
    }
    s
}

pub fn params(settings: &Settings, csv: bool) -> AppResult<BlockComparison> {
    let cmp = compare_block_kinds(&settings.model()).map_err(config_error)?;
    print!("{}", params_text(&cmp, csv));
    if let Some(out) = &settings.out {
        create_dir(out)?;
        let path = out.join("params.csv");
        fs::write(&path, params_text(&cmp, true)).map_err(|e| AppError::io(&path, e))?;
        write_manifest(out, "params", settings, &[("params".into(), path)])?;
    }
    Ok(cmp)
}

pub fn gradcheck(settings: &Settings, fault: Option<&'static str>) -> AppResult<GradcheckReport> {
    let report = run_suite(fault, settings.seed)?;
    if let Some(out) = &settings.out {
        create_dir(out)?;
        let path = out.join("gradcheck.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["op", "max_rel_error", "checked", "passed"])?;
        for r in &report.rows {
            w.write_record([r.op.clone(), r.max_rel_error.to_string(), r.checked.to_string(), r.passed().to_string()])?;
        }
        w.flush().map_err(|e| AppError::io(&path, e))?;
        write_manifest(out, "gradcheck", settings, &[("gradcheck".into(), path)])?;
    }
    println!("{:<22} {:>14} {:>8}  result", "op", "max rel error", "checked");
    for r in &report.rows {
        println!(
            "{:<22} {:>14.3e} {:>8}  {}",
            r.op,
            r.max_rel_error,
            r.checked,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    if !report.passed() {
        let names: Vec<&str> = report.failures().map(|r| r.op.as_str()).collect();
        return Err(AppError::Aborted {
            message: format!("gradient check failed for: {}", names.join(", ")),
        });
    }
    Ok(report)
}

pub fn synth(settings: &Settings) -> AppResult<Vec<PathBuf>> {
    let out = settings.out_dir()?.to_path_buf();
    if settings.synth.is_none() {
        return Err(AppError::Usage("synth needs --synth kind:LxHxW[:n=N]".into()));
    }
    let cubes = dataset::load(settings)?;
    create_dir(&out)?;
    let mut artifacts = Vec::new();
    for c in &cubes {
        let path = out.join(format!("{}.hsc", c.id));
        write_hsc(&c.cube, &path)?;
        artifacts.push((c.id.clone(), path));
    }
    write_manifest(&out, "synth", settings, &artifacts)?;
    Ok(artifacts.into_iter().map(|(_, p)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_is_top_left_and_divisible() {
        let cube = HsiCube::from_fn(2, 21, 30, |b, r, c| (b + r * 100 + c) as f32).unwrap();
        let c = eval_crop(&cube, 512, 4).unwrap();
        assert_eq!(c.dims(), (2, 20, 20));
        assert_eq!(c.at(1, 19, 19), cube.at(1, 19, 19));
        assert!(eval_crop(&cube, 12, 4).is_err());
    }

    #[test]
    fn mean_report_skips_infinite_psnr() {
        let m = |psnr| MetricsReport {
            psnr,
            ssim: 1.0,
            sam: 0.0,
            sam_skipped: 0,
        };
        assert_eq!(mean_report([m(f64::INFINITY), m(30.0), m(40.0)]).psnr, 35.0);
        assert_eq!(mean_report([m(f64::INFINITY)]).psnr, f64::INFINITY);
    }

    #[test]
    fn ablation_names() {
        let names: Vec<String> = ABLATIONS.iter().map(|&(l, g)| ablation_name(l, g)).collect();
        assert_eq!(names, ["LFF0GRL0", "LFF1GRL0", "LFF0GRL1", "LFF1GRL1"]);
    }
}
