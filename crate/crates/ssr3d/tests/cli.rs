//! End-to-end runs of the binary on tiny synthetic data.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--synth",
    "blobs:8x16x16:n=2",
    "--filters",
    "4",
    "--modules",
    "1",
    "--units",
    "1",
    "--epochs",
    "2",
    "--patch-size",
    "8",
    "--patches-per-image",
    "1",
    "--augment",
    "off",
    "--batch-size",
    "1",
];

fn ssr3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssr3d"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn train(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    ssr3d(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn scale_outside_set_is_usage_error() {
    let o = ssr3d(&["params", "--scale", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("{2, 3, 4}"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny\nfilters = 4\nfilterz = 8\n").unwrap();
    let o = ssr3d(&["params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:3"), "{}", stderr(&o));
}

#[test]
fn train_writes_all_outputs_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let o = train(&a, &["--spectrum", "3,7", "--error-maps"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["final.ssrc", "loss.csv", "metrics.csv", "bicubic.csv", "split.csv", "manifest.txt"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    let spectra: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("spectrum_"))
        .collect();
    // two cubes leave nothing to hold out, so both are evaluated
    assert_eq!(spectra.len(), 2);
    assert_eq!(fs::read_to_string(&spectra[0]).unwrap().lines().count(), 8 + 1);
    // one map per cube and band plus the scale sidecar
    assert_eq!(fs::read_dir(a.join("error_maps")).unwrap().count(), 2 * 8 + 1);

    assert!(train(&b, &[]).status.success());
    assert_eq!(fs::read(a.join("loss.csv")).unwrap(), fs::read(b.join("loss.csv")).unwrap());
    assert_eq!(fs::read(a.join("final.ssrc")).unwrap(), fs::read(b.join("final.ssrc")).unwrap());
    assert!(train(&c, &["--seed", "9"]).status.success());
    assert_ne!(fs::read(a.join("loss.csv")).unwrap(), fs::read(c.join("loss.csv")).unwrap());
}

#[test]
fn other_losses_run_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    for loss in ["mse", "combo"] {
        let out = dir.path().join(loss);
        let o = train(&out, &["--loss", loss]);
        assert!(o.status.success(), "{loss}: {}", stderr(&o));
        // two cubes, both used for training, one sample each per epoch
        assert_eq!(fs::read_to_string(out.join("loss.csv")).unwrap().lines().count(), 1 + 2 * 2);
    }
}

#[test]
fn non_finite_loss_keeps_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nan");
    let o = train(&out, &["--lr", "1e300"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"), "{}", stderr(&o));
    assert!(out.join("last_good.ssrc").is_file());
    assert!(!out.join("final.ssrc").exists());
}

#[test]
fn eval_checks_scale_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(train(&run, &[]).status.success());
    let ck = run.join("final.ssrc");
    let ev = dir.path().join("ev");
    let base = ["eval", "--checkpoint", ck.to_str().unwrap(), "--synth", "ramps:8x20x20:n=2", "--out", ev.to_str().unwrap()];
    let o = ssr3d(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("cube_id,psnr,ssim,sam"));
    assert_eq!(metrics.lines().count(), 3);

    let o = ssr3d(&[&base[..], &["--scale", "4"]].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scale"));

    let mut bytes = fs::read(&ck).unwrap();
    bytes[40] ^= 0xFF;
    let bad = dir.path().join("bad.ssrc");
    fs::write(&bad, bytes).unwrap();
    let o = ssr3d(&["eval", "--checkpoint", bad.to_str().unwrap(), "--synth", "ramps:8x20x20", "--out", ev.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checksum mismatch at byte"), "{}", stderr(&o));
}

#[test]
fn manifest_is_tied_to_its_command() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(train(&run, &[]).status.success());
    let o = ssr3d(&["ablate", "--config", run.join("manifest.txt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not `ablate`"));
}

#[test]
fn synth_files_feed_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = ssr3d(&["synth", "--synth", "checker:4x16x16:n=3", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
    let run = dir.path().join("run");
    let o = ssr3d(&["train", "--data", data.to_str().unwrap(), "--out", run.to_str().unwrap(), "--filters", "4", "--modules", "1", "--units", "1", "--epochs", "1", "--patch-size", "8", "--patches-per-image", "1", "--augment", "off"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let split = fs::read_to_string(run.join("split.csv")).unwrap();
    assert_eq!(split.matches(",train").count(), 2);
    assert_eq!(split.matches(",test").count(), 1);
}

#[test]
fn gradcheck_names_injected_fault() {
    let o = ssr3d(&["gradcheck", "--inject-fault", "relu"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("relu"), "{err}");
    assert!(!err.contains("conv3d"), "{err}");
}
