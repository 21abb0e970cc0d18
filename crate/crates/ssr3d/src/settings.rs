//! Resolved run configuration, the `key = value` config file and the run
//! manifest.
//!
//! Precedence is defaults, then the config file, then command-line flags.
//! A manifest is itself a valid config file, so `--config manifest.txt`
//! replays a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ssr3d_core::model::BlockKind;
use ssr3d_core::synth::SynthKind;
use ssr3d_core::{LossKind, SsrnetConfig, TrainConfig};

use crate::error::{AppError, AppResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCALES: [usize; 3] = [2, 3, 4];

/// Parsed `kind:LxHxW:n=N` synthetic dataset spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub count: usize,
}

impl std::str::FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("synthetic spec `{s}` is not of the form kind:LxHxW[:n=N]");
        let mut parts = s.split(':');
        let kind: SynthKind = parts.next().ok_or_else(bad)?.parse().map_err(|e: ssr3d_core::Error| e.to_string())?;
        let dims: Vec<usize> = parts
            .next()
            .ok_or_else(bad)?
            .split('x')
            .map(|d| d.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [bands, height, width] = dims[..] else { return Err(bad()) };
        let count = match parts.next() {
            None => 1,
            Some(n) => n.strip_prefix("n=").ok_or_else(bad)?.parse().map_err(|_| bad())?,
        };
        if parts.next().is_some() || count == 0 {
            return Err(bad());
        }
        Ok(Self {
            kind,
            bands,
            height,
            width,
            count,
        })
    }
}

impl std::fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}x{}x{}:n={}", self.kind.as_str(), self.bands, self.height, self.width, self.count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub scale: usize,
    pub filters: usize,
    pub modules: usize,
    pub units: usize,
    pub kernel: usize,
    pub block: BlockKind,
    pub lff: bool,
    pub grl: bool,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patch_size: usize,
    pub patches_per_image: usize,
    pub augment: bool,
    pub clip_norm: Option<f64>,
    pub data: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub crop: usize,
    pub error_maps: bool,
    pub spectrum: Option<(usize, usize)>,
}

impl Default for Settings {
    fn default() -> Self {
        let m = SsrnetConfig::default();
        let t = TrainConfig::default();
        Self {
            seed: t.seed,
            scale: m.scale,
            filters: m.filters,
            modules: m.d_modules,
            units: m.units_per_module,
            kernel: m.k,
            block: m.block_kind,
            lff: m.lff_enabled,
            grl: m.grl_enabled,
            loss: t.loss_kind,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr0,
            patch_size: 32,
            patches_per_image: 24,
            augment: true,
            clip_norm: None,
            data: None,
            synth: None,
            out: None,
            checkpoint: None,
            crop: 512,
            error_maps: false,
            spectrum: None,
        }
    }
}

fn on_off(v: &str) -> Result<bool, String> {
    match v {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected on or off, got `{v}`")),
    }
}

fn number<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

fn positive(v: &str) -> Result<usize, String> {
    match number::<usize>(v)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

pub fn parse_scale(v: &str) -> Result<usize, String> {
    match number::<usize>(v) {
        Ok(r) if SCALES.contains(&r) => Ok(r),
        _ => Err(format!("scale `{v}` is not one of {{2, 3, 4}}")),
    }
}

pub fn parse_pixel(v: &str) -> Result<(usize, usize), String> {
    let (r, c) = v.split_once(',').ok_or_else(|| format!("pixel `{v}` is not of the form row,col"))?;
    Ok((number(r.trim())?, number(c.trim())?))
}

/// Keys a manifest carries that are not settings.
fn is_manifest_only(key: &str) -> bool {
    key == "command" || key == "tool_version" || key.starts_with("artifact.")
}

impl Settings {
    /// Sets one key from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "seed" => self.seed = number(value)?,
            "scale" => self.scale = parse_scale(value)?,
            "filters" => self.filters = positive(value)?,
            "modules" => self.modules = positive(value)?,
            "units" => self.units = positive(value)?,
            "kernel" => self.kernel = positive(value)?,
            "block" => self.block = value.parse().map_err(|e: ssr3d_core::Error| e.to_string())?,
            "lff" => self.lff = on_off(value)?,
            "grl" => self.grl = on_off(value)?,
            "loss" => self.loss = value.parse().map_err(|e: ssr3d_core::Error| e.to_string())?,
            "epochs" => self.epochs = number(value)?,
            "batch_size" => self.batch_size = positive(value)?,
            "lr" => self.lr = number(value)?,
            "patch_size" => self.patch_size = positive(value)?,
            "patches_per_image" => self.patches_per_image = positive(value)?,
            "augment" => self.augment = on_off(value)?,
            "clip_norm" => self.clip_norm = if value == "none" { None } else { Some(number(value)?) },
            "data" => self.data = Some(PathBuf::from(value)),
            "synth" => self.synth = Some(value.parse()?),
            "out" => self.out = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "crop" => self.crop = positive(value)?,
            "error_maps" => self.error_maps = on_off(value)?,
            "spectrum" => self.spectrum = Some(parse_pixel(value)?),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies a config file. `command` is checked against a manifest's
    /// `command` entry when present.
    pub fn apply_file(&mut self, path: &Path, command: &str) -> AppResult<()> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| AppError::Usage(format!("{}:{}: {msg}", path.display(), i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            if key == "command" && value != command {
                return Err(at(format!("manifest is for `{value}`, not `{command}`")));
            }
            if is_manifest_only(key) {
                continue;
            }
            self.apply(key, value).map_err(|m| at(format!("{key}: {m}")))?;
        }
        Ok(())
    }

    /// Every setting as `(key, value)` text, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let onoff = |b: bool| if b { "on" } else { "off" }.to_owned();
        let mut v = vec![
            ("seed", self.seed.to_string()),
            ("scale", self.scale.to_string()),
            ("filters", self.filters.to_string()),
            ("modules", self.modules.to_string()),
            ("units", self.units.to_string()),
            ("kernel", self.kernel.to_string()),
            ("block", self.block.as_str().to_owned()),
            ("lff", onoff(self.lff)),
            ("grl", onoff(self.grl)),
            ("loss", self.loss.as_str().to_owned()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("patches_per_image", self.patches_per_image.to_string()),
            ("augment", onoff(self.augment)),
            ("clip_norm", self.clip_norm.map_or("none".into(), |c| c.to_string())),
            ("crop", self.crop.to_string()),
            ("error_maps", onoff(self.error_maps)),
        ];
        let path = |p: &PathBuf| p.display().to_string();
        if let Some(d) = &self.data {
            v.push(("data", path(d)));
        }
        if let Some(s) = &self.synth {
            v.push(("synth", s.to_string()));
        }
        if let Some(o) = &self.out {
            v.push(("out", path(o)));
        }
        if let Some(c) = &self.checkpoint {
            v.push(("checkpoint", path(c)));
        }
        if let Some((r, c)) = self.spectrum {
            v.push(("spectrum", format!("{r},{c}")));
        }
        v
    }

    pub fn model(&self) -> SsrnetConfig {
        SsrnetConfig {
            d_modules: self.modules,
            units_per_module: self.units,
            filters: self.filters,
            k: self.kernel,
            scale: self.scale,
            lff_enabled: self.lff,
            grl_enabled: self.grl,
            block_kind: self.block,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            loss_kind: self.loss,
            seed: self.seed,
            clip_norm: self.clip_norm,
            ..TrainConfig::default()
        }
    }

    pub fn out_dir(&self) -> AppResult<&Path> {
        self.out.as_deref().ok_or_else(|| AppError::Usage("--out <dir> is required".into()))
    }
}

/// Text of a run manifest.
pub fn manifest_text(command: &str, settings: &Settings, artifacts: &[(String, PathBuf)]) -> String {
    let mut s = String::new();
    writeln!(s, "command = {command}").unwrap();
    writeln!(s, "tool_version = {TOOL_VERSION}").unwrap();
    for (k, v) in settings.pairs() {
        writeln!(s, "{k} = {v}").unwrap();
    }
    for (name, path) in artifacts {
        writeln!(s, "artifact.{name} = {}", path.display()).unwrap();
    }
    s
}

pub fn write_manifest(dir: &Path, command: &str, settings: &Settings, artifacts: &[(String, PathBuf)]) -> AppResult<PathBuf> {
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest_text(command, settings, artifacts)).map_err(|e| AppError::io(&path, e))?;
    Ok(path)
}
