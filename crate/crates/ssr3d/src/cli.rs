//! Argument parsing. Flags override the config file, which overrides defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{AppError, AppResult};
use crate::run;
use crate::settings::{parse_pixel, parse_scale, Settings, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "ssr3d", version, about = "3D separable-convolution hyperspectral super-resolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and evaluate it on the held-out split
    Train(Shared),
    /// Evaluate a checkpoint against bicubic upsampling
    Eval(Shared),
    /// Train and compare the four LFF/GRL combinations
    Ablate(Shared),
    /// Parameter counts per layer group for both block kinds
    Params {
        #[command(flatten)]
        shared: Shared,
        /// Print CSV instead of a table
        #[arg(long)]
        csv: bool,
    },
    /// Compare analytic and finite-difference gradients
    Gradcheck {
        #[command(flatten)]
        shared: Shared,
        /// Scale the gradients of one op to check that failures are caught
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Write synthetic cubes as .hsc files
    Synth(Shared),
}

#[derive(Debug, Clone, Args, Default)]
pub struct Shared {
    /// key = value file; a manifest from an earlier run works here
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Upscaling factor: 2, 3 or 4
    #[arg(long, value_parser = parse_scale)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    /// Number of residual modules
    #[arg(long)]
    pub modules: Option<usize>,
    /// Units per module
    #[arg(long)]
    pub units: Option<usize>,
    /// separable or standard
    #[arg(long)]
    pub block: Option<String>,
    /// on or off
    #[arg(long)]
    pub lff: Option<String>,
    /// on or off
    #[arg(long)]
    pub grl: Option<String>,
    /// l1, mse or combo
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub patches_per_image: Option<usize>,
    /// on or off
    #[arg(long)]
    pub augment: Option<String>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Directory of .hsc cubes
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic cubes, e.g. blobs:8x64x64:n=4
    #[arg(long)]
    pub synth: Option<SynthSpec>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Largest evaluated square side
    #[arg(long)]
    pub crop: Option<usize>,
    /// Write per-cube error maps
    #[arg(long)]
    pub error_maps: bool,
    /// Dump the spectrum at row,col
    #[arg(long, value_parser = parse_pixel)]
    pub spectrum: Option<(usize, usize)>,
}

fn text<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

impl Shared {
    fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k, val));
            }
        };
        put("seed", text(&self.seed));
        put("scale", text(&self.scale));
        put("filters", text(&self.filters));
        put("modules", text(&self.modules));
        put("units", text(&self.units));
        put("block", self.block.clone());
        put("lff", self.lff.clone());
        put("grl", self.grl.clone());
        put("loss", self.loss.clone());
        put("epochs", text(&self.epochs));
        put("batch_size", text(&self.batch_size));
        put("lr", text(&self.lr));
        put("patch_size", text(&self.patch_size));
        put("patches_per_image", text(&self.patches_per_image));
        put("augment", self.augment.clone());
        put("clip_norm", text(&self.clip_norm));
        put("data", self.data.as_ref().map(|p| p.display().to_string()));
        put("synth", text(&self.synth));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string()));
        put("crop", text(&self.crop));
        put("error_maps", self.error_maps.then(|| "on".to_owned()));
        put("spectrum", self.spectrum.map(|(r, c)| format!("{r},{c}")));
        v
    }

    /// Defaults, then `--config`, then flags.
    pub fn resolve(&self, command: &str) -> AppResult<Settings> {
        let mut settings = Settings::default();
        if let Some(path) = &self.config {
            settings.apply_file(path, command)?;
        }
        // a flag replaces the file's data source instead of conflicting with it
        if self.data.is_some() {
            settings.synth = None;
        }
        if self.synth.is_some() {
            settings.data = None;
        }
        for (k, v) in self.flag_pairs() {
            settings.apply(k, &v).map_err(|m| AppError::Usage(format!("--{}: {m}", k.replace('_', "-"))))?;
        }
        Ok(settings)
    }
}

pub fn dispatch(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Train(sh) => {
            let path = run::train(&sh.resolve("train")?)?;
            log::info!("final checkpoint: {}", path.display());
        }
        Command::Eval(sh) => {
            run::eval(&sh.resolve("eval")?, sh.scale)?;
        }
        Command::Ablate(sh) => {
            run::ablate(&sh.resolve("ablate")?)?;
        }
        Command::Params { shared, csv } => {
            run::params(&shared.resolve("params")?, csv)?;
        }
        Command::Gradcheck { shared, inject_fault } => {
            let settings = shared.resolve("gradcheck")?;
            // the tape keeps op names as `&'static str`; one leak per process
            let fault = inject_fault.map(|f| &*Box::leak(f.into_boxed_str()));
            run::gradcheck(&settings, fault)?;
        }
        Command::Synth(sh) => {
            for p in run::synth(&sh.resolve("synth")?)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
