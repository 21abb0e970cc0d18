//! Cube loading and the seeded train/test split.

use std::fs;
use std::path::{Path, PathBuf};

use ssr3d_core::synth::synth_cube;
use ssr3d_core::train::derive_seed;
use ssr3d_core::HsiCube;

use crate::error::{AppError, AppResult};
use crate::hsc::read_hsc;
use crate::settings::{Settings, SynthSpec};

/// Stream id for split shuffling, kept apart from the training streams.
const SPLIT_STREAM: u64 = 0x5B17;
/// Stream id for synthetic cube generation.
const SYNTH_STREAM: u64 = 0x5E7D;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct NamedCube {
    pub id: String,
    pub cube: HsiCube,
}

/// Sorted `.hsc` files of a directory.
pub fn hsc_files(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| AppError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "hsc") && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_dir(dir: &Path) -> AppResult<Vec<NamedCube>> {
    let files = hsc_files(dir)?;
    if files.is_empty() {
        return Err(AppError::Usage(format!("{} holds no .hsc files", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            Ok(NamedCube {
                id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                cube: read_hsc(p)?,
            })
        })
        .collect()
}

pub fn synth_set(spec: &SynthSpec, seed: u64) -> AppResult<Vec<NamedCube>> {
    (0..spec.count)
        .map(|i| {
            let cube = synth_cube(spec.kind, spec.bands, spec.height, spec.width, derive_seed(seed, SYNTH_STREAM, i as u64))
                .map_err(|e| AppError::Usage(format!("synthetic spec {spec}: {e}")))?;
            Ok(NamedCube {
                id: format!("{}_{i:03}", spec.kind.as_str()),
                cube,
            })
        })
        .collect()
}

/// The cubes named by `--data` or `--synth`.
pub fn load(settings: &Settings) -> AppResult<Vec<NamedCube>> {
    match (&settings.data, &settings.synth) {
        (Some(_), Some(_)) => Err(AppError::Usage("give either --data or --synth, not both".into())),
        (Some(dir), None) => load_dir(dir),
        (None, Some(spec)) => synth_set(spec, settings.seed),
        (None, None) => Err(AppError::Usage("no input: give --data <dir> or --synth <spec>".into())),
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<NamedCube>,
    pub test: Vec<NamedCube>,
    /// True when the set was too small to hold out anything and the test
    /// side reuses the training cubes.
    pub shared: bool,
}

/// Seeded Fisher–Yates permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (derive_seed(seed, SPLIT_STREAM, i as u64) % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Shuffles by seed, then gives `max(1, round(0.8 n))` cubes to training.
pub fn split(cubes: Vec<NamedCube>, seed: u64) -> Split {
    let n = cubes.len();
    let n_train = ((n as f64 * TRAIN_FRACTION).round() as usize).clamp(1, n.max(1));
    let order = permutation(n, seed);
    let mut slots: Vec<Option<NamedCube>> = cubes.into_iter().map(Some).collect();
    let mut ordered: Vec<NamedCube> = order.iter().map(|&i| slots[i].take().expect("permutation")).collect();
    let test = ordered.split_off(n_train);
    if test.is_empty() {
        return Split {
            test: ordered.clone(),
            train: ordered,
            shared: true,
        };
    }
    Split {
        train: ordered,
        test,
        shared: false,
    }
}

pub fn write_split_csv(path: &Path, split: &Split) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cube_id", "subset"])?;
    for c in &split.train {
        w.write_record([c.id.as_str(), "train"])?;
    }
    if !split.shared {
        for c in &split.test {
            w.write_record([c.id.as_str(), "test"])?;
        }
    }
    w.flush().map_err(|e| AppError::io(path, e))
}
