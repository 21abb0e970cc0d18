//! In-memory training loop.
//!
//! Every epoch re-samples patches, expands them by augmentation, degrades
//! them with bicubic downsampling, removes the training mean and walks the
//! shuffled samples in minibatches. Randomness flows from one seed through
//! [`derive_seed`], so a run is reproducible bit for bit.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Tape;
use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::loss::loss;
use crate::model::{bind, build, forward_tape, ParamGrads, ParamStore, SsrnetConfig};
use crate::optim::{adam_step, clip_grad_norm, lr_at, OptState, TrainConfig};
use crate::patches::{augment, compute_mean, degrade, extract_patches, AugmentConfig, Sample};

/// How training patches are drawn each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub patch_hw: usize,
    /// Patches cut from every training cube per epoch, before augmentation.
    pub patches_per_image: usize,
    pub augment: AugmentConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            patch_hw: 32,
            patches_per_image: 24,
            augment: AugmentConfig::default(),
        }
    }
}

/// SplitMix64 finalizer over a seed and two stream coordinates.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub samples: usize,
    pub mean_loss: f64,
    /// Augmented variants dropped for being too small.
    pub skipped_variants: usize,
}

/// Forward, loss and backward on one sample. Returns the loss and the
/// parameter gradients.
pub fn sample_gradients(store: &ParamStore, model: &SsrnetConfig, train: &TrainConfig, sample: &Sample) -> Result<(f64, ParamGrads)> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, store, true);
    let x = tape.constant(sample.lr.clone());
    let hr = tape.constant(sample.hr.clone());
    let sr = forward_tape(&mut tape, x, &bound, model)?;
    let l = loss(&mut tape, train.loss_kind, sr, hr)?;
    let value = tape.value(l.var).item().unwrap_or(f64::NAN);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: alloc::format!("{} loss ({value})", train.loss_kind.as_str()),
        });
    }
    tape.backward(l.var)?;
    Ok((value, bound.grads(&tape)))
}

pub struct Trainer {
    pub model: SsrnetConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub store: ParamStore,
    pub state: OptState,
    /// Global mean of the training cubes, removed from every input.
    pub mean: f64,
    pub history: Vec<LossRecord>,
    cubes: Vec<HsiCube>,
}

impl Trainer {
    pub fn new(model: SsrnetConfig, train: TrainConfig, data: DataConfig, cubes: Vec<HsiCube>) -> Result<Self> {
        model.validate()?;
        train.validate()?;
        if data.patch_hw % model.scale != 0 {
            return Err(Error::Config(alloc::format!(
                "patch size {} is not divisible by scale {}",
                data.patch_hw, model.scale
            )));
        }
        let mean = compute_mean(&cubes)?;
        let store = build(&model, train.seed)?;
        let state = OptState::new(&store);
        Ok(Self {
            model,
            train,
            data,
            store,
            state,
            mean,
            history: Vec::new(),
            cubes,
        })
    }

    /// The shuffled, degraded samples of one epoch.
    pub fn epoch_samples(&self, epoch: usize) -> Result<(Vec<Sample>, usize)> {
        let r = self.model.scale;
        let mut samples = Vec::new();
        let mut skipped = 0;
        for (i, cube) in self.cubes.iter().enumerate() {
            let side = self.data.patch_hw.min(cube.height()).min(cube.width());
            let side = side - side % r;
            let seed = derive_seed(self.train.seed, epoch as u64 + 1, i as u64);
            let patches = extract_patches(cube, i, self.data.patches_per_image, side, seed)?;
            let aug = augment(&patches, &self.data.augment, r)?;
            skipped += aug.skipped;
            for p in aug.set.patches() {
                samples.push(degrade(&p.cube, r, self.mean)?);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.train.seed, epoch as u64 + 1, u64::MAX));
        samples.shuffle(&mut rng);
        Ok((samples, skipped))
    }

    /// One optimizer step on `batch`; gradients are averaged over samples.
    pub fn step(&mut self, batch: &[Sample], lr: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("empty minibatch".into()));
        }
        let mut total = ParamGrads::zeros_like(&self.store);
        let mut loss_sum = 0.0;
        let w = 1.0 / batch.len() as f64;
        for s in batch {
            let (l, g) = sample_gradients(&self.store, &self.model, &self.train, s)?;
            loss_sum += l;
            total.add_scaled(&g, w)?;
        }
        if let Some(c) = self.train.clip_norm {
            clip_grad_norm(&mut total, c);
        }
        adam_step(&mut self.store, &total, &mut self.state, lr, &self.train)?;
        Ok(loss_sum * w)
    }

    /// Steps through `samples` in minibatches at the epoch's learning rate.
    pub fn run_samples(&mut self, epoch: usize, samples: &[Sample]) -> Result<f64> {
        let lr = lr_at(epoch, &self.train);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for batch in samples.chunks(self.train.batch_size) {
            let l = self.step(batch, lr)?;
            self.history.push(LossRecord {
                epoch,
                step: self.state.t,
                lr,
                loss: l,
            });
            sum += l;
            batches += 1;
        }
        Ok(if batches > 0 { sum / batches as f64 } else { f64::NAN })
    }

    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochSummary> {
        let (samples, skipped) = self.epoch_samples(epoch)?;
        let mean_loss = self.run_samples(epoch, &samples)?;
        Ok(EpochSummary {
            epoch,
            samples: samples.len(),
            mean_loss,
            skipped_variants: skipped,
        })
    }

    /// Runs every configured epoch, calling `after` once per epoch.
    pub fn fit(&mut self, mut after: impl FnMut(&Trainer, &EpochSummary) -> Result<()>) -> Result<()> {
        for epoch in 0..self.train.epochs {
            let summary = self.run_epoch(epoch)?;
            after(self, &summary)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_cube, SynthKind};

    fn tiny() -> (SsrnetConfig, TrainConfig, DataConfig, Vec<HsiCube>) {
        let model = SsrnetConfig {
            d_modules: 1,
            units_per_module: 1,
            filters: 2,
            ..Default::default()
        };
        let train = TrainConfig {
            epochs: 2,
            batch_size: 3,
            lr0: 1e-3,
            seed: 11,
            ..Default::default()
        };
        let data = DataConfig {
            patch_hw: 8,
            patches_per_image: 2,
            augment: AugmentConfig {
                scales: alloc::vec![1.0],
                ..AugmentConfig::default()
            },
        };
        let cubes = alloc::vec![synth_cube(SynthKind::GaussianBlobs, 4, 12, 12, 1).unwrap()];
        (model, train, data, cubes)
    }

    #[test]
    fn identical_seeds_identical_history() {
        let run = || {
            let (m, t, d, c) = tiny();
            let mut tr = Trainer::new(m, t, d, c).unwrap();
            tr.fit(|_, _| Ok(())).unwrap();
            (tr.history, tr.store)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.len(), 2 * 6);
        assert!(a.iter().zip(&b).all(|(x, y)| x.loss.to_bits() == y.loss.to_bits()));
        assert_eq!(sa, sb);
    }

    #[test]
    fn epoch_sample_count_and_order() {
        let (m, t, d, c) = tiny();
        let tr = Trainer::new(m, t, d, c).unwrap();
        let (s0, skipped) = tr.epoch_samples(0).unwrap();
        assert_eq!(s0.len(), 2 * 8);
        assert_eq!(skipped, 0);
        assert_eq!(s0, tr.epoch_samples(0).unwrap().0);
        assert_ne!(s0, tr.epoch_samples(1).unwrap().0);
        assert_eq!(s0[0].lr.shape().dims(), [1, 1, 4, 4, 4]);
    }

    #[test]
    fn rejects_patch_not_divisible_by_scale() {
        let (m, t, mut d, c) = tiny();
        d.patch_hw = 9;
        assert!(Trainer::new(m, t, d, c).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 1, 0), derive_seed(1, 0, 1));
        assert_eq!(derive_seed(5, 2, 3), derive_seed(5, 2, 3));
    }
}
