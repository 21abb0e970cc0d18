use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::plan::layer_plan;
use super::SsrnetConfig;
use crate::conv::Conv3dParams;
use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// Trainable parameters keyed by layer path (`"m2.u1.b2.spatial"` etc.).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    layers: BTreeMap<String, Conv3dParams>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// All-zero store with the layout of `config`.
    pub fn zeros(config: &SsrnetConfig) -> Result<Self> {
        let mut store = Self::new();
        for spec in layer_plan(config) {
            let p = Conv3dParams::zeros(spec.in_channels, spec.out_channels, spec.kernel, spec.geometry)?;
            store.insert(spec.name, p)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, name: String, params: Conv3dParams) -> Result<()> {
        if self.layers.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate layer name `{name}`")));
        }
        self.layers.insert(name, params);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Conv3dParams> {
        self.layers.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Conv3dParams> {
        self.layers.get_mut(name)
    }

    pub fn layer(&self, name: &str) -> Result<&Conv3dParams> {
        self.get(name)
            .ok_or_else(|| Error::Contract(format!("parameter store has no layer `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Conv3dParams)> {
        self.layers.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Conv3dParams)> {
        self.layers.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.layers.values().map(Conv3dParams::len).sum()
    }

    /// Rounds every value to the nearest `f32`, as a checkpoint would.
    pub fn round_to_f32(&mut self) {
        for p in self.layers.values_mut() {
            for v in p.weight.data_mut().iter_mut().chain(p.bias.iter_mut()) {
                *v = f64::from(*v as f32);
            }
        }
    }

    /// Checks that this store has exactly the layers and shapes of `config`.
    pub fn check_layout(&self, config: &SsrnetConfig) -> Result<()> {
        let plan = layer_plan(config);
        if plan.len() != self.layers.len() {
            return Err(Error::Contract(format!(
                "store has {} layers, configuration needs {}",
                self.layers.len(),
                plan.len()
            )));
        }
        for spec in plan {
            let p = self.layer(&spec.name)?;
            if p.in_channels() != spec.in_channels
                || p.out_channels() != spec.out_channels
                || p.kernel() != spec.kernel
                || p.geometry != spec.geometry
            {
                return Err(Error::Contract(format!("layer `{}` does not match its configuration", spec.name)));
            }
        }
        Ok(())
    }
}

/// Random initialization: zero bias, weights `N(0, 2 / fan_in)`, drawn in
/// layer-plan order from one seeded stream.
pub fn build(config: &SsrnetConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in layer_plan(config) {
        let std = libm::sqrt(2.0 / spec.fan_in() as f64);
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(format!("{e}")))?;
        let [kl, kh, kw] = spec.kernel;
        let (d0, d1) = if spec.geometry.transposed {
            (spec.in_channels, spec.out_channels)
        } else {
            (spec.out_channels, spec.in_channels)
        };
        let shape = Shape5::new(d0, d1, kl, kh, kw);
        let weights = (0..shape.numel()).map(|_| normal.sample(&mut rng)).collect();
        let params = Conv3dParams::new(Tensor5::from_vec(shape, weights)?, vec![0.0; spec.out_channels], spec.geometry)?;
        store.insert(spec.name, params)?;
    }
    Ok(store)
}

/// Weight and bias gradients per layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGrads {
    pub layers: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl ParamGrads {
    /// Zero gradients shaped like `store`.
    pub fn zeros_like(store: &ParamStore) -> Self {
        let layers = store
            .iter()
            .map(|(name, p)| (name.clone(), (vec![0.0; p.weight.shape().numel()], vec![0.0; p.bias.len()])))
            .collect();
        Self { layers }
    }

    /// `self += other · factor`.
    pub fn add_scaled(&mut self, other: &ParamGrads, factor: f64) -> Result<()> {
        for (name, (w, b)) in &other.layers {
            let (sw, sb) = self
                .layers
                .get_mut(name)
                .ok_or_else(|| Error::Contract(format!("gradient for unknown layer `{name}`")))?;
            sw.iter_mut().zip(w).for_each(|(a, g)| *a += g * factor);
            sb.iter_mut().zip(b).for_each(|(a, g)| *a += g * factor);
        }
        Ok(())
    }

    /// Name of the first layer with a NaN or infinite entry.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.layers
            .iter()
            .find(|(_, (w, b))| w.iter().chain(b).any(|v| !v.is_finite()))
            .map(|(name, _)| name.as_str())
    }

    /// Largest absolute gradient entry.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .values()
            .flat_map(|(w, b)| w.iter().chain(b))
            .fold(0.0, |m, v| if libm::fabs(*v) > m { libm::fabs(*v) } else { m })
    }
}
