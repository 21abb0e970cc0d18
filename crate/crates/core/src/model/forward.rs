use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::params::{ParamGrads, ParamStore};
use super::plan::{fuse_name, trailing_block_prefix, unit_block_prefix, FINAL, IFE, UPSAMPLE};
use super::{BlockKind, SsrnetConfig};
use crate::autograd::{Tape, Var};
use crate::conv::ConvGeometry;
use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

#[derive(Debug, Clone, Copy)]
struct BoundLayer {
    weight: Var,
    bias: Var,
    geometry: ConvGeometry,
}

/// Parameters of a [`ParamStore`] placed on a tape as leaves.
#[derive(Debug, Clone, Default)]
pub struct BoundParams {
    layers: BTreeMap<String, BoundLayer>,
}

impl BoundParams {
    fn layer(&self, name: &str) -> Result<BoundLayer> {
        self.layers
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no bound layer `{name}`")))
    }

    /// Weight and bias handles of one layer.
    pub fn vars(&self, name: &str) -> Option<(Var, Var)> {
        self.layers.get(name).map(|l| (l.weight, l.bias))
    }

    /// Binds leaves already on a tape, taking each layer's geometry from
    /// `store`. Used when the caller owns the parameter leaves.
    pub fn from_vars(entries: impl IntoIterator<Item = (String, Var, Var)>, store: &ParamStore) -> Result<Self> {
        let mut layers = BTreeMap::new();
        for (name, weight, bias) in entries {
            let geometry = store.layer(&name)?.geometry;
            layers.insert(name, BoundLayer { weight, bias, geometry });
        }
        Ok(Self { layers })
    }

    /// Reads the accumulated leaf gradients back out, zero where absent.
    pub fn grads(&self, tape: &Tape) -> ParamGrads {
        let layers = self
            .layers
            .iter()
            .map(|(name, l)| {
                let take = |v: Var| {
                    tape.grad(v)
                        .map(<[f64]>::to_vec)
                        .unwrap_or_else(|| alloc::vec![0.0; tape.shape(v).numel()])
                };
                (name.clone(), (take(l.weight), take(l.bias)))
            })
            .collect();
        ParamGrads { layers }
    }
}

/// Registers every layer of `store` on `tape`.
pub fn bind(tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundParams {
    let mut layers = BTreeMap::new();
    for (name, p) in store.iter() {
        let bias_shape = Shape5::new(1, p.bias.len(), 1, 1, 1);
        let bias = Tensor5::from_vec(bias_shape, p.bias.clone()).expect("bias length");
        let (weight, bias) = if trainable {
            (tape.param(p.weight.clone()), tape.param(bias))
        } else {
            (tape.constant(p.weight.clone()), tape.constant(bias))
        };
        layers.insert(
            name.clone(),
            BoundLayer {
                weight,
                bias,
                geometry: p.geometry,
            },
        );
    }
    BoundParams { layers }
}

fn apply(tape: &mut Tape, bound: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let l = bound.layer(name)?;
    if l.geometry.transposed {
        tape.conv3d_transposed(x, l.weight, l.bias, l.geometry)
    } else {
        tape.conv3d(x, l.weight, l.bias, l.geometry)
    }
}

/// One block: `relu(spatial(relu(spectral(x))))`, or a single `k³`
/// convolution for [`BlockKind::Standard`].
pub fn block_forward(tape: &mut Tape, x: Var, bound: &BoundParams, prefix: &str, kind: BlockKind) -> Result<Var> {
    match kind {
        BlockKind::Separable => {
            let spectral = apply(tape, bound, &format!("{prefix}.spectral"), x)?;
            let a = tape.relu(spectral);
            let spatial = apply(tape, bound, &format!("{prefix}.spatial"), a)?;
            Ok(tape.relu(spatial))
        }
        BlockKind::Standard => apply(tape, bound, &format!("{prefix}.conv"), x),
    }
}

/// Residual unit `n` of module `d` (both 1-based): `block(block(x)) + x`.
pub fn unit_forward(tape: &mut Tape, x: Var, bound: &BoundParams, config: &SsrnetConfig, module: usize, unit: usize) -> Result<Var> {
    let b1 = block_forward(tape, x, bound, &unit_block_prefix(module, unit, 1), config.block_kind)?;
    let b2 = block_forward(tape, b1, bound, &unit_block_prefix(module, unit, 2), config.block_kind)?;
    tape.add(b2, x)
}

/// Module `d` (1-based): units, optional local feature fusion, local
/// residual and the trailing block.
pub fn module_forward(tape: &mut Tape, x: Var, bound: &BoundParams, config: &SsrnetConfig, module: usize) -> Result<Var> {
    let mut outputs = Vec::with_capacity(config.units_per_module);
    let mut current = x;
    for unit in 1..=config.units_per_module {
        current = unit_forward(tape, current, bound, config, module, unit)?;
        outputs.push(current);
    }
    let fused = if config.lff_enabled {
        let cat = tape.concat_channels(&outputs)?;
        let conv = apply(tape, bound, &fuse_name(module), cat)?;
        tape.relu(conv)
    } else {
        current
    };
    let residual = tape.add(fused, x)?;
    block_forward(tape, residual, bound, &trailing_block_prefix(module), config.block_kind)
}

/// Full network on a `(n, 1, L, h, w)` input; returns `(n, 1, L, r·h, r·w)`.
pub fn forward_tape(tape: &mut Tape, input: Var, bound: &BoundParams, config: &SsrnetConfig) -> Result<Var> {
    let s = tape.shape(input);
    if s.c != 1 {
        return Err(Error::Dimension {
            op: "ssrnet_forward",
            axis: "channel",
            expected: 1,
            found: s.c,
        });
    }
    if s.l < config.k || s.h < config.k || s.w < config.k {
        return Err(Error::Geometry {
            op: "ssrnet_forward",
            detail: format!(
                "input (L={}, h={}, w={}) is smaller than the {}-tap kernel",
                s.l, s.h, s.w, config.k
            ),
        });
    }
    let f0 = apply(tape, bound, IFE, input)?;
    let mut current = f0;
    for module in 1..=config.d_modules {
        let out = module_forward(tape, current, bound, config, module)?;
        current = if config.grl_enabled { tape.add(out, f0)? } else { out };
    }
    let up = apply(tape, bound, UPSAMPLE, current)?;
    apply(tape, bound, FINAL, up)
}

/// Inference on a prepared `(n, 1, L, h, w)` tensor.
pub fn predict(store: &ParamStore, config: &SsrnetConfig, input: &Tensor5) -> Result<Tensor5> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, store, false);
    let x = tape.constant(input.clone());
    let y = forward_tape(&mut tape, x, &bound, config)?;
    Ok(tape.value(y).clone())
}

/// Super-resolves one cube: `(L, h, w)` to `(L, r·h, r·w)`.
pub fn forward(i_lr: &HsiCube, store: &ParamStore, config: &SsrnetConfig) -> Result<HsiCube> {
    let out = predict(store, config, &i_lr.to_tensor(0.0))?;
    HsiCube::from_tensor(&out, 0.0)
}
