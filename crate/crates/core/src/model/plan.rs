use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{BlockKind, SsrnetConfig};
use crate::conv::ConvGeometry;

/// Role of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Ife,
    Spectral,
    Spatial,
    Standard,
    PointwiseFuse,
    Upsample,
    Final,
}

/// Parameter-count bucket a layer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Ife,
    Units,
    Fuse,
    TrailingBlocks,
    Upsample,
    Final,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Ife,
        ParamGroup::Units,
        ParamGroup::Fuse,
        ParamGroup::TrailingBlocks,
        ParamGroup::Upsample,
        ParamGroup::Final,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Ife => "ife",
            ParamGroup::Units => "units",
            ParamGroup::Fuse => "fuse",
            ParamGroup::TrailingBlocks => "trailing_blocks",
            ParamGroup::Upsample => "upsample",
            ParamGroup::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub group: ParamGroup,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub geometry: ConvGeometry,
}

impl LayerSpec {
    pub fn weight_count(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel.iter().product::<usize>()
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }
}

/// Every layer of a network, in execution order.
pub type LayerPlan = Vec<LayerSpec>;

fn layer(name: String, kind: LayerKind, group: ParamGroup, c_in: usize, c_out: usize, kernel: [usize; 3]) -> LayerSpec {
    LayerSpec {
        name,
        kind,
        group,
        in_channels: c_in,
        out_channels: c_out,
        kernel,
        geometry: ConvGeometry::preserving(kernel),
    }
}

/// Layers of one block under `prefix`.
pub(crate) fn block_layers(config: &SsrnetConfig, prefix: &str, group: ParamGroup) -> Vec<LayerSpec> {
    let (f, k) = (config.filters, config.k);
    match config.block_kind {
        BlockKind::Separable => alloc::vec![
            layer(format!("{prefix}.spectral"), LayerKind::Spectral, group, f, f, [k, 1, 1]),
            layer(format!("{prefix}.spatial"), LayerKind::Spatial, group, f, f, [1, k, k]),
        ],
        BlockKind::Standard => alloc::vec![layer(format!("{prefix}.conv"), LayerKind::Standard, group, f, f, [k, k, k])],
    }
}

pub(crate) fn unit_block_prefix(module: usize, unit: usize, block: usize) -> String {
    format!("m{module}.u{unit}.b{block}")
}

pub(crate) fn trailing_block_prefix(module: usize) -> String {
    format!("m{module}.block")
}

pub(crate) fn fuse_name(module: usize) -> String {
    format!("m{module}.fuse")
}

pub(crate) const IFE: &str = "ife";
pub(crate) const UPSAMPLE: &str = "up";
pub(crate) const FINAL: &str = "final";

/// Derives the ordered layer list from a configuration.
pub fn layer_plan(config: &SsrnetConfig) -> LayerPlan {
    let (f, k, r) = (config.filters, config.k, config.scale);
    let mut plan = Vec::new();
    plan.push(layer(IFE.into(), LayerKind::Ife, ParamGroup::Ife, 1, f, [k, k, k]));
    for m in 1..=config.d_modules {
        for u in 1..=config.units_per_module {
            for b in 1..=2 {
                plan.extend(block_layers(config, &unit_block_prefix(m, u, b), ParamGroup::Units));
            }
        }
        if config.lff_enabled {
            plan.push(layer(
                fuse_name(m),
                LayerKind::PointwiseFuse,
                ParamGroup::Fuse,
                config.units_per_module * f,
                f,
                [1, 1, 1],
            ));
        }
        plan.extend(block_layers(config, &trailing_block_prefix(m), ParamGroup::TrailingBlocks));
    }
    let (pad, out_pad) = config.upsample_padding();
    plan.push(LayerSpec {
        name: UPSAMPLE.into(),
        kind: LayerKind::Upsample,
        group: ParamGroup::Upsample,
        in_channels: f,
        out_channels: f,
        kernel: [3, 2 * r, 2 * r],
        geometry: ConvGeometry::transposed([1, r, r], [1, pad, pad], [0, out_pad, out_pad]),
    });
    plan.push(layer(FINAL.into(), LayerKind::Final, ParamGroup::Final, f, 1, [k, k, k]));
    plan
}
