//! The spatial-spectral residual network.
//!
//! ```text
//! LR cube ─ unsqueeze ─ IFE conv ─ F0 ─ module 1 ─(+F0)─ … ─ module D ─(+F0)─ up ─ final ─ squeeze
//! ```
//!
//! Each module runs `units_per_module` residual units (two blocks plus a
//! skip), optionally fuses every unit output with a 1×1×1 convolution, adds
//! the module input back and passes the sum through one trailing block.

mod count;
mod forward;
mod params;
mod plan;

pub use count::{compare_block_kinds, count_params, BlockComparison, ParamCountReport};
pub use forward::{bind, block_forward, forward, forward_tape, module_forward, predict, unit_forward, BoundParams};
pub use params::{build, ParamGrads, ParamStore};
pub use plan::{layer_plan, LayerKind, LayerPlan, LayerSpec, ParamGroup};

use alloc::format;

use crate::error::{Error, Result};

/// Convolution type used inside residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// `k×1×1` spectral then `1×k×k` spatial convolution, each followed by ReLU.
    Separable,
    /// One `k×k×k` convolution without activation.
    Standard,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Separable => "separable",
            BlockKind::Standard => "standard",
        }
    }

    fn code(self) -> u8 {
        match self {
            BlockKind::Separable => 0,
            BlockKind::Standard => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BlockKind::Separable),
            1 => Some(BlockKind::Standard),
            _ => None,
        }
    }
}

impl core::str::FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(BlockKind::Separable),
            "standard" => Ok(BlockKind::Standard),
            other => Err(Error::Config(format!(
                "unknown block kind `{other}` (expected separable or standard)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SsrnetConfig {
    pub d_modules: usize,
    pub units_per_module: usize,
    pub filters: usize,
    pub k: usize,
    pub scale: usize,
    pub lff_enabled: bool,
    pub grl_enabled: bool,
    pub block_kind: BlockKind,
}

impl Default for SsrnetConfig {
    /// Three modules of three units, 64 filters, `k = 3`, ×2.
    fn default() -> Self {
        Self {
            d_modules: 3,
            units_per_module: 3,
            filters: 64,
            k: 3,
            scale: 2,
            lff_enabled: true,
            grl_enabled: true,
            block_kind: BlockKind::Separable,
        }
    }
}

impl SsrnetConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} (config: {self:?})")))
            }
        };
        check(self.d_modules >= 1, "d_modules must be >= 1")?;
        check(self.units_per_module >= 1, "units_per_module must be >= 1")?;
        check(self.filters >= 1, "filters must be >= 1")?;
        check(self.k >= 3 && self.k % 2 == 1, "k must be odd and >= 3")?;
        check(self.scale >= 2, "scale must be >= 2")?;
        Ok(())
    }

    /// Transposed-convolution padding and output padding on the spatial
    /// axes so that `h` maps to exactly `scale · h`.
    pub fn upsample_padding(&self) -> (usize, usize) {
        let r = self.scale;
        let pad = r.div_ceil(2);
        // out = (h − 1)·r − 2·pad + 2r + op = r·h + (r − 2·pad) + op
        let op = 2 * pad - r;
        (pad, op)
    }

    /// Compact flag byte: bit 0 LFF, bit 1 GRL.
    pub fn flags(&self) -> u8 {
        u8::from(self.lff_enabled) | (u8::from(self.grl_enabled) << 1)
    }

    pub fn block_code(&self) -> u8 {
        self.block_kind.code()
    }

    pub fn block_from_code(code: u8) -> Option<BlockKind> {
        BlockKind::from_code(code)
    }
}
