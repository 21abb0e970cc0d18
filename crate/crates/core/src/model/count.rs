use alloc::vec::Vec;

use super::plan::{layer_plan, ParamGroup};
use super::{BlockKind, SsrnetConfig};
use crate::error::Result;

/// Scalar parameter totals per layer group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCountReport {
    pub config: SsrnetConfig,
    /// One entry per [`ParamGroup`], in [`ParamGroup::ALL`] order.
    pub groups: Vec<(ParamGroup, usize)>,
    pub total: usize,
}

impl ParamCountReport {
    pub fn group(&self, group: ParamGroup) -> usize {
        self.groups.iter().find(|(g, _)| *g == group).map_or(0, |(_, n)| *n)
    }
}

/// Counts parameters straight from the layer plan.
pub fn count_params(config: &SsrnetConfig) -> Result<ParamCountReport> {
    config.validate()?;
    let plan = layer_plan(config);
    let groups: Vec<(ParamGroup, usize)> = ParamGroup::ALL
        .iter()
        .map(|&g| (g, plan.iter().filter(|l| l.group == g).map(|l| l.param_count()).sum()))
        .collect();
    let total = groups.iter().map(|(_, n)| n).sum();
    Ok(ParamCountReport {
        config: *config,
        groups,
        total,
    })
}

/// Separable and standard variants of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockComparison {
    pub separable: ParamCountReport,
    pub standard: ParamCountReport,
    /// `separable.total / standard.total`.
    pub ratio: f64,
}

pub fn compare_block_kinds(config: &SsrnetConfig) -> Result<BlockComparison> {
    let separable = count_params(&SsrnetConfig {
        block_kind: BlockKind::Separable,
        ..*config
    })?;
    let standard = count_params(&SsrnetConfig {
        block_kind: BlockKind::Standard,
        ..*config
    })?;
    let ratio = separable.total as f64 / standard.total as f64;
    Ok(BlockComparison {
        separable,
        standard,
        ratio,
    })
}
