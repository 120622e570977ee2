use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blas::{plan_tiles, BlasError, GemmProblem};
use crate::cluster::{estimate_timing, ClusterConfig};
use crate::memory::copy_cycles;
use crate::runtime::CostModelParams;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("invalid calibration target: {0}")]
    InvalidTarget(&'static str),
    #[error(
        "targets infeasible: cluster compute ({compute} cycles) leaves no fork/join budget \
         (residual {residual:.1} cycles)"
    )]
    Infeasible { compute: u64, residual: f64 },
    #[error(transparent)]
    Blas(#[from] BlasError),
}

/// Measured ratios the cost model is solved against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationTargets {
    /// Host-only time over COPY offload time at the anchor size.
    pub target_speedup: f64,
    /// Share of the COPY offload spent moving shared data.
    pub target_copy_fraction: f64,
    /// How much cheaper mapping a page is than copying it.
    pub target_map_advantage: f64,
    pub anchor_size: usize,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            target_speedup: 2.71,
            target_copy_fraction: 0.47,
            target_map_advantage: 7.5,
            anchor_size: 128,
        }
    }
}

impl CalibrationTargets {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.target_speedup) || !positive(self.target_map_advantage) {
            return Err(CalibrationError::InvalidTarget("ratios must be finite and > 0"));
        }
        if !(self.target_copy_fraction > 0.0 && self.target_copy_fraction < 1.0) {
            return Err(CalibrationError::InvalidTarget("copy fraction must lie in (0, 1)"));
        }
        if self.anchor_size == 0 {
            return Err(CalibrationError::InvalidTarget("anchor size must be >= 1"));
        }
        Ok(())
    }
}

/// Parameters not solved for by calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedParams {
    pub host_flops_per_cycle: f64,
    pub page_size: u64,
    pub clock_hz: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            host_flops_per_cycle: 0.25,
            page_size: 4096,
            clock_hz: 50e6,
        }
    }
}

/// Bytes moved by a COPY offload of the square anchor problem with beta 0:
/// A and B in, C out.
fn anchor_copy_buffers(size: usize) -> [u64; 3] {
    [(size * size * 8) as u64; 3]
}

/// Solves for copy throughput, fork/join cost and per-page mapping cost so
/// that the COPY offload of the anchor problem hits the targets:
///
/// ```text
/// offload   = host_total / target_speedup
/// data_copy = target_copy_fraction * offload
/// fork_join = offload - data_copy - compute
/// map/page  = copy(page) / target_map_advantage
/// ```
pub fn calibrate(
    targets: &CalibrationTargets,
    cfg: &ClusterConfig,
    fixed: &FixedParams,
) -> Result<CostModelParams, CalibrationError> {
    targets.validate()?;
    let anchor = GemmProblem::square(targets.anchor_size);

    let host_total = (anchor.flops() as f64 / fixed.host_flops_per_cycle).ceil();
    let offload_total = host_total / targets.target_speedup;
    let data_copy = targets.target_copy_fraction * offload_total;

    let buffers = anchor_copy_buffers(targets.anchor_size);
    let host_copy_bytes_per_cycle = buffers.iter().sum::<u64>() as f64 / data_copy;
    // What the runtime will actually charge, each buffer rounded up.
    let charged_copy: u64 = buffers.iter().map(|&b| copy_cycles(b, host_copy_bytes_per_cycle)).sum();

    let compute = estimate_timing(&plan_tiles(&anchor, cfg)?, &anchor, cfg).compute_cycles;
    let residual = offload_total - charged_copy as f64 - compute as f64;
    if residual < 1.0 {
        return Err(CalibrationError::Infeasible { compute, residual });
    }

    let page_copy_cycles = fixed.page_size as f64 / host_copy_bytes_per_cycle;
    Ok(CostModelParams {
        host_flops_per_cycle: fixed.host_flops_per_cycle,
        host_copy_bytes_per_cycle,
        fork_join_cycles: residual.round() as u64,
        iommu_map_cycles_per_page: page_copy_cycles / targets.target_map_advantage,
        page_size: fixed.page_size,
        clock_hz: fixed.clock_hz,
    })
}
