//! Simulated heterogeneous offload of double-precision GEMM from a host
//! core to an eight-core accelerator cluster with a 128 KiB scratchpad.
//!
//! - [`memory`]: host/device DRAM, L2 and L1 scratchpads, a first-fit
//!   allocator, bulk copies and IOMMU page mappings.
//! - [`cluster`]: DMA, FPU and barrier timing, and tile-by-tile execution.
//! - [`blas`]: matrices, the reference kernel and the tile planner.
//! - [`runtime`]: device boot and the host-only / copy / zero-copy paths,
//!   each reporting a data-copy / fork-join / compute breakdown.
//! - [`bench`]: cost-model calibration, size sweeps, CSV and JSON output.

pub mod bench;
pub mod blas;
pub mod cluster;
pub mod memory;
pub mod runtime;

pub use blas::{gemm_offloaded, gemm_reference, GemmProblem, Matrix};
pub use cluster::ClusterConfig;
pub use runtime::{CostModelParams, OffloadPath, OffloadSession, TimeBreakdown};
