//! Host-side offload runtime: device boot, data-movement path selection,
//! fork/join accounting and the per-offload time breakdown.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blas::{check_shapes, gemm_reference, plan_tiles, BlasError, GemmProblem, Matrix};
use crate::cluster::{
    execute_tiles, ClusterConfig, ClusterError, ComputeTiming, DeviceImage, DeviceOperand, DeviceOperands,
};
use crate::memory::{Allocation, MemoryError, MemoryLayout, MemorySystem, PageMapping, RegionKind, DEFAULT_ALIGN};

#[derive(Debug, Error, PartialEq)]
pub enum RuntimeError {
    #[error("device has not been booted")]
    NotBooted,
    #[error("device is already booted")]
    AlreadyBooted,
    #[error("device image of {size} bytes does not fit in L2 ({free} bytes free)")]
    ImageTooLarge { size: u64, free: u64 },
    #[error("invalid cost model parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Blas(#[from] BlasError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OffloadPath {
    #[serde(rename = "host")]
    HostOnly,
    #[serde(rename = "copy")]
    Copy,
    #[serde(rename = "zerocopy")]
    ZeroCopy,
}

impl OffloadPath {
    pub const ALL: [OffloadPath; 3] = [OffloadPath::HostOnly, OffloadPath::Copy, OffloadPath::ZeroCopy];

    pub fn name(self) -> &'static str {
        match self {
            OffloadPath::HostOnly => "host",
            OffloadPath::Copy => "copy",
            OffloadPath::ZeroCopy => "zerocopy",
        }
    }

    pub fn uses_device(self) -> bool {
        self != OffloadPath::HostOnly
    }
}

impl fmt::Display for OffloadPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown offload path {0:?} (expected host, copy or zerocopy)")]
pub struct UnknownPath(pub String);

impl FromStr for OffloadPath {
    type Err = UnknownPath;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OffloadPath::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPath(s.to_owned()))
    }
}

/// Host-side cost constants. `Default` is the calibration against the
/// reference targets on the default cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelParams {
    pub host_flops_per_cycle: f64,
    pub host_copy_bytes_per_cycle: f64,
    pub fork_join_cycles: u64,
    pub iommu_map_cycles_per_page: f64,
    pub page_size: u64,
    pub clock_hz: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        crate::bench::calibrate(
            &crate::bench::CalibrationTargets::default(),
            &ClusterConfig::default(),
            &crate::bench::FixedParams::default(),
        )
        .expect("default calibration targets are feasible on the default cluster")
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        let rates = [
            self.host_flops_per_cycle,
            self.host_copy_bytes_per_cycle,
            self.iommu_map_cycles_per_page,
            self.clock_hz,
        ];
        if rates.iter().any(|r| !(*r > 0.0)) || self.fork_join_cycles == 0 {
            return Err(RuntimeError::InvalidParams("all costs and rates must be strictly positive"));
        }
        if !self.page_size.is_power_of_two() {
            return Err(RuntimeError::InvalidParams("page_size must be a power of two"));
        }
        Ok(())
    }

    /// Host-only GEMM cycles.
    pub fn host_compute_cycles(&self, problem: &GemmProblem) -> u64 {
        (problem.flops() as f64 / self.host_flops_per_cycle).ceil() as u64
    }
}

/// Cycles of one GEMM call split into the three reported regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimeBreakdown {
    pub data_copy_cycles: u64,
    pub fork_join_cycles: u64,
    pub compute_cycles: u64,
    pub total_cycles: u64,
}

impl TimeBreakdown {
    pub fn new(data_copy_cycles: u64, fork_join_cycles: u64, compute_cycles: u64) -> Self {
        Self {
            data_copy_cycles,
            fork_join_cycles,
            compute_cycles,
            total_cycles: data_copy_cycles + fork_join_cycles + compute_cycles,
        }
    }

    pub fn copy_fraction(&self) -> f64 {
        self.data_copy_cycles as f64 / self.total_cycles as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSeconds {
    pub data_copy: f64,
    pub fork_join: f64,
    pub compute: f64,
    pub total: f64,
}

pub fn breakdown_to_seconds(b: &TimeBreakdown, params: &CostModelParams) -> RegionSeconds {
    let s = |cycles: u64| cycles as f64 / params.clock_hz;
    RegionSeconds {
        data_copy: s(b.data_copy_cycles),
        fork_join: s(b.fork_join_cycles),
        compute: s(b.compute_cycles),
        total: s(b.total_cycles),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceState {
    pub booted: bool,
    pub image: Option<DeviceImage>,
    pub l2_image_allocation: Option<Allocation>,
}

/// What the device did during an offload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceStats {
    pub timing: ComputeTiming,
    pub dma_bytes_in: u64,
    pub dma_bytes_out: u64,
    /// Bytes the host moved (COPY) or mapped (ZERO_COPY).
    pub shared_bytes: u64,
    pub pages_mapped: u64,
}

#[derive(Debug, Clone)]
pub struct OffloadOutcome {
    pub result: Matrix,
    pub breakdown: TimeBreakdown,
    pub requested_path: OffloadPath,
    pub executed_path: OffloadPath,
    /// Device memory ran out and the call was served on the host.
    pub fell_back: bool,
    pub device: Option<DeviceStats>,
}

/// One simulated platform: memory, cluster and device state. Sessions are
/// independent; concurrent offloads need one session each.
#[derive(Debug, Clone)]
pub struct OffloadSession {
    mem: MemorySystem,
    cfg: ClusterConfig,
    params: CostModelParams,
    device: DeviceState,
}

/// A host buffer plus where the device sees it.
struct Staged {
    host: Allocation,
    device: Option<Allocation>,
}

impl OffloadSession {
    pub fn new(cfg: ClusterConfig, params: CostModelParams) -> Result<Self, RuntimeError> {
        let layout = MemoryLayout {
            l1_spm_bytes: cfg.l1_spm_bytes,
            ..MemoryLayout::default()
        };
        Self::with_layout(cfg, params, &layout)
    }

    /// `layout.l1_spm_bytes` is overridden by the cluster's L1 size.
    pub fn with_layout(cfg: ClusterConfig, params: CostModelParams, layout: &MemoryLayout) -> Result<Self, RuntimeError> {
        cfg.validate()?;
        params.validate()?;
        let layout = MemoryLayout {
            l1_spm_bytes: cfg.l1_spm_bytes,
            ..*layout
        };
        Ok(Self {
            mem: MemorySystem::with_layout(&layout)?,
            cfg,
            params,
            device: DeviceState::default(),
        })
    }

    /// New session with the default GEMM image already booted.
    pub fn booted(cfg: ClusterConfig, params: CostModelParams) -> Result<Self, RuntimeError> {
        let mut s = Self::new(cfg, params)?;
        s.boot_device(DeviceImage::gemm())?;
        Ok(s)
    }

    pub fn memory(&self) -> &MemorySystem {
        &self.mem
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn params(&self) -> &CostModelParams {
        &self.params
    }

    pub fn device(&self) -> &DeviceState {
        &self.device
    }

    /// Loads `image` into L2. A device boots once per session.
    pub fn boot_device(&mut self, image: DeviceImage) -> Result<&DeviceState, RuntimeError> {
        if self.device.booted {
            return Err(RuntimeError::AlreadyBooted);
        }
        let alloc = match self.mem.alloc(RegionKind::L2Spm, image.size_bytes, DEFAULT_ALIGN) {
            Ok(a) => a,
            Err(MemoryError::OutOfMemory { .. }) => {
                return Err(RuntimeError::ImageTooLarge {
                    size: image.size_bytes,
                    free: self.mem.region(RegionKind::L2Spm)?.allocator().largest_gap(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        self.device = DeviceState {
            booted: true,
            image: Some(image),
            l2_image_allocation: Some(alloc),
        };
        Ok(&self.device)
    }

    pub fn offload_gemm(
        &mut self,
        problem: &GemmProblem,
        a: &Matrix,
        b: &Matrix,
        c: &Matrix,
        path: OffloadPath,
    ) -> Result<OffloadOutcome, RuntimeError> {
        check_shapes(problem, a, b, c)?;
        if path.uses_device() && !self.device.booted {
            return Err(RuntimeError::NotBooted);
        }
        match path {
            OffloadPath::HostOnly => self.run_on_host(problem, a, b, c, path, false),
            OffloadPath::Copy | OffloadPath::ZeroCopy => self.run_on_device(problem, a, b, c, path),
        }
    }

    fn run_on_host(
        &self,
        problem: &GemmProblem,
        a: &Matrix,
        b: &Matrix,
        c: &Matrix,
        requested_path: OffloadPath,
        fell_back: bool,
    ) -> Result<OffloadOutcome, RuntimeError> {
        Ok(OffloadOutcome {
            result: gemm_reference(problem, a, b, c)?,
            breakdown: TimeBreakdown::new(0, 0, self.params.host_compute_cycles(problem)),
            requested_path,
            executed_path: OffloadPath::HostOnly,
            fell_back,
            device: None,
        })
    }

    fn run_on_device(
        &mut self,
        problem: &GemmProblem,
        a: &Matrix,
        b: &Matrix,
        c: &Matrix,
        path: OffloadPath,
    ) -> Result<OffloadOutcome, RuntimeError> {
        let plan = plan_tiles(problem, &self.cfg)?;

        // The user's buffers live in host DRAM, page aligned.
        let mut staged: Vec<Staged> = Vec::with_capacity(3);
        for m in [a, b, c] {
            match self.mem.alloc(RegionKind::HostDram, m.packed_bytes(), self.params.page_size) {
                Ok(host) => {
                    self.mem.write_f64s(host.loc(), &m.to_packed())?;
                    staged.push(Staged { host, device: None });
                }
                Err(e) => {
                    self.release(&staged)?;
                    return Err(e.into());
                }
            }
        }

        let outcome = match path {
            OffloadPath::Copy => self.copy_offload(problem, &plan, &mut staged, c),
            _ => self.zero_copy_offload(problem, &plan, &staged, c),
        };
        self.release(&staged)?;

        match outcome? {
            Some(outcome) => Ok(outcome),
            None => self.run_on_host(problem, a, b, c, path, true),
        }
    }

    /// Returns `None` when device DRAM cannot hold the operands.
    fn copy_offload(
        &mut self,
        problem: &GemmProblem,
        plan: &crate::blas::TilePlan,
        staged: &mut [Staged],
        c: &Matrix,
    ) -> Result<Option<OffloadOutcome>, RuntimeError> {
        for s in staged.iter_mut() {
            match self.mem.alloc(RegionKind::DevDram, s.host.size, DEFAULT_ALIGN) {
                Ok(d) => s.device = Some(d),
                Err(MemoryError::OutOfMemory { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
        let dev = |i: usize| staged[i].device.expect("allocated above");
        let host = |i: usize| staged[i].host;

        let mut copy_cycles = 0;
        let mut shared_bytes = 0;
        let copy_in: &[usize] = if problem.beta != 0.0 { &[0, 1, 2] } else { &[0, 1] };
        for &i in copy_in {
            copy_cycles += self.mem.bulk_copy(host(i).loc(), dev(i).loc(), host(i).size, &self.params)?;
            shared_bytes += host(i).size;
        }

        let operands = DeviceOperands {
            a: operand(dev(0), problem.m, problem.k),
            b: operand(dev(1), problem.k, problem.n),
            c: operand(dev(2), problem.m, problem.n),
        };
        let exec = execute_tiles(plan, problem, &operands, &mut self.mem, &self.cfg)?;

        copy_cycles += self.mem.bulk_copy(dev(2).loc(), host(2).loc(), host(2).size, &self.params)?;
        shared_bytes += host(2).size;

        let result = self.read_result(host(2), c)?;
        Ok(Some(OffloadOutcome {
            result,
            breakdown: TimeBreakdown::new(copy_cycles, self.params.fork_join_cycles, exec.compute_cycles()),
            requested_path: OffloadPath::Copy,
            executed_path: OffloadPath::Copy,
            fell_back: false,
            device: Some(DeviceStats {
                timing: exec.timing,
                dma_bytes_in: exec.dma_bytes_in,
                dma_bytes_out: exec.dma_bytes_out,
                shared_bytes,
                pages_mapped: 0,
            }),
        }))
    }

    fn zero_copy_offload(
        &mut self,
        problem: &GemmProblem,
        plan: &crate::blas::TilePlan,
        staged: &[Staged],
        c: &Matrix,
    ) -> Result<Option<OffloadOutcome>, RuntimeError> {
        let mut mappings: Vec<PageMapping> = Vec::with_capacity(3);
        let mut run = || -> Result<_, RuntimeError> {
            for s in staged {
                mappings.push(self.mem.map_pages(s.host.loc(), s.host.size, &self.params)?);
            }
            let operands = DeviceOperands {
                a: operand(staged[0].host, problem.m, problem.k),
                b: operand(staged[1].host, problem.k, problem.n),
                c: operand(staged[2].host, problem.m, problem.n),
            };
            Ok(execute_tiles(plan, problem, &operands, &mut self.mem, &self.cfg)?)
        };
        let exec = run();
        for m in &mappings {
            self.mem.unmap(m)?;
        }
        let exec = exec?;

        let map_cycles = mappings.iter().map(|m| m.cost_cycles).sum();
        let result = self.read_result(staged[2].host, c)?;
        Ok(Some(OffloadOutcome {
            result,
            breakdown: TimeBreakdown::new(map_cycles, self.params.fork_join_cycles, exec.compute_cycles()),
            requested_path: OffloadPath::ZeroCopy,
            executed_path: OffloadPath::ZeroCopy,
            fell_back: false,
            device: Some(DeviceStats {
                timing: exec.timing,
                dma_bytes_in: exec.dma_bytes_in,
                dma_bytes_out: exec.dma_bytes_out,
                shared_bytes: mappings.iter().map(|m| m.mapped_bytes).sum(),
                pages_mapped: mappings.iter().map(|m| m.page_count).sum(),
            }),
        }))
    }

    fn read_result(&self, host_c: Allocation, c: &Matrix) -> Result<Matrix, RuntimeError> {
        let mut packed = vec![0.0; c.rows() * c.cols()];
        self.mem.read_f64s(host_c.loc(), &mut packed)?;
        let mut result = c.clone();
        result.fill_from_packed(&packed);
        Ok(result)
    }

    fn release(&mut self, staged: &[Staged]) -> Result<(), RuntimeError> {
        for s in staged {
            if let Some(d) = &s.device {
                self.mem.free(d)?;
            }
            self.mem.free(&s.host)?;
        }
        Ok(())
    }
}

fn operand(a: Allocation, rows: usize, cols: usize) -> DeviceOperand {
    DeviceOperand {
        loc: a.loc(),
        rows,
        cols,
    }
}
