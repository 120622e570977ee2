//! Timing and functional model of the accelerator cluster.
//!
//! Cores are a throughput abstraction: tiles run sequentially on the host
//! thread, while cycles follow a double-buffered pipeline where DMA and
//! FPU work overlap perfectly. A run costs
//! `max(fpu, dma) + startup * transfers + barrier * tile_steps`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blas::{combine, min_footprint, spans, GemmProblem, Matrix, TilePlan};
use crate::memory::{Allocation, Loc, MemoryError, MemorySystem, RegionKind};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid cluster configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("plan needs {footprint} bytes of L1 but only {l1_spm_bytes} are configured")]
    PlanInfeasible { footprint: u64, l1_spm_bytes: u64 },
    #[error("tile plan was built for a different problem")]
    PlanMismatch,
    #[error("operand {0} is not visible to the device")]
    NotDeviceVisible(char),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub num_cores: u32,
    pub l1_spm_bytes: u64,
    /// One fused multiply-add per cycle counts as 2.
    pub flops_per_core_per_cycle: f64,
    pub dma_bytes_per_cycle: f64,
    pub dma_startup_cycles: u64,
    pub barrier_cycles: u64,
    /// Used only to convert cycles to seconds.
    pub clock_hz: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            num_cores: 8,
            l1_spm_bytes: 128 * 1024,
            flops_per_core_per_cycle: 2.0,
            dma_bytes_per_cycle: 8.0,
            dma_startup_cycles: 64,
            barrier_cycles: 32,
            clock_hz: 50e6,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.num_cores == 0 {
            return Err(ClusterError::InvalidConfig("num_cores must be >= 1"));
        }
        if self.l1_spm_bytes < min_footprint() {
            return Err(ClusterError::InvalidConfig("l1_spm_bytes below the smallest tile footprint"));
        }
        let rates = [self.flops_per_core_per_cycle, self.dma_bytes_per_cycle, self.clock_hz];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(ClusterError::InvalidConfig("rates must be strictly positive"));
        }
        Ok(())
    }

    pub fn peak_flops_per_cycle(&self) -> f64 {
        self.num_cores as f64 * self.flops_per_core_per_cycle
    }
}

/// Kernel code loaded into L2 before the first offload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceImage {
    pub size_bytes: u64,
    pub kernel_ids: Vec<String>,
}

impl DeviceImage {
    pub fn new(size_bytes: u64, kernel_ids: Vec<String>) -> Result<Self, ClusterError> {
        if kernel_ids.is_empty() {
            return Err(ClusterError::InvalidConfig("device image needs at least one kernel"));
        }
        if size_bytes == 0 {
            return Err(ClusterError::InvalidConfig("device image must be non-empty"));
        }
        Ok(Self { size_bytes, kernel_ids })
    }

    /// 64 KiB image carrying the GEMM kernel.
    pub fn gemm() -> Self {
        Self {
            size_bytes: 64 * 1024,
            kernel_ids: vec!["dgemm".to_owned()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmaDirection {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmaTransfer {
    pub nbytes: u64,
    pub direction: DmaDirection,
}

fn dma_payload_cycles(nbytes: u64, cfg: &ClusterConfig) -> u64 {
    if nbytes == 0 {
        return 0;
    }
    (nbytes as f64 / cfg.dma_bytes_per_cycle).ceil() as u64
}

/// Startup plus payload cycles of one transfer.
pub fn dma_cost(t: &DmaTransfer, cfg: &ClusterConfig) -> u64 {
    cfg.dma_startup_cycles + dma_payload_cycles(t.nbytes, cfg)
}

pub fn barrier_cost(cfg: &ClusterConfig) -> u64 {
    cfg.barrier_cycles
}

/// FPU cycles for the whole problem spread over every core.
pub fn fpu_cycles(problem: &GemmProblem, cfg: &ClusterConfig) -> u64 {
    (problem.flops() as f64 / cfg.peak_flops_per_cycle()).ceil() as u64
}

/// Cycle accounting of one device GEMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComputeTiming {
    pub fpu_cycles: u64,
    /// Payload cycles summed over transfers, startup excluded.
    pub dma_cycles: u64,
    pub transfers: u64,
    pub tile_steps: u64,
    pub compute_cycles: u64,
}

impl ComputeTiming {
    fn finish(mut self, cfg: &ClusterConfig) -> Self {
        self.compute_cycles = self.fpu_cycles.max(self.dma_cycles)
            + cfg.dma_startup_cycles * self.transfers
            + barrier_cost(cfg) * self.tile_steps;
        self
    }
}

/// Timing of `plan` without moving any data.
pub fn estimate_timing(plan: &TilePlan, problem: &GemmProblem, cfg: &ClusterConfig) -> ComputeTiming {
    let mut t = ComputeTiming {
        fpu_cycles: fpu_cycles(problem, cfg),
        tile_steps: plan.tile_steps,
        transfers: plan.transfers(),
        ..ComputeTiming::default()
    };
    for (_, h) in spans(plan.m, plan.tm) {
        for (_, w) in spans(plan.n, plan.tn) {
            let c_bytes = (h * w * 8) as u64;
            let c_moves = if plan.reads_c { 2 } else { 1 };
            t.dma_cycles += c_moves * dma_payload_cycles(c_bytes, cfg);
            for (_, d) in spans(plan.k, plan.tk) {
                t.dma_cycles += dma_payload_cycles((h * d * 8) as u64, cfg);
                t.dma_cycles += dma_payload_cycles((d * w * 8) as u64, cfg);
            }
        }
    }
    t.finish(cfg)
}

/// A packed (`ld == rows`) column-major matrix somewhere in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceOperand {
    pub loc: Loc,
    pub rows: usize,
    pub cols: usize,
}

impl DeviceOperand {
    pub fn bytes(&self) -> u64 {
        (self.rows * self.cols * 8) as u64
    }

    fn column(&self, i0: usize, j: usize) -> Loc {
        Loc::new(self.loc.region, self.loc.offset + ((j * self.rows + i0) * 8) as u64)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DeviceOperands {
    pub a: DeviceOperand,
    pub b: DeviceOperand,
    pub c: DeviceOperand,
}

#[derive(Debug, Clone)]
pub struct TileExecution {
    pub result: Matrix,
    pub timing: ComputeTiming,
    pub dma_bytes_in: u64,
    pub dma_bytes_out: u64,
}

impl TileExecution {
    pub fn compute_cycles(&self) -> u64 {
        self.timing.compute_cycles
    }
}

/// Moves one `h x w` block between a packed operand and an L1 buffer with
/// leading dimension `ld`, and tallies the transfer.
struct Dma<'a> {
    mem: &'a mut MemorySystem,
    cfg: &'a ClusterConfig,
    bytes_in: u64,
    bytes_out: u64,
    cycles: u64,
    transfers: u64,
}

impl Dma<'_> {
    fn record(&mut self, t: DmaTransfer) {
        match t.direction {
            DmaDirection::In => self.bytes_in += t.nbytes,
            DmaDirection::Out => self.bytes_out += t.nbytes,
        }
        self.cycles += dma_payload_cycles(t.nbytes, self.cfg);
        self.transfers += 1;
    }

    #[allow(clippy::too_many_arguments)]
    fn load(
        &mut self,
        src: &DeviceOperand,
        i0: usize,
        j0: usize,
        h: usize,
        w: usize,
        buf: &mut [f64],
        ld: usize,
    ) -> Result<(), MemoryError> {
        for j in 0..w {
            self.mem.read_f64s(src.column(i0, j0 + j), &mut buf[j * ld..j * ld + h])?;
        }
        self.record(DmaTransfer {
            nbytes: (h * w * 8) as u64,
            direction: DmaDirection::In,
        });
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn store(
        &mut self,
        dst: &DeviceOperand,
        i0: usize,
        j0: usize,
        h: usize,
        w: usize,
        buf: &[f64],
        ld: usize,
    ) -> Result<(), MemoryError> {
        for j in 0..w {
            self.mem.write_f64s(dst.column(i0, j0 + j), &buf[j * ld..j * ld + h])?;
        }
        self.record(DmaTransfer {
            nbytes: (h * w * 8) as u64,
            direction: DmaDirection::Out,
        });
        Ok(())
    }
}

/// Runs `problem` tile by tile on device-visible operands. C is updated in
/// place in memory and also returned as a matrix.
pub fn execute_tiles(
    plan: &TilePlan,
    problem: &GemmProblem,
    operands: &DeviceOperands,
    mem: &mut MemorySystem,
    cfg: &ClusterConfig,
) -> Result<TileExecution, ClusterError> {
    if !plan.matches(problem) {
        return Err(ClusterError::PlanMismatch);
    }
    if plan.l1_footprint_bytes > cfg.l1_spm_bytes {
        return Err(ClusterError::PlanInfeasible {
            footprint: plan.l1_footprint_bytes,
            l1_spm_bytes: cfg.l1_spm_bytes,
        });
    }
    let shapes = [
        ('A', &operands.a, problem.m, problem.k),
        ('B', &operands.b, problem.k, problem.n),
        ('C', &operands.c, problem.m, problem.n),
    ];
    for (name, op, rows, cols) in shapes {
        if (op.rows, op.cols) != (rows, cols) {
            return Err(ClusterError::PlanMismatch);
        }
        if !mem.device_visible(op.loc, op.bytes()) {
            return Err(ClusterError::NotDeviceVisible(name));
        }
    }

    let (tm, tn, tk) = (plan.tm, plan.tn, plan.tk);
    let buffers = if plan.double_buffered { 2 } else { 1 };
    let l1 = reserve_l1(mem, &[
        buffers * tm * tk * 8,
        buffers * tk * tn * 8,
        tm * tn * 8,
    ])?;

    let mut a_tile = vec![0.0; tm * tk];
    let mut b_tile = vec![0.0; tk * tn];
    let mut acc = vec![0.0; tm * tn];
    let mut c_tile = vec![0.0; tm * tn];
    let mut result = Matrix::zeros(problem.m, problem.n);

    let mut dma = Dma {
        mem,
        cfg,
        bytes_in: 0,
        bytes_out: 0,
        cycles: 0,
        transfers: 0,
    };
    let mut steps = 0u64;

    let run = (|| -> Result<(), MemoryError> {
        for (j0, w) in spans(problem.n, tn) {
            for (i0, h) in spans(problem.m, tm) {
                acc.fill(0.0);
                for (l0, d) in spans(problem.k, tk) {
                    dma.load(&operands.a, i0, l0, h, d, &mut a_tile, tm)?;
                    dma.load(&operands.b, l0, j0, d, w, &mut b_tile, tk)?;
                    for i in 0..h {
                        for j in 0..w {
                            let mut sum = acc[i + j * tm];
                            for l in 0..d {
                                sum += a_tile[i + l * tm] * b_tile[l + j * tk];
                            }
                            acc[i + j * tm] = sum;
                        }
                    }
                    steps += 1;
                }
                if plan.reads_c {
                    dma.load(&operands.c, i0, j0, h, w, &mut c_tile, tm)?;
                }
                for j in 0..w {
                    for i in 0..h {
                        let v = combine(problem.alpha, acc[i + j * tm], problem.beta, c_tile[i + j * tm]);
                        c_tile[i + j * tm] = v;
                        result.set(i0 + i, j0 + j, v);
                    }
                }
                dma.store(&operands.c, i0, j0, h, w, &c_tile, tm)?;
            }
        }
        Ok(())
    })();

    let (bytes_in, bytes_out, dma_cycles, transfers) = (dma.bytes_in, dma.bytes_out, dma.cycles, dma.transfers);
    for a in &l1 {
        mem.free(a)?;
    }
    run?;

    let timing = ComputeTiming {
        fpu_cycles: fpu_cycles(problem, cfg),
        dma_cycles,
        transfers,
        tile_steps: steps,
        compute_cycles: 0,
    }
    .finish(cfg);

    Ok(TileExecution {
        result,
        timing,
        dma_bytes_in: bytes_in,
        dma_bytes_out: bytes_out,
    })
}

fn reserve_l1(mem: &mut MemorySystem, sizes: &[usize]) -> Result<Vec<Allocation>, MemoryError> {
    let mut held = Vec::with_capacity(sizes.len());
    for &size in sizes {
        match mem.alloc(RegionKind::L1Spm, size as u64, 8) {
            Ok(a) => held.push(a),
            Err(e) => {
                for a in &held {
                    mem.free(a)?;
                }
                return Err(e);
            }
        }
    }
    Ok(held)
}
