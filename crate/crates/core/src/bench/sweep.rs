use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blas::{GemmProblem, Matrix};
use crate::cluster::ClusterConfig;
use crate::runtime::{breakdown_to_seconds, CostModelParams, OffloadPath, OffloadSession, RuntimeError, TimeBreakdown};

pub const DEFAULT_SEED: u64 = 0x5EED;
pub const DEFAULT_SIZES: [usize; 3] = [32, 64, 128];

/// Square `A` and `B` with entries uniform in [-1, 1], A generated first.
pub fn benchmark_operands(size: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_fn(size, size, |_, _| rng.gen_range(-1.0..=1.0));
    let b = Matrix::from_fn(size, size, |_, _| rng.gen_range(-1.0..=1.0));
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub path: OffloadPath,
    pub data_copy_cycles: u64,
    pub fork_join_cycles: u64,
    pub compute_cycles: u64,
    pub total_cycles: u64,
    pub seconds: f64,
    pub speedup_vs_host: f64,
}

impl SweepRow {
    pub fn breakdown(&self) -> TimeBreakdown {
        TimeBreakdown {
            data_copy_cycles: self.data_copy_cycles,
            fork_join_cycles: self.fork_join_cycles,
            compute_cycles: self.compute_cycles,
            total_cycles: self.total_cycles,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn get(&self, size: usize, path: OffloadPath) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.size == size && r.path == path)
    }
}

/// Runs every `(size, path)` point in its own session, in parallel. Rows
/// come back sorted by size, then path.
pub fn run_sweep(
    sizes: &[usize],
    paths: &[OffloadPath],
    params: &CostModelParams,
    cfg: &ClusterConfig,
    seed: u64,
) -> Result<SweepResult, RuntimeError> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut paths = paths.to_vec();
    paths.sort_unstable();
    paths.dedup();

    let points: Vec<(usize, OffloadPath)> = sizes
        .iter()
        .flat_map(|&s| paths.iter().map(move |&p| (s, p)))
        .collect();

    let rows = points
        .par_iter()
        .map(|&(size, path)| run_point(size, path, params, cfg, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult { rows })
}

fn run_point(
    size: usize,
    path: OffloadPath,
    params: &CostModelParams,
    cfg: &ClusterConfig,
    seed: u64,
) -> Result<SweepRow, RuntimeError> {
    let problem = GemmProblem::new(size, size, size, 1.0, 0.0)?;
    let (a, b) = benchmark_operands(size, seed);
    let c = Matrix::zeros(size, size);

    let mut session = if path.uses_device() {
        OffloadSession::booted(*cfg, *params)?
    } else {
        OffloadSession::new(*cfg, *params)?
    };
    let outcome = session.offload_gemm(&problem, &a, &b, &c, path)?;
    let bd = outcome.breakdown;

    let host_total = params.host_compute_cycles(&problem);
    let speedup_vs_host = if path == OffloadPath::HostOnly {
        1.0
    } else {
        host_total as f64 / bd.total_cycles as f64
    };
    Ok(SweepRow {
        size,
        path,
        data_copy_cycles: bd.data_copy_cycles,
        fork_join_cycles: bd.fork_join_cycles,
        compute_cycles: bd.compute_cycles,
        total_cycles: bd.total_cycles,
        seconds: breakdown_to_seconds(&bd, params).total,
        speedup_vs_host,
    })
}
