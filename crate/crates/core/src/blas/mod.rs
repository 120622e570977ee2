//! Double-precision GEMM surface: operand types, the host reference kernel,
//! the scratchpad tile planner and the offloaded entry point.

mod io;
mod matrix;
mod reference;
mod tiling;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_matrix, read_matrix, save_matrix, write_matrix};
pub use matrix::Matrix;
pub use reference::{gemm_reference, max_relative_error};
pub use tiling::{min_footprint, plan_tiles, spans, tile_footprint, TilePlan, TILE_CANDIDATES};

use crate::runtime::{OffloadOutcome, OffloadPath, OffloadSession, RuntimeError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlasError {
    #[error("GEMM dimensions must be >= 1 (m={m}, n={n}, k={k})")]
    EmptyDimension { m: usize, n: usize, k: usize },
    #[error("operand {operand} is {actual_rows}x{actual_cols}, expected {rows}x{cols}")]
    ShapeMismatch {
        operand: char,
        rows: usize,
        cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    #[error("storage holds {actual} elements, expected {expected}")]
    BadStorage { expected: usize, actual: usize },
    #[error("no tile plan fits in {l1_spm_bytes} bytes of L1")]
    NoFeasiblePlan { l1_spm_bytes: u64 },
}

/// `C = alpha * A * B + beta * C` with A `m x k`, B `k x n`, C `m x n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GemmProblem {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl GemmProblem {
    pub fn new(m: usize, n: usize, k: usize, alpha: f64, beta: f64) -> Result<Self, BlasError> {
        if m == 0 || n == 0 || k == 0 {
            return Err(BlasError::EmptyDimension { m, n, k });
        }
        Ok(Self { m, n, k, alpha, beta })
    }

    /// Square `A * B` (alpha 1, beta 0).
    ///
    /// # Panics
    /// If `size == 0`.
    pub fn square(size: usize) -> Self {
        Self::new(size, size, size, 1.0, 0.0).expect("square GEMM size must be >= 1")
    }

    pub fn flops(&self) -> u64 {
        2 * self.m as u64 * self.n as u64 * self.k as u64
    }
}

pub(crate) fn check_shapes(p: &GemmProblem, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<(), BlasError> {
    for (operand, m, rows, cols) in [('A', a, p.m, p.k), ('B', b, p.k, p.n), ('C', c, p.m, p.n)] {
        if (m.rows(), m.cols()) != (rows, cols) {
            return Err(BlasError::ShapeMismatch {
                operand,
                rows,
                cols,
                actual_rows: m.rows(),
                actual_cols: m.cols(),
            });
        }
    }
    Ok(())
}

/// Output update shared by every kernel. C is not read when beta is zero
/// and the product is skipped when alpha is zero.
#[inline]
pub(crate) fn combine(alpha: f64, acc: f64, beta: f64, c: f64) -> f64 {
    match (alpha == 0.0, beta == 0.0) {
        (true, true) => 0.0,
        (true, false) => beta * c,
        (false, true) => alpha * acc,
        (false, false) => alpha * acc + beta * c,
    }
}

/// Runs the GEMM through `session` on `path`, tiled by [`plan_tiles`].
pub fn gemm_offloaded(
    problem: &GemmProblem,
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    path: OffloadPath,
    session: &mut OffloadSession,
) -> Result<OffloadOutcome, RuntimeError> {
    session.offload_gemm(problem, a, b, c, path)
}
