//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use hetblas_core::memory::{FirstFitAllocator, MemoryError};
use hetblas_core::{GemmProblem, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Allocator reference: a plain list of live intervals. Placement walks
/// aligned candidate offsets upward, jumping past whichever live interval
/// blocks the current candidate.
#[derive(Debug, Default)]
pub struct IntervalOracle {
    capacity: u64,
    live: Vec<(u64, u64)>,
}

impl IntervalOracle {
    pub fn new(capacity: u64) -> Self {
        Self {
            capacity,
            live: Vec::new(),
        }
    }

    pub fn alloc(&mut self, size: u64, align: u64) -> Option<u64> {
        let mut candidate = 0u64;
        loop {
            if candidate + size > self.capacity {
                return None;
            }
            let blocker = self
                .live
                .iter()
                .filter(|&&(s, l)| s < candidate + size && candidate < s + l)
                .map(|&(s, l)| s + l)
                .max();
            match blocker {
                Some(end) => candidate = end.div_ceil(align) * align,
                None => {
                    self.live.push((candidate, size));
                    return Some(candidate);
                }
            }
        }
    }

    pub fn free(&mut self, offset: u64, size: u64) -> bool {
        match self.live.iter().position(|&b| b == (offset, size)) {
            Some(i) => {
                self.live.swap_remove(i);
                true
            }
            None => false,
        }
    }

    pub fn live_sorted(&self) -> Vec<(u64, u64)> {
        let mut v = self.live.clone();
        v.sort_unstable();
        v
    }

    pub fn random_live(&self, rng: &mut impl Rng) -> Option<(u64, u64)> {
        (!self.live.is_empty()).then(|| self.live[rng.gen_range(0..self.live.len())])
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TraceStats {
    pub allocs: usize,
    pub alloc_failures: usize,
    pub frees: usize,
    pub bad_frees: usize,
}

/// Replays a random alloc/free trace on both allocators and returns the
/// first divergence, if any.
pub fn compare_trace(seed: u64, steps: usize, capacity: u64) -> Result<TraceStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut real = FirstFitAllocator::new(capacity);
    let mut oracle = IntervalOracle::new(capacity);
    let mut stats = TraceStats::default();

    for step in 0..steps {
        let roll: f64 = rng.gen();
        if roll < 0.55 {
            let size = if rng.gen_bool(0.8) {
                rng.gen_range(1..=2048)
            } else {
                rng.gen_range(1..=capacity / 4)
            };
            let align = 1u64 << rng.gen_range(0..=9);
            let got = real.alloc(size, align);
            let want = oracle.alloc(size, align);
            stats.allocs += 1;
            match (got, want) {
                (Ok(a), Some(b)) if a == b => {}
                (Err(MemoryError::OutOfMemory { .. }), None) => stats.alloc_failures += 1,
                (got, want) => {
                    return Err(format!("step {step}: alloc({size}, {align}) gave {got:?}, oracle {want:?}"))
                }
            }
        } else if roll < 0.97 {
            if let Some((o, s)) = oracle.random_live(&mut rng) {
                stats.frees += 1;
                oracle.free(o, s);
                real.free(o, s).map_err(|e| format!("step {step}: free({o}, {s}) failed: {e}"))?;
            }
        } else {
            // never-allocated or already-freed handle
            let o = rng.gen_range(0..capacity);
            let s = rng.gen_range(1..=64);
            let ok_real = real.free(o, s).is_ok();
            let ok_oracle = oracle.free(o, s);
            if ok_real != ok_oracle {
                return Err(format!("step {step}: free({o}, {s}) real {ok_real}, oracle {ok_oracle}"));
            }
            if !ok_real {
                stats.bad_frees += 1;
            }
        }

        let live: Vec<_> = real.live_blocks().collect();
        if live != oracle.live_sorted() {
            return Err(format!("step {step}: occupancy diverged"));
        }
    }
    Ok(stats)
}

/// Triple-loop GEMM written directly against the storage, independent of
/// the crate's kernels.
pub fn naive_gemm(p: &GemmProblem, a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let mut out = c.clone();
    for i in 0..p.m {
        for j in 0..p.n {
            let mut dot = 0.0;
            for l in 0..p.k {
                dot += a.storage()[i + l * a.ld()] * b.storage()[l + j * b.ld()];
            }
            let prior = c.storage()[i + j * c.ld()];
            let v = if p.beta == 0.0 { p.alpha * dot } else { p.alpha * dot + p.beta * prior };
            out.set(i, j, if p.alpha == 0.0 { if p.beta == 0.0 { 0.0 } else { p.beta * prior } } else { v });
        }
    }
    out
}

/// Per-element relative error, computed element by element.
pub fn within_rel(actual: &Matrix, expected: &Matrix, tol: f64) -> bool {
    (0..expected.cols()).all(|j| {
        (0..expected.rows()).all(|i| {
            let (x, y) = (actual.get(i, j), expected.get(i, j));
            x == y || (x - y).abs() <= tol * y.abs()
        })
    })
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}

/// A random GEMM problem with dimensions in `1..=max_dim`; beta is zero a
/// third of the time.
pub fn random_problem(rng: &mut impl Rng, max_dim: usize) -> (GemmProblem, Matrix, Matrix, Matrix) {
    let (m, n, k) = (
        rng.gen_range(1..=max_dim),
        rng.gen_range(1..=max_dim),
        rng.gen_range(1..=max_dim),
    );
    let alpha = rng.gen_range(-2.0..=2.0);
    let beta = if rng.gen_bool(1.0 / 3.0) { 0.0 } else { rng.gen_range(-2.0..=2.0) };
    let p = GemmProblem::new(m, n, k, alpha, beta).unwrap();
    let a = random_matrix(rng, m, k);
    let b = random_matrix(rng, k, n);
    let c = random_matrix(rng, m, n);
    (p, a, b, c)
}
