//! Scratchpad tiling for the device GEMM kernel.
//!
//! Each tile step holds one `tm x tk` block of A and one `tk x tn` block of
//! B (twice, when double buffered) next to a resident `tm x tn` C
//! accumulator. Candidates are square in the output (`tm == tn`).

use serde::{Deserialize, Serialize};

use super::{BlasError, GemmProblem};
use crate::cluster::ClusterConfig;

pub const TILE_CANDIDATES: [usize; 5] = [8, 16, 32, 64, 128];

const ELEM: u64 = 8;

/// L1 bytes needed by one tile configuration.
pub fn tile_footprint(tm: usize, tn: usize, tk: usize, double_buffered: bool) -> u64 {
    let buffers = if double_buffered { 2 } else { 1 };
    let (tm, tn, tk) = (tm as u64, tn as u64, tk as u64);
    buffers * (tm * tk + tk * tn) * ELEM + tm * tn * ELEM
}

/// Smallest footprint any candidate plan can have.
pub fn min_footprint() -> u64 {
    let t = TILE_CANDIDATES[0];
    tile_footprint(t, t, t, true)
}

/// `(start, len)` of each tile along a dimension, the last one clamped.
pub fn spans(len: usize, tile: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).step_by(tile).map(move |s| (s, tile.min(len - s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub tm: usize,
    pub tn: usize,
    pub tk: usize,
    pub double_buffered: bool,
    /// Whether C is streamed in (beta != 0).
    pub reads_c: bool,
    pub l1_footprint_bytes: u64,
    pub tile_steps: u64,
    /// Exact DMA bytes into L1, edge tiles at their clamped size.
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl TilePlan {
    pub fn new(problem: &GemmProblem, tm: usize, tn: usize, tk: usize, double_buffered: bool) -> Self {
        let (m, n, k) = (problem.m, problem.n, problem.k);
        let reads_c = problem.beta != 0.0;
        let (mt, nt, kt) = (m.div_ceil(tm) as u64, n.div_ceil(tn) as u64, k.div_ceil(tk) as u64);
        let (m64, n64, k64) = (m as u64, n as u64, k as u64);

        // Summing clamped tile areas over all (i, j, l) steps collapses to
        // full-matrix areas times the tile count of the missing dimension.
        let c_bytes = m64 * n64 * ELEM;
        let bytes_in = (m64 * k64 * nt + k64 * n64 * mt) * ELEM + if reads_c { c_bytes } else { 0 };

        Self {
            m,
            n,
            k,
            tm,
            tn,
            tk,
            double_buffered,
            reads_c,
            l1_footprint_bytes: tile_footprint(tm, tn, tk, double_buffered),
            tile_steps: mt * nt * kt,
            bytes_in,
            bytes_out: c_bytes,
        }
    }

    pub fn row_tiles(&self) -> usize {
        self.m.div_ceil(self.tm)
    }

    pub fn col_tiles(&self) -> usize {
        self.n.div_ceil(self.tn)
    }

    pub fn k_tiles(&self) -> usize {
        self.k.div_ceil(self.tk)
    }

    pub fn output_tiles(&self) -> u64 {
        (self.row_tiles() * self.col_tiles()) as u64
    }

    /// DMA transfers issued: A and B blocks per step, C out per output
    /// tile, and C in per output tile when C is read.
    pub fn transfers(&self) -> u64 {
        let c_moves = if self.reads_c { 2 } else { 1 };
        2 * self.tile_steps + c_moves * self.output_tiles()
    }

    /// Flops per byte of A/B tile traffic.
    pub fn arithmetic_intensity(&self) -> f64 {
        intensity(self.tm, self.tn, self.tk)
    }

    /// Input traffic if every edge tile were moved at full size.
    pub fn bytes_in_bound(&self) -> u64 {
        let (tm, tn, tk) = (self.tm as u64, self.tn as u64, self.tk as u64);
        let c = if self.reads_c { (self.m * self.n) as u64 * ELEM } else { 0 };
        self.tile_steps * (tm * tk + tk * tn) * ELEM + c
    }

    pub fn matches(&self, problem: &GemmProblem) -> bool {
        (self.m, self.n, self.k, self.reads_c) == (problem.m, problem.n, problem.k, problem.beta != 0.0)
    }
}

fn intensity(tm: usize, tn: usize, tk: usize) -> f64 {
    let (tm, tn, tk) = (tm as f64, tn as f64, tk as f64);
    2.0 * tm * tn * tk / ((tm * tk + tk * tn) * ELEM as f64)
}

/// Picks the double-buffered candidate with the highest arithmetic
/// intensity that fits in L1; ties go to the larger output tile, then the
/// larger `tk`.
pub fn plan_tiles(problem: &GemmProblem, cfg: &ClusterConfig) -> Result<TilePlan, BlasError> {
    let mut best: Option<(usize, usize)> = None;
    for &t in &TILE_CANDIDATES {
        for &tk in &TILE_CANDIDATES {
            if tile_footprint(t, t, tk, true) > cfg.l1_spm_bytes {
                continue;
            }
            let better = match best {
                None => true,
                Some((bt, btk)) => {
                    let (cur, old) = (intensity(t, t, tk), intensity(bt, bt, btk));
                    cur > old || (cur == old && (t * t, tk) > (bt * bt, btk))
                }
            };
            if better {
                best = Some((t, tk));
            }
        }
    }
    let (t, tk) = best.ok_or(BlasError::NoFeasiblePlan {
        l1_spm_bytes: cfg.l1_spm_bytes,
    })?;
    Ok(TilePlan::new(problem, t, t, tk, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_with_l1(l1: u64) -> ClusterConfig {
        ClusterConfig {
            l1_spm_bytes: l1,
            ..ClusterConfig::default()
        }
    }

    /// Enumerates the square candidate grid independently of `plan_tiles`.
    fn brute_force(l1: u64) -> Option<(usize, usize, usize)> {
        let mut feasible = Vec::new();
        for t in [8usize, 16, 32, 64, 128] {
            for tk in [8usize, 16, 32, 64, 128] {
                let fp = 2 * (t * tk + tk * t) * 8 + t * t * 8;
                if fp as u64 <= l1 {
                    // intensity 2·t·t·tk / (2·t·tk·8) = t/8; rank by (t, tk)
                    feasible.push((t, tk));
                }
            }
        }
        feasible.into_iter().max().map(|(t, tk)| (t, t, tk))
    }

    #[test]
    fn default_l1_plan() {
        let p = GemmProblem::square(128);
        let plan = plan_tiles(&p, &ClusterConfig::default()).unwrap();
        assert_eq!((plan.tm, plan.tn, plan.tk), (64, 64, 32));
        assert_eq!(plan.l1_footprint_bytes, 98_304);
        assert_eq!(brute_force(131072), Some((64, 64, 32)));
    }

    #[test]
    fn tiny_l1_plan() {
        let plan = plan_tiles(&GemmProblem::square(128), &cfg_with_l1(4096)).unwrap();
        assert_eq!((plan.tm, plan.tn, plan.tk), (8, 8, 8));
        assert_eq!(plan.l1_footprint_bytes, 2560);
    }

    #[test]
    fn footprint_formula() {
        assert_eq!(tile_footprint(32, 32, 32, true), 40_960);
        assert_eq!(tile_footprint(64, 64, 32, true), 98_304);
        assert_eq!(tile_footprint(8, 8, 8, false), 1536);
        assert_eq!(min_footprint(), 2560);
    }

    #[test]
    fn infeasible_l1() {
        assert_eq!(
            plan_tiles(&GemmProblem::square(8), &cfg_with_l1(2048)).unwrap_err(),
            BlasError::NoFeasiblePlan { l1_spm_bytes: 2048 }
        );
    }

    #[test]
    fn matches_brute_force_over_l1_sizes() {
        for l1 in (2048..=(1u64 << 20)).step_by(1024) {
            let got = plan_tiles(&GemmProblem::square(16), &cfg_with_l1(l1))
                .ok()
                .map(|p| (p.tm, p.tn, p.tk));
            assert_eq!(got, brute_force(l1), "l1 = {l1}");
        }
    }

    #[test]
    fn traffic_counters_divisible_and_edge() {
        // 128^3 with 64x64x32 tiles: 2·2·4 steps of (64·32 + 32·64)·8 bytes.
        let plan = TilePlan::new(&GemmProblem::square(128), 64, 64, 32, true);
        assert_eq!(plan.tile_steps, 16);
        assert_eq!(plan.bytes_in, 16 * 32768);
        assert_eq!(plan.bytes_in, plan.bytes_in_bound());
        assert_eq!(plan.bytes_out, 131_072);
        assert_eq!(plan.transfers(), 2 * 16 + 4);

        // 100^3: spans 64+36 along m and n, 32·3+4 along k.
        let plan = TilePlan::new(&GemmProblem::square(100), 64, 64, 32, true);
        assert_eq!(plan.tile_steps, 2 * 2 * 4);
        let mut exact = 0;
        for (_, h) in spans(100, 64) {
            for (_, w) in spans(100, 64) {
                for (_, d) in spans(100, 32) {
                    exact += (h * d + d * w) * 8;
                }
            }
        }
        assert_eq!(plan.bytes_in, exact as u64);
        assert!(plan.bytes_in < plan.bytes_in_bound());

        let with_c = TilePlan::new(&GemmProblem::new(100, 100, 100, 1.0, 1.0).unwrap(), 64, 64, 32, true);
        assert_eq!(with_c.bytes_in, exact as u64 + 100 * 100 * 8);
        assert_eq!(with_c.transfers(), 2 * 16 + 2 * 4);
    }

    #[test]
    fn spans_clamp_last_tile() {
        assert_eq!(spans(100, 64).collect::<Vec<_>>(), vec![(0, 64), (64, 36)]);
        assert_eq!(spans(1, 8).collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(spans(16, 8).count(), 2);
    }
}
