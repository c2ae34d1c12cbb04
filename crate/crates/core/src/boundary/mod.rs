//! Block-partitioned boundary operators and the per-step Robin data.

mod direct;
mod io;
mod partition;

use std::ops::Range;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;

use crate::compression::{compress_multi, CompressedBlock, CompressionConfig, EntryOracle, Mat, StorageReport};
use crate::error::{contract, Error, Result};
use crate::kernel::{EntryEngine, QuadConfig, TimeGrid};
use crate::vector_potential::VectorPotential;

pub use direct::DirectTbc;
pub use io::{load_operator, read_operator, save_operator, write_operator};
pub use partition::{build_partition, build_partition_padded, BlockPartition, BlockSpec, Strip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// `alpha u_m + beta v_m = gamma` with `v = du/dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Robin {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
}

/// Robin coefficients from the diagonal entries and the history sum.
pub fn robin_coeffs(s_mm: C64, d_mm: C64, side: Side, a_m: f64, gamma: C64) -> Robin {
    let half = match side {
        Side::Right => C64::new(0.0, 0.5),
        Side::Left => C64::new(0.0, -0.5),
    };
    Robin { alpha: half + C64::i() * s_mm * a_m - d_mm, beta: -s_mm, gamma }
}

/// Strictly-lower dense entries of one diagonal strip, row by row.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StripEntries {
    pub s: Vec<C64>,
    pub d: Vec<C64>,
}

/// Offset of row `m` (1-based) inside the packed strip starting at `lo`.
#[inline]
fn strip_offset(lo: usize, m: usize) -> usize {
    let r = m - lo;
    r * (r.saturating_sub(1)) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOperator {
    grid: TimeGrid,
    descriptor: String,
    quad: QuadConfig,
    comp: CompressionConfig,
    partition: BlockPartition,
    s_blocks: Vec<CompressedBlock>,
    d_blocks: Vec<CompressedBlock>,
    strips: Vec<StripEntries>,
    diag_s: Vec<C64>,
    diag_d: Vec<C64>,
}

struct BlockOracle<'a> {
    engine: &'a EntryEngine,
    rows: Range<usize>,
    cols: Range<usize>,
}

impl EntryOracle for BlockOracle<'_> {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.cols.len()
    }

    fn channels(&self) -> usize {
        2
    }

    fn fill(&self, rows: Range<usize>, cols: Range<usize>, out: &mut [Mat]) -> Result<()> {
        let (nr, nc) = (rows.len(), cols.len());
        let mut s = vec![C64::new(0.0, 0.0); nr * nc];
        let mut d = vec![C64::new(0.0, 0.0); nr * nc];
        let r = self.rows.start + rows.start..self.rows.start + rows.end;
        let c = self.cols.start + cols.start..self.cols.start + cols.end;
        self.engine.fill_block(r, c, &mut s, &mut d)?;
        out[0] = Mat::from_col_major(nr, nc, s);
        out[1] = Mat::from_col_major(nr, nc, d);
        Ok(())
    }
}

/// Summary of a precomputed operator's storage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OperatorStorage {
    pub s_blocks: StorageReport,
    pub d_blocks: StorageReport,
    /// Strip and diagonal entries of both matrices.
    pub near_field: usize,
    pub fallback_blocks: usize,
}

impl OperatorStorage {
    /// Compressed block storage relative to dense block storage.
    pub fn block_ratio(&self) -> f64 {
        let dense = self.s_blocks.dense + self.d_blocks.dense;
        if dense == 0 {
            0.0
        } else {
            (self.s_blocks.factors + self.d_blocks.factors) as f64 / dense as f64
        }
    }
}

impl BoundaryOperator {
    /// Builds diagonal, strip and block data for `grid` under `vp`.
    pub fn precompute(
        grid: TimeGrid,
        vp: &VectorPotential,
        quad: QuadConfig,
        comp: CompressionConfig,
    ) -> Result<Self> {
        Self::precompute_with(grid, vp, quad, comp, |_, _| {})
    }

    /// As [`Self::precompute`], reporting `(blocks done, blocks total)`.
    pub fn precompute_with(
        grid: TimeGrid,
        vp: &VectorPotential,
        quad: QuadConfig,
        comp: CompressionConfig,
        mut progress: impl FnMut(usize, usize),
    ) -> Result<Self> {
        comp.validate()?;
        let n = grid.steps();
        let partition = build_partition_padded(n, comp.leaf)?;
        let engine = EntryEngine::new(vp.clone(), grid, quad)?;
        let mut diag_s = Vec::with_capacity(n);
        let mut diag_d = Vec::with_capacity(n);
        for m in 1..=n {
            let (s, d) = engine.entry_pair(m, m)?;
            diag_s.push(s);
            diag_d.push(d);
        }
        let mut strips = Vec::with_capacity(partition.strips().len());
        for strip in partition.strips() {
            let len = strip.hi - strip.lo + 1;
            let mut e = StripEntries { s: Vec::with_capacity(len * (len - 1) / 2), d: Vec::new() };
            e.d.reserve(e.s.capacity());
            for m in strip.lo + 1..=strip.hi {
                let w = m - strip.lo;
                let mut s = vec![C64::new(0.0, 0.0); w];
                let mut d = vec![C64::new(0.0, 0.0); w];
                engine.fill_block(m..m + 1, strip.lo..m, &mut s, &mut d)?;
                e.s.extend_from_slice(&s);
                e.d.extend_from_slice(&d);
            }
            strips.push(e);
        }
        let total = partition.blocks().len();
        let mut s_blocks = Vec::with_capacity(total);
        let mut d_blocks = Vec::with_capacity(total);
        for (done, b) in partition.blocks().iter().enumerate() {
            let oracle = BlockOracle { engine: &engine, rows: b.row_lo..b.row_hi + 1, cols: b.col_lo..b.col_hi + 1 };
            let mut pair = compress_multi(&oracle, &comp)?;
            d_blocks.push(pair.pop().expect("two channels"));
            s_blocks.push(pair.pop().expect("two channels"));
            progress(done + 1, total);
        }
        Ok(Self {
            grid,
            descriptor: vp.descriptor(),
            quad,
            comp,
            partition,
            s_blocks,
            d_blocks,
            strips,
            diag_s,
            diag_d,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn quad(&self) -> &QuadConfig {
        &self.quad
    }

    pub fn compression(&self) -> &CompressionConfig {
        &self.comp
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn s_blocks(&self) -> &[CompressedBlock] {
        &self.s_blocks
    }

    pub fn d_blocks(&self) -> &[CompressedBlock] {
        &self.d_blocks
    }

    /// `(S(m,m), D(m,m))`.
    pub fn diagonal(&self, m: usize) -> (C64, C64) {
        (self.diag_s[m - 1], self.diag_d[m - 1])
    }

    pub fn storage(&self) -> OperatorStorage {
        let mut rep = OperatorStorage::default();
        for (s, d) in self.s_blocks.iter().zip(&self.d_blocks) {
            let (rs, rd) = (s.storage_report(), d.storage_report());
            rep.fallback_blocks += rs.fallback as usize + rd.fallback as usize;
            rep.s_blocks += rs;
            rep.d_blocks += rd;
        }
        rep.near_field = 2 * self.diag_s.len() + self.strips.iter().map(|e| e.s.len() + e.d.len()).sum::<usize>();
        rep
    }

    /// Compares grid and potential with a run; the error carries a diff.
    pub fn check_compatible(&self, grid: &TimeGrid, descriptor: &str) -> Result<()> {
        let mut diffs = Vec::new();
        if self.grid.steps() != grid.steps() {
            diffs.push(format!("N: operator {} vs run {}", self.grid.steps(), grid.steps()));
        }
        if (self.grid.dt() - grid.dt()).abs() > 1e-12 * grid.dt() {
            diffs.push(format!("dt: operator {:e} vs run {:e}", self.grid.dt(), grid.dt()));
        }
        if self.descriptor != descriptor {
            let ours: Vec<_> = self.descriptor.lines().collect();
            let theirs: Vec<_> = descriptor.lines().collect();
            for l in &ours {
                if !theirs.contains(l) {
                    diffs.push(format!("- {l}"));
                }
            }
            for l in &theirs {
                if !ours.contains(l) {
                    diffs.push(format!("+ {l}"));
                }
            }
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::OperatorMismatch(diffs.join("\n")))
        }
    }

    fn strip_row(&self, m: usize) -> (usize, &[C64], &[C64]) {
        let idx = self.partition.strip_of(m);
        let lo = self.partition.strips()[idx].lo;
        let e = &self.strips[idx];
        let off = strip_offset(lo, m);
        let w = m - lo;
        (lo, &e.s[off..off + w], &e.d[off..off + w])
    }

    /// Dense row `m` assembled from the stored parts: `(S(m, 1..=m), D(m, 1..=m))`.
    /// Intended for verification; cost is that of applying every block.
    pub fn dense_row(&self, m: usize) -> Result<(Vec<C64>, Vec<C64>)> {
        let n = self.grid.steps();
        if m == 0 || m > n {
            return Err(contract(format!("row {m} outside 1..={n}")));
        }
        let mut s = vec![C64::new(0.0, 0.0); m];
        let mut d = vec![C64::new(0.0, 0.0); m];
        for (b, (sb, db)) in self.partition.blocks().iter().zip(self.s_blocks.iter().zip(&self.d_blocks)) {
            if !(b.row_lo..=b.row_hi).contains(&m) {
                continue;
            }
            let i = m - b.row_lo;
            for (j, n) in (b.col_lo..=b.col_hi).enumerate() {
                let mut e = vec![C64::new(0.0, 0.0); sb.cols()];
                e[j] = C64::new(1.0, 0.0);
                s[n - 1] = sb.apply(&e)?[i];
                d[n - 1] = db.apply(&e)?[i];
            }
        }
        let (lo, srow, drow) = self.strip_row(m);
        s[lo - 1..m - 1].copy_from_slice(srow);
        d[lo - 1..m - 1].copy_from_slice(drow);
        s[m - 1] = self.diag_s[m - 1];
        d[m - 1] = self.diag_d[m - 1];
        Ok((s, d))
    }
}

/// Wall-clock split of boundary-condition work.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BcTiming {
    pub block_apply: Duration,
    pub strip_rows: Duration,
    pub robin: Duration,
    /// Building matrix rows on the fly (direct mode only).
    pub row_generation: Duration,
    pub block_flops: u64,
}

impl BcTiming {
    /// Time to obtain the boundary conditions, excluding row generation.
    pub fn obtain(&self) -> Duration {
        self.block_apply + self.strip_rows + self.robin
    }
}

impl std::ops::AddAssign for BcTiming {
    fn add_assign(&mut self, o: Self) {
        self.block_apply += o.block_apply;
        self.strip_rows += o.strip_rows;
        self.robin += o.robin;
        self.row_generation += o.row_generation;
        self.block_flops += o.block_flops;
    }
}

/// Trace streams and block accumulator for one boundary.
#[derive(Debug, Clone)]
pub struct BoundaryHistory {
    side: Side,
    u: Vec<C64>,
    v: Vec<C64>,
    q: Vec<C64>,
    g: Vec<C64>,
    next_block: usize,
    timing: BcTiming,
}

impl BoundaryHistory {
    pub fn new(side: Side, steps: usize) -> Self {
        Self {
            side,
            u: Vec::with_capacity(steps),
            v: Vec::with_capacity(steps),
            q: Vec::with_capacity(steps),
            g: vec![C64::new(0.0, 0.0); steps],
            next_block: 0,
            timing: BcTiming::default(),
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn completed(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[C64] {
        &self.u
    }

    pub fn v(&self) -> &[C64] {
        &self.v
    }

    /// `q_n = v_n - i A_n u_n`.
    pub fn q(&self) -> &[C64] {
        &self.q
    }

    /// Block accumulator, `g[m-1]` for row `m`.
    pub fn accumulator(&self) -> &[C64] {
        &self.g
    }

    pub fn timing(&self) -> &BcTiming {
        &self.timing
    }

    /// Records step `m = completed + 1` and applies every block whose
    /// columns are now complete.
    pub fn push_step(&mut self, op: &BoundaryOperator, u_m: C64, v_m: C64, a_m: f64) -> Result<()> {
        let m = self.u.len() + 1;
        if m > op.grid.steps() {
            return Err(contract(format!("history already holds all {} steps", op.grid.steps())));
        }
        self.u.push(u_m);
        self.v.push(v_m);
        self.q.push(v_m - C64::i() * a_m * u_m);
        let start = Instant::now();
        let blocks = op.partition.blocks();
        while let Some(b) = blocks.get(self.next_block) {
            if b.col_hi > m {
                break;
            }
            debug_assert_eq!(b.col_hi, m, "block skipped in the schedule");
            let cols = b.col_lo - 1..b.col_hi;
            let rows = b.row_lo - 1..b.row_hi;
            let g = &mut self.g[rows];
            op.d_blocks[self.next_block].apply_acc(&self.u[cols.clone()], g)?;
            op.s_blocks[self.next_block].apply_acc(&self.q[cols], g)?;
            self.timing.block_flops +=
                op.d_blocks[self.next_block].apply_flops() + op.s_blocks[self.next_block].apply_flops();
            self.next_block += 1;
        }
        self.timing.block_apply += start.elapsed();
        Ok(())
    }

    /// `sum_{n<m} D(m,n) u_n + S(m,n) q_n`.
    pub fn rhs(&mut self, op: &BoundaryOperator, m: usize) -> Result<C64> {
        if m != self.u.len() + 1 {
            return Err(contract(format!("rhs({m}) requested with {} completed steps", self.u.len())));
        }
        let start = Instant::now();
        let (lo, srow, drow) = op.strip_row(m);
        let mut acc = self.g[m - 1];
        for ((s, d), (u, q)) in srow.iter().zip(drow).zip(self.u[lo - 1..m - 1].iter().zip(&self.q[lo - 1..m - 1])) {
            acc += d * u + s * q;
        }
        self.timing.strip_rows += start.elapsed();
        Ok(acc)
    }

    /// Robin data for the next step.
    pub fn robin(&mut self, op: &BoundaryOperator, a_m: f64) -> Result<Robin> {
        let m = self.u.len() + 1;
        let gamma = self.rhs(op, m)?;
        let start = Instant::now();
        let (s, d) = op.diagonal(m);
        let r = robin_coeffs(s, d, self.side, a_m, gamma);
        self.timing.robin += start.elapsed();
        Ok(r)
    }
}

/// Source of per-step Robin conditions for both boundaries.
pub trait RobinSource {
    fn steps(&self) -> usize;
    /// Robin data for step `m` at `side`; `m` must be the next step.
    fn robin(&mut self, side: Side, m: usize, a_m: f64) -> Result<Robin>;
    /// Records the traces of step `m` at `side`.
    fn push(&mut self, side: Side, u: C64, v: C64, a_m: f64) -> Result<()>;
    fn timing(&self) -> BcTiming;
}

enum OperatorRef<'a> {
    Borrowed(&'a BoundaryOperator),
    Shared(Arc<BoundaryOperator>),
}

impl OperatorRef<'_> {
    fn get(&self) -> &BoundaryOperator {
        match self {
            Self::Borrowed(op) => op,
            Self::Shared(op) => op,
        }
    }
}

/// Streaming evaluation through a precomputed operator.
pub struct StreamingTbc<'a> {
    op: OperatorRef<'a>,
    left: BoundaryHistory,
    right: BoundaryHistory,
}

impl<'a> StreamingTbc<'a> {
    pub fn new(op: &'a BoundaryOperator) -> Self {
        Self::with(OperatorRef::Borrowed(op))
    }

    fn with(op: OperatorRef<'a>) -> Self {
        let n = op.get().grid.steps();
        Self { op, left: BoundaryHistory::new(Side::Left, n), right: BoundaryHistory::new(Side::Right, n) }
    }

    pub fn history(&self, side: Side) -> &BoundaryHistory {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// The operator and the history of `side`.
    fn split(&mut self, side: Side) -> (&BoundaryOperator, &mut BoundaryHistory) {
        let h = match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        };
        (self.op.get(), h)
    }
}

impl StreamingTbc<'static> {
    /// A source that keeps `op` alive itself.
    pub fn shared(op: Arc<BoundaryOperator>) -> Self {
        Self::with(OperatorRef::Shared(op))
    }
}

impl RobinSource for StreamingTbc<'_> {
    fn steps(&self) -> usize {
        self.op.get().grid.steps()
    }

    fn robin(&mut self, side: Side, m: usize, a_m: f64) -> Result<Robin> {
        let (op, h) = self.split(side);
        if m != h.completed() + 1 {
            return Err(contract(format!("robin({m}) out of order")));
        }
        h.robin(op, a_m)
    }

    fn push(&mut self, side: Side, u: C64, v: C64, a_m: f64) -> Result<()> {
        let (op, h) = self.split(side);
        h.push_step(op, u, v, a_m)
    }

    fn timing(&self) -> BcTiming {
        let mut t = *self.left.timing();
        t += *self.right.timing();
        t
    }
}

#[cfg(test)]
mod tests;
