//! Interpolative butterfly built depth-first over the column tree.
//!
//! Column node `(h, j)` has height `h` (leaves at `h = 0`); it is paired
//! with the `2^h` row nodes at depth `h`. Processing one column subtree at
//! a time keeps at most one `rows x rank` panel alive per height, and every
//! entry of the block is requested from the oracle at most once. Subtrees
//! are visited right to left and the walk stops once every channel has
//! exceeded the rank cap.

use std::ops::Range;

use num_complex::Complex64 as C64;

use super::id::interpolative_decomposition;
use super::{CompressionConfig, EntryOracle, Mat};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Butterfly {
    rows: usize,
    cols: usize,
    levels: usize,
    /// Interpolation factor of each column leaf.
    leaves: Vec<Mat>,
    /// `inner[h - 1][i * 2^(L-h) + j]` for row node `i` at depth `h` and
    /// column node `j` at height `h`, `h = 1..=L`.
    inner: Vec<Vec<Mat>>,
    /// Skeleton entries `B[R_i, J_i]` of each row leaf.
    ends: Vec<Mat>,
}

/// Midpoint splitting of `0..n` into `2^depth` ranges.
pub(crate) fn split(n: usize, depth: usize) -> Vec<Range<usize>> {
    let mut cur = vec![0..n];
    for _ in 0..depth {
        cur = cur
            .into_iter()
            .flat_map(|r| {
                let mid = r.start + r.len() / 2;
                [r.start..mid, mid..r.end]
            })
            .collect();
    }
    cur
}

fn levels_for(cols: usize, leaf: usize) -> usize {
    let mut l = 0;
    while (cols >> (l + 1)) >= leaf {
        l += 1;
    }
    l
}

/// One channel's panels for the row nodes paired with a column node.
type Panels = Vec<Mat>;

struct Builder<'a> {
    oracle: &'a dyn EntryOracle,
    cfg: CompressionConfig,
    levels: usize,
    col_leaves: Vec<Range<usize>>,
    row_nodes: Vec<Vec<Range<usize>>>,
    /// Per channel: `None` once the rank cap was exceeded.
    acc: Vec<Option<Factors>>,
}

struct Factors {
    leaves: Vec<Mat>,
    inner: Vec<Vec<Mat>>,
}

impl Builder<'_> {
    /// Returns per-channel panels `B[R_i, J_(i, node)]` for the row nodes
    /// at depth `h`.
    fn process(&mut self, h: usize, j: usize) -> Result<Vec<Option<Panels>>> {
        let channels = self.acc.len();
        if self.acc.iter().all(Option::is_none) {
            return Ok(vec![None; channels]);
        }
        if h == 0 {
            let cols = self.col_leaves[j].clone();
            let mut slabs = vec![Mat::default(); channels];
            self.oracle.fill(0..self.oracle.rows(), cols, &mut slabs)?;
            let mut out = Vec::with_capacity(channels);
            for (c, slab) in slabs.into_iter().enumerate() {
                let Some(f) = self.acc[c].as_mut() else {
                    out.push(None);
                    continue;
                };
                let id = interpolative_decomposition(&slab, self.cfg.eps, self.cfg.max_rank);
                if id.rank() > self.cfg.max_rank {
                    self.acc[c] = None;
                    out.push(None);
                    continue;
                }
                f.leaves[j] = id.interp;
                out.push(Some(vec![slab.select_cols(&id.skeleton)]));
            }
            return Ok(out);
        }
        // columns nearest the diagonal first, so a failing block stops early
        let right = self.process(h - 1, 2 * j + 1)?;
        let left = self.process(h - 1, 2 * j)?;
        let width = 1usize << (self.levels - h);
        let mut out = Vec::with_capacity(channels);
        for (c, (l, r)) in left.into_iter().zip(right).enumerate() {
            let (Some(l), Some(r)) = (l, r) else {
                out.push(None);
                continue;
            };
            if self.acc[c].is_none() {
                out.push(None);
                continue;
            }
            let mut panels = Vec::with_capacity(2 * l.len());
            let mut failed = false;
            'parents: for (p, (lp, rp)) in l.iter().zip(&r).enumerate() {
                let parent = &self.row_nodes[h - 1][p];
                for i in [2 * p, 2 * p + 1] {
                    let child = &self.row_nodes[h][i];
                    let local = child.start - parent.start..child.end - parent.start;
                    let stacked = lp.hcat_rows(rp, local);
                    let id = interpolative_decomposition(&stacked, self.cfg.eps, self.cfg.max_rank);
                    if id.rank() > self.cfg.max_rank {
                        failed = true;
                        break 'parents;
                    }
                    panels.push(stacked.select_cols(&id.skeleton));
                    self.acc[c].as_mut().expect("live channel").inner[h - 1][i * width + j] = id.interp;
                }
            }
            if failed {
                self.acc[c] = None;
                out.push(None);
            } else {
                out.push(Some(panels));
            }
        }
        Ok(out)
    }
}

/// Builds one butterfly per oracle channel; `None` marks a channel that
/// exceeded the rank cap.
pub(crate) fn build(oracle: &dyn EntryOracle, cfg: &CompressionConfig) -> Result<Vec<Option<Butterfly>>> {
    let (rows, cols) = (oracle.rows(), oracle.cols());
    let levels = levels_for(cols, cfg.leaf);
    let col_leaves = split(cols, levels);
    let row_nodes: Vec<_> = (0..=levels).map(|d| split(rows, d)).collect();
    let channels = oracle.channels();
    let acc = (0..channels)
        .map(|_| {
            Some(Factors {
                leaves: vec![Mat::default(); 1 << levels],
                inner: (1..=levels).map(|_| vec![Mat::default(); 1 << levels]).collect(),
            })
        })
        .collect();
    let mut b = Builder { oracle, cfg: *cfg, levels, col_leaves, row_nodes, acc };
    let top = b.process(levels, 0)?;
    Ok(top
        .into_iter()
        .zip(b.acc)
        .map(|(ends, f)| match (ends, f) {
            (Some(ends), Some(f)) => Some(Butterfly { rows, cols, levels, leaves: f.leaves, inner: f.inner, ends }),
            _ => None,
        })
        .collect())
}

impl Butterfly {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn factor_count(&self) -> usize {
        self.leaves.iter().chain(self.inner.iter().flatten()).chain(&self.ends).map(Mat::len).sum()
    }

    pub fn max_rank(&self) -> usize {
        self.leaves.iter().chain(self.inner.iter().flatten()).map(Mat::rows).max().unwrap_or(0)
    }

    /// Every factor in serialization order: leaves, inner levels, ends.
    pub fn factors(&self) -> impl Iterator<Item = &Mat> {
        self.leaves.iter().chain(self.inner.iter().flatten()).chain(&self.ends)
    }

    /// Rebuild from factors in [`Self::factors`] order; `None` if the shapes
    /// are inconsistent.
    pub fn from_factors(rows: usize, cols: usize, levels: usize, mut mats: Vec<Mat>) -> Option<Self> {
        let n = 1usize << levels;
        if mats.len() != n * (levels + 2) {
            return None;
        }
        let ends = mats.split_off(n * (levels + 1));
        let mut rest = mats.into_iter();
        let leaves: Vec<Mat> = rest.by_ref().take(n).collect();
        let inner: Vec<Vec<Mat>> = (0..levels).map(|_| rest.by_ref().take(n).collect()).collect();
        let b = Self { rows, cols, levels, leaves, inner, ends };
        b.shapes_consistent().then_some(b)
    }

    fn shapes_consistent(&self) -> bool {
        let col_leaves = split(self.cols, self.levels);
        let rows_at = |d| split(self.rows, d);
        if self.leaves.iter().zip(&col_leaves).any(|(t, c)| t.cols() != c.len()) {
            return false;
        }
        // rank flowing into each (row node, column node) pair
        let mut ranks: Vec<usize> = self.leaves.iter().map(Mat::rows).collect();
        for h in 1..=self.levels {
            let width = 1usize << (self.levels - h);
            let prev_width = width * 2;
            let mut next = vec![0; 1 << self.levels];
            for i in 0..(1 << h) {
                let p = i / 2;
                for j in 0..width {
                    let t = &self.inner[h - 1][i * width + j];
                    let inflow = ranks[p * prev_width + 2 * j] + ranks[p * prev_width + 2 * j + 1];
                    if t.cols() != inflow {
                        return false;
                    }
                    next[i * width + j] = t.rows();
                }
            }
            ranks = next;
        }
        let leaves_rows = rows_at(self.levels);
        self.ends.iter().zip(&leaves_rows).zip(&ranks).all(|((e, r), &k)| e.rows() == r.len() && e.cols() == k)
    }

    pub(crate) fn apply_acc(&self, x: &[C64], y: &mut [C64]) {
        let col_leaves = split(self.cols, self.levels);
        let mut z: Vec<Vec<C64>> = self
            .leaves
            .iter()
            .zip(&col_leaves)
            .map(|(t, c)| {
                let mut out = vec![C64::new(0.0, 0.0); t.rows()];
                t.gemv_acc(&x[c.clone()], &mut out);
                out
            })
            .collect();
        let mut buf = Vec::new();
        for h in 1..=self.levels {
            let width = 1usize << (self.levels - h);
            let prev_width = width * 2;
            let mut next = Vec::with_capacity(1 << self.levels);
            for i in 0..(1usize << h) {
                let p = i / 2;
                for j in 0..width {
                    let t = &self.inner[h - 1][i * width + j];
                    buf.clear();
                    buf.extend_from_slice(&z[p * prev_width + 2 * j]);
                    buf.extend_from_slice(&z[p * prev_width + 2 * j + 1]);
                    let mut out = vec![C64::new(0.0, 0.0); t.rows()];
                    t.gemv_acc(&buf, &mut out);
                    next.push(out);
                }
            }
            z = next;
        }
        for ((e, r), zi) in self.ends.iter().zip(split(self.rows, self.levels)).zip(&z) {
            e.gemv_acc(zi, &mut y[r]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_covers_range() {
        for (n, d) in [(100, 3), (7, 3), (64, 0), (1025, 4)] {
            let parts = split(n, d);
            assert_eq!(parts.len(), 1 << d);
            assert_eq!(parts[0].start, 0);
            assert_eq!(parts.last().unwrap().end, n);
            assert!(parts.windows(2).all(|w| w[0].end == w[1].start));
        }
    }

    #[test]
    fn level_count() {
        assert_eq!(levels_for(64, 64), 0);
        assert_eq!(levels_for(128, 64), 1);
        assert_eq!(levels_for(8192, 64), 7);
        assert_eq!(levels_for(200, 64), 1);
    }
}
