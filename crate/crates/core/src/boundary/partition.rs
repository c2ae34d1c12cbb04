use crate::error::{contract, Result};

/// Square block rows `row_lo..=row_hi` x columns `col_lo..=col_hi`
/// (1-based, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

/// Diagonal strip on rows `lo..=hi`, holding the entries `lo <= n < m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strip {
    pub lo: usize,
    pub hi: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    steps: usize,
    padded: usize,
    leaf: usize,
    /// In application order.
    blocks: Vec<BlockSpec>,
    strips: Vec<Strip>,
}

impl BlockPartition {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn padded_steps(&self) -> usize {
        self.padded
    }

    pub fn leaf(&self) -> usize {
        self.leaf
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn strips(&self) -> &[Strip] {
        &self.strips
    }

    /// Index of the strip containing row `m`.
    pub fn strip_of(&self, m: usize) -> usize {
        (m - 1) / self.leaf
    }
}

/// Dyadic partition for `steps = leaf * 2^k`.
pub fn build_partition(steps: usize, leaf: usize) -> Result<BlockPartition> {
    if leaf == 0 || steps == 0 || steps % leaf != 0 || !(steps / leaf).is_power_of_two() {
        return Err(contract(format!("N={steps} is not leaf * 2^k for leaf={leaf}")));
    }
    build_partition_padded(steps, leaf)
}

/// Partition of the padded size `leaf * 2^k >= steps`, clipped to `steps`.
pub fn build_partition_padded(steps: usize, leaf: usize) -> Result<BlockPartition> {
    if leaf == 0 || steps == 0 {
        return Err(contract("partition needs positive N and leaf"));
    }
    let mut padded = leaf;
    while padded < steps {
        padded *= 2;
    }
    let mut blocks = Vec::new();
    let mut strips = Vec::new();
    split(1, padded, leaf, steps, &mut blocks, &mut strips);
    // a block becomes applicable once its last column is complete
    blocks.sort_by_key(|b| b.col_hi);
    strips.sort_by_key(|s| s.lo);
    Ok(BlockPartition { steps, padded, leaf, blocks, strips })
}

fn split(lo: usize, hi: usize, leaf: usize, steps: usize, blocks: &mut Vec<BlockSpec>, strips: &mut Vec<Strip>) {
    if lo > steps {
        return;
    }
    let size = hi - lo + 1;
    if size <= leaf {
        strips.push(Strip { lo, hi: hi.min(steps) });
        return;
    }
    let mid = lo + size / 2 - 1;
    if mid < steps {
        blocks.push(BlockSpec { row_lo: mid + 1, row_hi: hi.min(steps), col_lo: lo, col_hi: mid });
    }
    split(lo, mid, leaf, steps, blocks, strips);
    split(mid + 1, hi, leaf, steps, blocks, strips);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_by_four() {
        let p = build_partition(16, 4).unwrap();
        let b = |r0, r1, c0, c1| BlockSpec { row_lo: r0, row_hi: r1, col_lo: c0, col_hi: c1 };
        assert_eq!(p.blocks(), &[b(5, 8, 1, 4), b(9, 16, 1, 8), b(13, 16, 9, 12)]);
        let lows: Vec<_> = p.strips().iter().map(|s| (s.lo, s.hi)).collect();
        assert_eq!(lows, vec![(1, 4), (5, 8), (9, 12), (13, 16)]);
    }

    #[test]
    fn degenerate() {
        let p = build_partition(8, 8).unwrap();
        assert!(p.blocks().is_empty());
        assert_eq!(p.strips(), &[Strip { lo: 1, hi: 8 }]);
    }

    #[test]
    fn rejects_non_dyadic() {
        assert!(build_partition(24, 4).is_err());
        assert!(build_partition(10, 4).is_err());
    }

    #[test]
    fn padded_clips_to_steps() {
        let p = build_partition_padded(100, 16).unwrap();
        assert_eq!(p.padded_steps(), 128);
        assert!(p.blocks().iter().all(|b| b.row_hi <= 100 && b.row_lo <= 100));
        assert_eq!(p.strips().last().unwrap().hi, 100);
    }
}
