//! Butterfly compression of complex matrices given as entry oracles.

mod butterfly;
mod id;

use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::error::{contract, domain, Result};

pub use butterfly::Butterfly;
pub use id::{interpolative_decomposition, Interpolative};

/// Dense column-major complex matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn select_cols(&self, cols: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for &j in cols {
            data.extend_from_slice(self.col(j));
        }
        Mat { rows: self.rows, cols: cols.len(), data }
    }

    pub fn select_rows(&self, rows: Range<usize>) -> Mat {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for j in 0..self.cols {
            data.extend_from_slice(&self.col(j)[rows.clone()]);
        }
        Mat { rows: rows.len(), cols: self.cols, data }
    }

    /// `[self | other]` restricted to `rows`.
    pub fn hcat_rows(&self, other: &Mat, rows: Range<usize>) -> Mat {
        let mut data = Vec::with_capacity(rows.len() * (self.cols + other.cols));
        for j in 0..self.cols {
            data.extend_from_slice(&self.col(j)[rows.clone()]);
        }
        for j in 0..other.cols {
            data.extend_from_slice(&other.col(j)[rows.clone()]);
        }
        Mat { rows: rows.len(), cols: self.cols + other.cols, data }
    }

    /// `y += A x`.
    #[inline]
    pub fn gemv_acc(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (j, &xj) in x.iter().enumerate() {
            if xj == C64::new(0.0, 0.0) {
                continue;
            }
            for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Matrix-free access to a block, possibly several matrices at once that
/// share their entry computation.
pub trait EntryOracle {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn channels(&self) -> usize {
        1
    }
    /// Fill the submatrix `rows x cols` (block-local, 0-based) for every
    /// channel. `out` holds one column-major buffer per channel.
    fn fill(&self, rows: Range<usize>, cols: Range<usize>, out: &mut [Mat]) -> Result<()>;
}

/// Single-channel oracle from a closure `(i, j) -> B(i, j)`.
pub struct FnOracle<F> {
    rows: usize,
    cols: usize,
    f: F,
}

impl<F: Fn(usize, usize) -> C64> FnOracle<F> {
    pub fn new(rows: usize, cols: usize, f: F) -> Self {
        Self { rows, cols, f }
    }
}

impl<F: Fn(usize, usize) -> C64> EntryOracle for FnOracle<F> {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn fill(&self, rows: Range<usize>, cols: Range<usize>, out: &mut [Mat]) -> Result<()> {
        let r0 = rows.start;
        let c0 = cols.start;
        out[0] = Mat::from_fn(rows.len(), cols.len(), |i, j| (self.f)(r0 + i, c0 + j));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionConfig {
    /// Relative pivot tolerance; `0` stores every block densely.
    pub eps: f64,
    pub leaf: usize,
    pub max_rank: usize,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self { eps: 1e-8, leaf: 64, max_rank: 60 }
    }
}

impl CompressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.eps) {
            return Err(domain(format!("eps must lie in [0, 1), got {}", self.eps)));
        }
        if self.leaf < 8 {
            return Err(domain("leaf size must be at least 8"));
        }
        if self.max_rank == 0 {
            return Err(domain("max_rank must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    Dense(Mat),
    Butterfly(Butterfly),
    /// A block that failed the rank cap, stored as four separately
    /// compressed quadrants.
    Split(Box<Quadrants>),
}

/// Quadrants `[top-left, top-right, bottom-left, bottom-right]` split at
/// row `row_mid` and column `col_mid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrants {
    pub row_mid: usize,
    pub col_mid: usize,
    pub parts: [CompressedBlock; 4],
}

impl Quadrants {
    /// `None` unless the parts tile a `rows x cols` block.
    pub fn new(row_mid: usize, col_mid: usize, parts: [CompressedBlock; 4]) -> Option<Self> {
        let [tl, tr, bl, br] = &parts;
        let ok = tl.rows == row_mid
            && tr.rows == row_mid
            && bl.rows == br.rows
            && tl.cols == col_mid
            && bl.cols == col_mid
            && tr.cols == br.cols;
        ok.then_some(Self { row_mid, col_mid, parts })
    }

    fn dims(&self) -> (usize, usize) {
        let [tl, _, _, br] = &self.parts;
        (tl.rows + br.rows, tl.cols + br.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlock {
    rows: usize,
    cols: usize,
    storage: Storage,
    /// Set when compression was attempted but the rank cap or storage
    /// bound forced dense storage.
    fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StorageReport {
    /// Complex numbers held by the factors.
    pub factors: usize,
    /// Complex numbers a dense copy would hold.
    pub dense: usize,
    pub max_rank: usize,
    pub fallback: bool,
}

impl StorageReport {
    pub fn ratio(&self) -> f64 {
        if self.dense == 0 {
            0.0
        } else {
            self.factors as f64 / self.dense as f64
        }
    }
}

impl std::ops::AddAssign for StorageReport {
    fn add_assign(&mut self, o: Self) {
        self.factors += o.factors;
        self.dense += o.dense;
        self.max_rank = self.max_rank.max(o.max_rank);
        self.fallback |= o.fallback;
    }
}

impl CompressedBlock {
    pub fn dense(m: Mat) -> Self {
        Self { rows: m.rows(), cols: m.cols(), storage: Storage::Dense(m), fallback: false }
    }

    pub(crate) fn from_parts(storage: Storage, fallback: bool) -> Self {
        let (rows, cols) = match &storage {
            Storage::Dense(m) => (m.rows(), m.cols()),
            Storage::Butterfly(b) => (b.rows(), b.cols()),
            Storage::Split(q) => q.dims(),
        };
        Self { rows, cols, storage, fallback }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    pub fn is_butterfly(&self) -> bool {
        matches!(self.storage, Storage::Butterfly(_))
    }

    /// `B x`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let mut y = vec![C64::new(0.0, 0.0); self.rows];
        self.apply_acc(x, &mut y)?;
        Ok(y)
    }

    /// `y += B x`.
    pub fn apply_acc(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        if x.len() != self.cols || y.len() != self.rows {
            return Err(contract(format!(
                "block is {}x{}, got x of length {} and y of length {}",
                self.rows,
                self.cols,
                x.len(),
                y.len()
            )));
        }
        match &self.storage {
            Storage::Dense(m) => m.gemv_acc(x, y),
            Storage::Butterfly(b) => b.apply_acc(x, y),
            Storage::Split(q) => {
                let (r, c) = (q.row_mid, q.col_mid);
                let [tl, tr, bl, br] = &q.parts;
                let (top, bottom) = y.split_at_mut(r);
                tl.apply_acc(&x[..c], top)?;
                tr.apply_acc(&x[c..], top)?;
                bl.apply_acc(&x[..c], bottom)?;
                br.apply_acc(&x[c..], bottom)?;
            }
        }
        Ok(())
    }

    /// Real floating-point operations of one `apply`.
    pub fn apply_flops(&self) -> u64 {
        8 * self.storage_report().factors as u64
    }

    pub fn storage_report(&self) -> StorageReport {
        let (factors, max_rank) = match &self.storage {
            Storage::Dense(m) => (m.len(), self.rows.min(self.cols)),
            Storage::Butterfly(b) => (b.factor_count(), b.max_rank()),
            Storage::Split(q) => q.parts.iter().map(|p| p.storage_report()).fold((0, 0), |(f, r), p| {
                (f + p.factors, r.max(p.max_rank))
            }),
        };
        StorageReport { factors, dense: self.rows * self.cols, max_rank, fallback: self.fallback }
    }
}

/// Compress a single-channel oracle.
pub fn compress(oracle: &dyn EntryOracle, cfg: &CompressionConfig) -> Result<CompressedBlock> {
    if oracle.channels() != 1 {
        return Err(contract("compress expects a single-channel oracle"));
    }
    Ok(compress_multi(oracle, cfg)?.pop().expect("one channel"))
}

/// Compress every channel of `oracle`; stage-zero entries are evaluated
/// once and shared by all channels.
///
/// A channel whose butterfly exceeds the rank cap is split into quadrants
/// that are compressed in turn, as long as they stay at least `2 leaf`
/// wide; if the split is still no smaller than dense storage, the channel
/// is stored densely. Both outcomes are flagged as fallbacks.
pub fn compress_multi(oracle: &dyn EntryOracle, cfg: &CompressionConfig) -> Result<Vec<CompressedBlock>> {
    cfg.validate()?;
    let (rows, cols) = (oracle.rows(), oracle.cols());
    if rows == 0 || cols == 0 {
        return Err(domain("oracle ranges must be nonempty"));
    }
    compress_rec(oracle, cfg)
}

fn compress_rec(oracle: &dyn EntryOracle, cfg: &CompressionConfig) -> Result<Vec<CompressedBlock>> {
    let (rows, cols) = (oracle.rows(), oracle.cols());
    let channels = oracle.channels();
    let aspect_ok = rows * 2 >= cols && cols * 2 >= rows;
    if cfg.eps == 0.0 || rows < 2 * cfg.leaf || cols < 2 * cfg.leaf || !aspect_ok {
        return dense_blocks(oracle, false, channels);
    }
    let built = butterfly::build(oracle, cfg)?;
    let mut out: Vec<Option<CompressedBlock>> = Vec::with_capacity(channels);
    let mut failed = Vec::new();
    for (c, b) in built.into_iter().enumerate() {
        match b {
            Some(b) if b.factor_count() < rows * cols => {
                out.push(Some(CompressedBlock::from_parts(Storage::Butterfly(b), false)))
            }
            _ => {
                failed.push(c);
                out.push(None);
            }
        }
    }
    if failed.is_empty() {
        return Ok(out.into_iter().map(|b| b.expect("every channel assigned")).collect());
    }
    let mut need_dense = Vec::new();
    if rows >= 4 * cfg.leaf && cols >= 4 * cfg.leaf {
        let (rm, cm) = (rows / 2, cols / 2);
        let mut parts: Vec<Vec<CompressedBlock>> = Vec::with_capacity(4);
        for (r, c) in [(0..rm, cm..cols), (0..rm, 0..cm), (rm..rows, cm..cols), (rm..rows, 0..cm)] {
            let sub = SubOracle { base: oracle, rows: r, cols: c, channels: &failed };
            parts.push(compress_rec(&sub, cfg)?);
        }
        // parts were built in the order tr, tl, br, bl
        let [tr, tl, br, bl]: [Vec<CompressedBlock>; 4] = parts.try_into().expect("four quadrants");
        let quads = tl.into_iter().zip(tr).zip(bl).zip(br);
        for (&c, (((tl, tr), bl), br)) in failed.iter().zip(quads) {
            let q = Quadrants::new(rm, cm, [tl, tr, bl, br]).expect("quadrants tile the block");
            let blk = CompressedBlock::from_parts(Storage::Split(Box::new(q)), true);
            if blk.storage_report().factors < rows * cols {
                out[c] = Some(blk);
            } else {
                need_dense.push(c);
            }
        }
    } else {
        need_dense = failed;
    }
    if !need_dense.is_empty() {
        let sub = SubOracle { base: oracle, rows: 0..rows, cols: 0..cols, channels: &need_dense };
        for (&c, blk) in need_dense.iter().zip(dense_blocks(&sub, true, need_dense.len())?) {
            out[c] = Some(blk);
        }
    }
    Ok(out.into_iter().map(|b| b.expect("every channel assigned")).collect())
}

/// A sub-block of `base` restricted to some of its channels.
struct SubOracle<'a> {
    base: &'a dyn EntryOracle,
    rows: Range<usize>,
    cols: Range<usize>,
    channels: &'a [usize],
}

impl EntryOracle for SubOracle<'_> {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.cols.len()
    }

    fn channels(&self) -> usize {
        self.channels.len()
    }

    fn fill(&self, rows: Range<usize>, cols: Range<usize>, out: &mut [Mat]) -> Result<()> {
        let r = self.rows.start + rows.start..self.rows.start + rows.end;
        let c = self.cols.start + cols.start..self.cols.start + cols.end;
        let mut all = vec![Mat::default(); self.base.channels()];
        self.base.fill(r, c, &mut all)?;
        for (dst, &ch) in out.iter_mut().zip(self.channels) {
            *dst = std::mem::take(&mut all[ch]);
        }
        Ok(())
    }
}

fn dense_blocks(oracle: &dyn EntryOracle, fallback: bool, channels: usize) -> Result<Vec<CompressedBlock>> {
    let mut mats = vec![Mat::default(); channels];
    oracle.fill(0..oracle.rows(), 0..oracle.cols(), &mut mats)?;
    Ok(mats.into_iter().map(|m| CompressedBlock::from_parts(Storage::Dense(m), fallback)).collect())
}
