//! Little-endian operator container.
//!
//! Layout: magic `STBC`, version `u32`, then `N u64`, `dt f64`, `T f64`,
//! `tol f64`, `eps f64`, `leaf u32`, `max_rank u32`, a `u32`-length UTF-8
//! potential descriptor and the CRC-64/XZ of all preceding header bytes.
//! Records follow, each `tag u8, id u32, kind u8, storage u8, dims 4 x u64,
//! payload length u64, payload, payload CRC-64`. Tag 0 holds a diagonal,
//! 1 a strip, 2 a block, and 0xFF ends the file with the record count in
//! `dims[0]`. A split block payload holds the row and column split points
//! (`u64` each) followed by its four quadrants, each as `storage u8,
//! length u64, payload`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use num_complex::Complex64 as C64;

use super::{build_partition_padded, BoundaryOperator, StripEntries};
use crate::compression::{Butterfly, CompressedBlock, CompressionConfig, Mat, Quadrants, Storage};
use crate::error::{Error, FormatError, Result};
use crate::kernel::{QuadConfig, TimeGrid};

const MAGIC: &[u8; 4] = b"STBC";
const VERSION: u32 = 1;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

const TAG_DIAG: u8 = 0;
const TAG_STRIP: u8 = 1;
const TAG_BLOCK: u8 = 2;
const TAG_END: u8 = 0xFF;

const KIND_S: u8 = 0;
const KIND_D: u8 = 1;

const STORE_DENSE: u8 = 0;
const STORE_BUTTERFLY: u8 = 1;
const STORE_FALLBACK: u8 = 2;
const STORE_SPLIT: u8 = 3;

fn put_c64s(out: &mut Vec<u8>, v: &[C64]) {
    out.reserve(16 * v.len());
    for z in v {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

fn put_mat(out: &mut Vec<u8>, m: &Mat) {
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    put_c64s(out, m.data());
}

struct RecordWriter<'a> {
    out: &'a mut Vec<u8>,
    count: u64,
}

impl RecordWriter<'_> {
    fn record(&mut self, tag: u8, id: u32, kind: u8, storage: u8, dims: [u64; 4], payload: &[u8]) {
        let o = &mut *self.out;
        o.push(tag);
        o.extend_from_slice(&id.to_le_bytes());
        o.push(kind);
        o.push(storage);
        for d in dims {
            o.extend_from_slice(&d.to_le_bytes());
        }
        o.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        o.extend_from_slice(payload);
        o.extend_from_slice(&CRC64.checksum(payload).to_le_bytes());
        self.count += 1;
    }
}

fn block_payload(b: &CompressedBlock) -> (u8, Vec<u8>) {
    let mut p = Vec::new();
    match b.storage() {
        Storage::Dense(m) => {
            put_c64s(&mut p, m.data());
            (if b.is_fallback() { STORE_FALLBACK } else { STORE_DENSE }, p)
        }
        Storage::Butterfly(bf) => {
            p.extend_from_slice(&(bf.levels() as u64).to_le_bytes());
            let mats: Vec<&Mat> = bf.factors().collect();
            p.extend_from_slice(&(mats.len() as u64).to_le_bytes());
            for m in mats {
                put_mat(&mut p, m);
            }
            (STORE_BUTTERFLY, p)
        }
        Storage::Split(q) => {
            p.extend_from_slice(&(q.row_mid as u64).to_le_bytes());
            p.extend_from_slice(&(q.col_mid as u64).to_le_bytes());
            for part in &q.parts {
                let (st, sub) = block_payload(part);
                p.push(st);
                p.extend_from_slice(&(sub.len() as u64).to_le_bytes());
                p.extend_from_slice(&sub);
            }
            (STORE_SPLIT, p)
        }
    }
}

/// Serializes `op` into `w`.
pub fn write_operator(op: &BoundaryOperator, w: &mut impl Write) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(op.grid.steps() as u64).to_le_bytes());
    out.extend_from_slice(&op.grid.dt().to_le_bytes());
    out.extend_from_slice(&op.grid.horizon().to_le_bytes());
    out.extend_from_slice(&op.quad.tol.to_le_bytes());
    out.extend_from_slice(&op.comp.eps.to_le_bytes());
    out.extend_from_slice(&(op.comp.leaf as u32).to_le_bytes());
    out.extend_from_slice(&(op.comp.max_rank as u32).to_le_bytes());
    out.extend_from_slice(&(op.descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(op.descriptor.as_bytes());
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());

    let mut rw = RecordWriter { out: &mut out, count: 0 };
    let n = op.grid.steps() as u64;
    for (kind, diag) in [(KIND_S, &op.diag_s), (KIND_D, &op.diag_d)] {
        let mut p = Vec::new();
        put_c64s(&mut p, diag);
        rw.record(TAG_DIAG, 0, kind, STORE_DENSE, [1, n, 0, 0], &p);
    }
    for (i, (strip, e)) in op.partition.strips().iter().zip(&op.strips).enumerate() {
        for (kind, vals) in [(KIND_S, &e.s), (KIND_D, &e.d)] {
            let mut p = Vec::new();
            put_c64s(&mut p, vals);
            rw.record(TAG_STRIP, i as u32, kind, STORE_DENSE, [strip.lo as u64, strip.hi as u64, 0, 0], &p);
        }
    }
    for (i, spec) in op.partition.blocks().iter().enumerate() {
        let dims = [spec.row_lo as u64, spec.row_hi as u64, spec.col_lo as u64, spec.col_hi as u64];
        for (kind, blk) in [(KIND_S, &op.s_blocks[i]), (KIND_D, &op.d_blocks[i])] {
            let (storage, p) = block_payload(blk);
            rw.record(TAG_BLOCK, i as u32, kind, storage, dims, &p);
        }
    }
    let count = rw.count;
    rw.record(TAG_END, 0, 0, 0, [count, 0, 0, 0], &[]);
    w.write_all(&out)?;
    Ok(())
}

pub fn save_operator(op: &BoundaryOperator, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_operator(op, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    records: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, FormatError> {
        usize::try_from(self.u64()?).map_err(|_| malformed("length overflows usize"))
    }

    fn c64s(&mut self, n: usize) -> Result<Vec<C64>, FormatError> {
        let bytes = self.take(n.checked_mul(16).ok_or_else(|| malformed("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect())
    }
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

struct Record<'a> {
    tag: u8,
    id: u32,
    kind: u8,
    storage: u8,
    dims: [u64; 4],
    payload: &'a [u8],
}

fn read_record<'a>(c: &mut Cursor<'a>) -> Result<Record<'a>, FormatError> {
    let index = c.records;
    c.records += 1;
    let tag = c.u8()?;
    let id = c.u32()?;
    let kind = c.u8()?;
    let storage = c.u8()?;
    let dims = [c.u64()?, c.u64()?, c.u64()?, c.u64()?];
    let len = c.len()?;
    let payload = c.take(len)?;
    let crc = c.u64()?;
    if CRC64.checksum(payload) != crc {
        return Err(FormatError::PayloadChecksum(index));
    }
    Ok(Record { tag, id, kind, storage, dims, payload })
}

fn expect_record(r: &Record, tag: u8, id: u32, kind: u8) -> Result<(), FormatError> {
    if r.tag != tag || r.id != id || r.kind != kind {
        return Err(malformed(format!(
            "expected record tag {tag} id {id} kind {kind}, found tag {} id {} kind {}",
            r.tag, r.id, r.kind
        )));
    }
    Ok(())
}

fn exact_c64s(payload: &[u8], n: usize) -> Result<Vec<C64>, FormatError> {
    if payload.len() != 16 * n {
        return Err(malformed(format!("payload holds {} bytes, expected {}", payload.len(), 16 * n)));
    }
    Cursor { buf: payload, pos: 0, records: 0 }.c64s(n)
}

fn parse_block(storage: u8, payload: &[u8], rows: usize, cols: usize) -> Result<CompressedBlock, FormatError> {
    match storage {
        STORE_DENSE | STORE_FALLBACK => {
            let m = Mat::from_col_major(rows, cols, exact_c64s(payload, rows * cols)?);
            Ok(CompressedBlock::from_parts(Storage::Dense(m), storage == STORE_FALLBACK))
        }
        STORE_SPLIT => {
            let mut c = Cursor { buf: payload, pos: 0, records: 0 };
            let (rm, cm) = (c.len()?, c.len()?);
            if rm == 0 || rm >= rows || cm == 0 || cm >= cols {
                return Err(malformed("split point outside the block"));
            }
            let mut parts = Vec::with_capacity(4);
            for (r, k) in [(rm, cm), (rm, cols - cm), (rows - rm, cm), (rows - rm, cols - cm)] {
                let st = c.u8()?;
                let len = c.len()?;
                parts.push(parse_block(st, c.take(len)?, r, k)?);
            }
            if c.pos != payload.len() {
                return Err(malformed("trailing bytes in split payload"));
            }
            let parts: [CompressedBlock; 4] = parts.try_into().expect("four parts");
            let q = Quadrants::new(rm, cm, parts).ok_or_else(|| malformed("split parts do not tile the block"))?;
            Ok(CompressedBlock::from_parts(Storage::Split(Box::new(q)), true))
        }
        STORE_BUTTERFLY => {
            let mut c = Cursor { buf: payload, pos: 0, records: 0 };
            let levels = c.len()?;
            let count = c.len()?;
            if levels > 40 || count > payload.len() {
                return Err(malformed("implausible butterfly header"));
            }
            let mut mats = Vec::with_capacity(count);
            for _ in 0..count {
                let (mr, mc) = (c.len()?, c.len()?);
                let n = mr.checked_mul(mc).ok_or_else(|| malformed("factor size overflow"))?;
                mats.push(Mat::from_col_major(mr, mc, c.c64s(n)?));
            }
            if c.pos != payload.len() {
                return Err(malformed("trailing bytes in butterfly payload"));
            }
            let b = Butterfly::from_factors(rows, cols, levels, mats)
                .ok_or_else(|| malformed("butterfly factor shapes are inconsistent"))?;
            Ok(CompressedBlock::from_parts(Storage::Butterfly(b), false))
        }
        s => Err(malformed(format!("unknown storage flag {s}"))),
    }
}

fn parse(buf: &[u8]) -> Result<BoundaryOperator> {
    let mut c = Cursor { buf, pos: 0, records: 0 };
    if buf.len() < 4 {
        return Err(FormatError::Truncated.into());
    }
    if c.take(4)? != MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    let version = c.u32()?;
    if version == VERSION.swap_bytes() {
        return Err(FormatError::Endianness.into());
    }
    if version != VERSION {
        return Err(FormatError::Version(version).into());
    }
    let steps = c.len()?;
    let dt = c.f64()?;
    let _horizon = c.f64()?;
    let tol = c.f64()?;
    let eps = c.f64()?;
    let leaf = c.u32()? as usize;
    let max_rank = c.u32()? as usize;
    let dlen = c.u32()? as usize;
    let descriptor = std::str::from_utf8(c.take(dlen)?)
        .map_err(|_| malformed("descriptor is not UTF-8"))?
        .to_string();
    let header_end = c.pos;
    if CRC64.checksum(&buf[..header_end]) != c.u64()? {
        return Err(FormatError::HeaderChecksum.into());
    }
    let grid = TimeGrid::new(steps, dt).map_err(|e| malformed(e.to_string()))?;
    let quad = QuadConfig { tol, ..QuadConfig::default() };
    let comp = CompressionConfig { eps, leaf, max_rank };
    comp.validate().map_err(|e| malformed(e.to_string()))?;
    let partition = build_partition_padded(steps, leaf).map_err(|e| malformed(e.to_string()))?;

    let mut diags = Vec::new();
    for kind in [KIND_S, KIND_D] {
        let r = read_record(&mut c)?;
        expect_record(&r, TAG_DIAG, 0, kind)?;
        diags.push(exact_c64s(r.payload, steps)?);
    }
    let diag_d = diags.pop().expect("two diagonals");
    let diag_s = diags.pop().expect("two diagonals");
    let mut strips = Vec::with_capacity(partition.strips().len());
    for (i, strip) in partition.strips().iter().enumerate() {
        let w = strip.hi - strip.lo + 1;
        let count = w * (w - 1) / 2;
        let mut pair = Vec::new();
        for kind in [KIND_S, KIND_D] {
            let r = read_record(&mut c)?;
            expect_record(&r, TAG_STRIP, i as u32, kind)?;
            if r.dims[..2] != [strip.lo as u64, strip.hi as u64] {
                return Err(malformed(format!("strip {i} has unexpected rows")).into());
            }
            pair.push(exact_c64s(r.payload, count)?);
        }
        let d = pair.pop().expect("two kinds");
        let s = pair.pop().expect("two kinds");
        strips.push(StripEntries { s, d });
    }
    let mut s_blocks = Vec::with_capacity(partition.blocks().len());
    let mut d_blocks = Vec::with_capacity(partition.blocks().len());
    for (i, spec) in partition.blocks().iter().enumerate() {
        let dims = [spec.row_lo as u64, spec.row_hi as u64, spec.col_lo as u64, spec.col_hi as u64];
        let rows = spec.row_hi - spec.row_lo + 1;
        let cols = spec.col_hi - spec.col_lo + 1;
        for (kind, dst) in [(KIND_S, &mut s_blocks), (KIND_D, &mut d_blocks)] {
            let r = read_record(&mut c)?;
            expect_record(&r, TAG_BLOCK, i as u32, kind)?;
            if r.dims != dims {
                return Err(malformed(format!("block {i} has unexpected dimensions")).into());
            }
            dst.push(parse_block(r.storage, r.payload, rows, cols)?);
        }
    }
    let end = read_record(&mut c)?;
    let expected = (c.records - 1) as u64;
    if end.tag != TAG_END || end.dims[0] != expected {
        return Err(malformed("missing or inconsistent end record").into());
    }
    if c.pos != buf.len() {
        return Err(malformed("trailing bytes after end record").into());
    }
    Ok(BoundaryOperator { grid, descriptor, quad, comp, partition, s_blocks, d_blocks, strips, diag_s, diag_d })
}

pub fn read_operator(r: &mut impl Read) -> Result<BoundaryOperator> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    parse(&buf)
}

pub fn load_operator(path: impl AsRef<Path>) -> Result<BoundaryOperator> {
    let buf = fs::read(path).map_err(Error::Io)?;
    parse(&buf)
}
