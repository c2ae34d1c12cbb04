//! Trajectory, trace and summary files.
//!
//! Snapshot stream, little-endian: `J u64, dx f64, x0 f64, stride u64,
//! N u64`, then one record per stored frame holding `t f64` followed by
//! `J + 1` pairs `(re f64, im f64)`. Frames are steps `0, stride, 2 stride,
//! ...` up to `N`, plus step `N` when the stride does not divide it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, FormatError, Result};
use crate::kernel::TimeGrid;
use crate::solver::{SpatialGrid, Traces};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub intervals: u64,
    pub dx: f64,
    pub x0: f64,
    pub stride: u64,
    pub steps: u64,
}

const HEADER_BYTES: usize = 40;

impl SnapshotHeader {
    pub fn new(grid: &SpatialGrid, stride: usize, steps: usize) -> Self {
        Self { intervals: grid.intervals() as u64, dx: grid.dx(), x0: grid.x0(), stride: stride as u64, steps: steps as u64 }
    }

    pub fn points(&self) -> usize {
        self.intervals as usize + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.x0 + j as f64 * self.dx
    }

    /// Whether step `m` is stored.
    pub fn keeps(&self, m: usize) -> bool {
        self.stride > 0 && (m as u64 % self.stride == 0 || m as u64 == self.steps)
    }

    fn to_bytes(self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0..8].copy_from_slice(&self.intervals.to_le_bytes());
        b[8..16].copy_from_slice(&self.dx.to_le_bytes());
        b[16..24].copy_from_slice(&self.x0.to_le_bytes());
        b[24..32].copy_from_slice(&self.stride.to_le_bytes());
        b[32..40].copy_from_slice(&self.steps.to_le_bytes());
        b
    }

    fn from_bytes(b: &[u8; HEADER_BYTES]) -> Result<Self> {
        let u = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let f = |i: usize| f64::from_bits(u(i));
        let h = Self { intervals: u(0), dx: f(8), x0: f(16), stride: u(24), steps: u(32) };
        if h.intervals == 0 || h.intervals > 1 << 32 || !(h.dx > 0.0) || !(h.x0 > 0.0) || h.stride == 0 {
            return Err(FormatError::Malformed(format!("implausible snapshot header {h:?}")).into());
        }
        Ok(h)
    }
}

/// Streams frames to a snapshot file.
pub struct SnapshotWriter<W: Write> {
    header: SnapshotHeader,
    out: W,
    frames: usize,
    buf: Vec<u8>,
}

impl SnapshotWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: SnapshotHeader) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(mut out: W, header: SnapshotHeader) -> Result<Self> {
        out.write_all(&header.to_bytes())?;
        Ok(Self { header, out, frames: 0, buf: Vec::new() })
    }

    /// Writes step `m` if the stride keeps it.
    pub fn observe(&mut self, m: usize, t: f64, u: &[C64]) -> Result<()> {
        if self.header.keeps(m) {
            self.push(t, u)?;
        }
        Ok(())
    }

    pub fn push(&mut self, t: f64, u: &[C64]) -> Result<()> {
        if u.len() != self.header.points() {
            return Err(domain(format!("frame has {} nodes, header says {}", u.len(), self.header.points())));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&t.to_le_bytes());
        for z in u {
            self.buf.extend_from_slice(&z.re.to_le_bytes());
            self.buf.extend_from_slice(&z.im.to_le_bytes());
        }
        self.out.write_all(&self.buf)?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn header(&self) -> &SnapshotHeader {
        &self.header
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// A stored trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: SnapshotHeader,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<C64>>,
}

impl Trajectory {
    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut hb = [0u8; HEADER_BYTES];
        r.read_exact(&mut hb).map_err(truncated)?;
        let header = SnapshotHeader::from_bytes(&hb)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let rec = 8 + 16 * header.points();
        if rest.len() % rec != 0 {
            return Err(FormatError::Truncated.into());
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
        let mut times = Vec::with_capacity(rest.len() / rec);
        let mut frames = Vec::with_capacity(rest.len() / rec);
        for chunk in rest.chunks_exact(rec) {
            times.push(f(&chunk[..8]));
            frames.push(chunk[8..].chunks_exact(16).map(|p| C64::new(f(&p[..8]), f(&p[8..]))).collect());
        }
        Ok(Self { header, times, frames })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let mut sw = SnapshotWriter::new(w, self.header)?;
        for (t, u) in self.times.iter().zip(&self.frames) {
            sw.push(*t, u)?;
        }
        sw.finish()?;
        Ok(())
    }

    /// `t,x,re,im`, one line per node and frame.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,x,re,im")?;
        for (t, u) in self.times.iter().zip(&self.frames) {
            for (j, z) in u.iter().enumerate() {
                writeln!(w, "{t:e},{:e},{:e},{:e}", self.header.x(j), z.re, z.im)?;
            }
        }
        Ok(())
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        FormatError::Truncated.into()
    } else {
        e.into()
    }
}

/// `m,t,side,u_re,u_im,v_re,v_im` for steps `1..=N` at both ends.
pub fn write_traces_csv(w: &mut impl Write, traces: &Traces, time: &TimeGrid) -> Result<()> {
    writeln!(w, "m,t,side,u_re,u_im,v_re,v_im")?;
    for (side, tr) in [("left", &traces.left), ("right", &traces.right)] {
        for (i, (u, v)) in tr.u.iter().zip(&tr.v).enumerate() {
            let m = i + 1;
            writeln!(w, "{m},{:e},{side},{:e},{:e},{:e},{:e}", time.t(m), u.re, u.im, v.re, v.im)?;
        }
    }
    Ok(())
}

/// Wall times of one run, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub precompute: f64,
    pub marching: f64,
    pub tbc_obtain: f64,
    pub block_apply: f64,
    pub strip_rows: f64,
    pub robin: f64,
    pub row_generation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub config_hash: String,
    pub operator_hash: Option<String>,
    pub steps: usize,
    pub dt: f64,
    pub dx: f64,
    pub final_l2: f64,
    pub final_max: f64,
    pub block_flops: u64,
    pub times: PhaseTimes,
    pub snapshot_frames: usize,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| domain(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| domain(format!("bad summary: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::TraceStream;

    #[test]
    fn snapshot_roundtrip() {
        let grid = SpatialGrid::new(1.0, 16).unwrap();
        let h = SnapshotHeader::new(&grid, 3, 7);
        let mut sw = SnapshotWriter::new(Vec::new(), h).unwrap();
        for m in 0..=7 {
            let u: Vec<C64> = (0..17).map(|j| C64::new(m as f64, j as f64)).collect();
            sw.observe(m, 0.1 * m as f64, &u).unwrap();
        }
        assert_eq!(sw.frames(), 4);
        let bytes = sw.finish().unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES + 4 * (8 + 16 * 17));
        let tr = Trajectory::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(tr.header, h);
        assert_eq!(tr.times, vec![0.0, 0.30000000000000004, 0.6000000000000001, 0.7000000000000001]);
        assert_eq!(tr.frames[3][5], C64::new(7.0, 5.0));
        let mut again = Vec::new();
        tr.write(&mut again).unwrap();
        assert_eq!(again, bytes);
        assert!(Trajectory::read(&mut &bytes[..bytes.len() - 1]).is_err());
        assert!(Trajectory::read(&mut &bytes[..10]).is_err());
    }

    #[test]
    fn csv_exports() {
        let grid = SpatialGrid::new(1.0, 16).unwrap();
        let tr = Trajectory {
            header: SnapshotHeader::new(&grid, 1, 0),
            times: vec![0.0],
            frames: vec![vec![C64::new(1.0, -1.0); 17]],
        };
        let mut out = Vec::new();
        tr.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 18);
        assert_eq!(text.lines().nth(1).unwrap(), "0e0,-1e0,1e0,-1e0");

        let one = TraceStream { u: vec![C64::new(1.0, 2.0)], v: vec![C64::new(3.0, 4.0)] };
        let traces = Traces { left: one.clone(), right: one };
        let mut out = Vec::new();
        write_traces_csv(&mut out, &traces, &TimeGrid::new(1, 0.5).unwrap()).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "1,5e-1,right,1e0,2e0,3e0,4e0");
    }

    #[test]
    fn summary_json_roundtrip() {
        let s = RunSummary { mode: "dirichlet".into(), steps: 3, warnings: vec!["w".into()], ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.json");
        s.write_json(&p).unwrap();
        assert_eq!(RunSummary::read_json(&p).unwrap(), s);
    }
}
