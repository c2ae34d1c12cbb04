//! Command implementations behind the `tbc` binary.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary::{load_operator, save_operator, BcTiming, BoundaryOperator, DirectTbc, OperatorStorage, StreamingTbc};
use crate::config::{BarrierSpec, BoundaryMode, InitialSpec, SimulationConfig};
use crate::error::{Error, Result};
use crate::kernel::EntryEngine;
use crate::output::{write_traces_csv, PhaseTimes, RunSummary, SnapshotHeader, SnapshotWriter, Trajectory};
use crate::reference::{gaussian_wavepacket, shifted_reference, WavepacketParams};
use crate::solver::{run_dirichlet_reference, run_tbc, Problem, RunOutput, SpatialGrid};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => 2,
        Error::OperatorMismatch(_) | Error::Format(_) => 3,
        Error::Domain(_) | Error::Quadrature { .. } | Error::SingularSystem { .. } | Error::Contract(_) => 4,
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn wavepacket(cfg: &SimulationConfig) -> Result<Option<WavepacketParams>> {
    match cfg.initial {
        InitialSpec::Zero => Ok(None),
        InitialSpec::Gaussian { alpha, k, mu } => WavepacketParams::new(alpha, k, mu).map(Some),
    }
}

/// The configured problem on `grid`.
pub fn problem_on(cfg: &SimulationConfig, grid: SpatialGrid) -> Result<Problem> {
    let packet = wavepacket(cfg)?;
    Ok(Problem::new(grid, cfg.time_grid()?, cfg.vector_potential()?, cfg.binding_potential()?, |x| {
        packet.map_or(C64::new(0.0, 0.0), |p| gaussian_wavepacket(&p, x))
    }))
}

pub fn problem(cfg: &SimulationConfig) -> Result<Problem> {
    problem_on(cfg, cfg.spatial_grid()?)
}

/// Result of building an operator.
#[derive(Debug, Clone)]
pub struct PrecomputeReport {
    pub storage: OperatorStorage,
    /// `(rows, S rank, D rank)` per square block in application order.
    pub ranks: Vec<(usize, usize, usize)>,
    pub seconds: f64,
}

impl PrecomputeReport {
    pub fn of(op: &BoundaryOperator, elapsed: Duration) -> Self {
        let ranks = op
            .s_blocks()
            .iter()
            .zip(op.d_blocks())
            .map(|(s, d)| (s.rows(), s.storage_report().max_rank, d.storage_report().max_rank))
            .collect();
        Self { storage: op.storage(), ranks, seconds: secs(elapsed) }
    }

    /// One line per block size: count and largest ranks.
    pub fn rank_table(&self) -> String {
        let mut rows: Vec<(usize, usize, usize, usize)> = Vec::new();
        for &(n, rs, rd) in &self.ranks {
            match rows.iter_mut().find(|r| r.0 == n) {
                Some(r) => {
                    r.1 += 1;
                    r.2 = r.2.max(rs);
                    r.3 = r.3.max(rd);
                }
                None => rows.push((n, 1, rs, rd)),
            }
        }
        rows.sort_by(|a, b| b.0.cmp(&a.0));
        let mut out = String::from("block size  count  max rank S  max rank D\n");
        for (n, c, rs, rd) in rows {
            out += &format!("{n:>10}  {c:>5}  {rs:>10}  {rd:>10}\n");
        }
        out
    }
}

pub fn build_operator(cfg: &SimulationConfig) -> Result<(BoundaryOperator, PrecomputeReport)> {
    let start = Instant::now();
    let op = BoundaryOperator::precompute(cfg.time_grid()?, &cfg.vector_potential()?, cfg.quad(), cfg.compression())?;
    let rep = PrecomputeReport::of(&op, start.elapsed());
    Ok((op, rep))
}

/// `tbc precompute`: builds and writes the operator container.
pub fn cmd_precompute(cfg: &SimulationConfig, out: &Path) -> Result<PrecomputeReport> {
    let (op, rep) = build_operator(cfg)?;
    save_operator(&op, out)?;
    Ok(rep)
}

/// Where a run's files go.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub ops: Option<PathBuf>,
    pub mode: Option<BoundaryMode>,
    pub out_dir: PathBuf,
    pub csv: bool,
}

impl RunOptions {
    pub fn from_config(cfg: &SimulationConfig) -> Self {
        Self {
            ops: cfg.boundary.operator_path.as_deref().map(|p| cfg.resolve(p)),
            mode: None,
            out_dir: cfg.resolve(&cfg.output_dir),
            csv: false,
        }
    }
}

pub const SNAPSHOT_FILE: &str = "snapshots.bin";
pub const SNAPSHOT_CSV: &str = "snapshots.csv";
pub const TRACE_FILE: &str = "traces.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// `tbc run`: marches the configured problem and writes snapshots,
/// traces and a summary into `opts.out_dir`.
pub fn cmd_run(cfg: &SimulationConfig, opts: &RunOptions) -> Result<RunSummary> {
    let mode = opts.mode.unwrap_or(cfg.boundary.mode);
    fs::create_dir_all(&opts.out_dir)?;
    let grid = cfg.spatial_grid()?;
    let snap_path = opts.out_dir.join(SNAPSHOT_FILE);
    let mut writer = if cfg.snapshot_stride > 0 {
        Some(SnapshotWriter::create(&snap_path, SnapshotHeader::new(&grid, cfg.snapshot_stride, cfg.steps))?)
    } else {
        None
    };
    let mut observe = |m: usize, t: f64, u: &[C64]| match writer.as_mut() {
        Some(w) => w.observe(m, t, u),
        None => Ok(()),
    };
    let mut summary = RunSummary {
        mode: mode.name().into(),
        config_hash: cfg.hash(),
        steps: cfg.steps,
        dt: cfg.dt(),
        dx: cfg.dx(),
        ..Default::default()
    };
    let out = match mode {
        BoundaryMode::TbcButterfly => {
            let vp = cfg.vector_potential()?;
            let op = match &opts.ops {
                Some(path) => {
                    let op = load_operator(path)?;
                    op.check_compatible(&cfg.time_grid()?, &vp.descriptor())?;
                    summary.operator_hash = Some(sha256_file(path)?);
                    op
                }
                None => {
                    let (op, rep) = build_operator(cfg)?;
                    summary.times.precompute = rep.seconds;
                    summary.warnings.push("no operator file given; operator built in process".into());
                    op
                }
            };
            let mut src = StreamingTbc::new(&op);
            run_tbc(&problem(cfg)?, &mut src, &mut observe)?
        }
        BoundaryMode::TbcDirect => {
            let engine = EntryEngine::new(cfg.vector_potential()?, cfg.time_grid()?, cfg.quad())?;
            let mut src = DirectTbc::new(engine);
            run_tbc(&problem(cfg)?, &mut src, &mut observe)?
        }
        BoundaryMode::Dirichlet => {
            let outer = cfg.dirichlet_grid()?;
            run_dirichlet_reference(&problem_on(cfg, outer)?, &grid, &mut observe)?
        }
    };
    if let Some(w) = writer {
        summary.snapshot_frames = w.frames();
        w.finish()?;
        if opts.csv {
            let tr = Trajectory::load(&snap_path)?;
            tr.write_csv(&mut BufWriter::new(fs::File::create(opts.out_dir.join(SNAPSHOT_CSV))?))?;
        }
    }
    write_traces_csv(&mut BufWriter::new(fs::File::create(opts.out_dir.join(TRACE_FILE))?), &out.traces, &cfg.time_grid()?)?;
    fill_summary(&mut summary, &out, cfg.dx());
    summary.write_json(opts.out_dir.join(SUMMARY_FILE))?;
    Ok(summary)
}

fn fill_summary(s: &mut RunSummary, out: &RunOutput, dx: f64) {
    s.final_l2 = (out.final_u.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
    s.final_max = out.final_u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    s.block_flops = out.timing.boundary.block_flops;
    let PhaseTimes { precompute, .. } = s.times;
    s.times = phase_times(out.timing.marching, &out.timing.boundary);
    s.times.precompute = precompute;
    s.warnings.extend(out.warnings.iter().cloned());
}

fn phase_times(marching: Duration, b: &BcTiming) -> PhaseTimes {
    PhaseTimes {
        precompute: 0.0,
        marching: secs(marching),
        tbc_obtain: secs(b.obtain()),
        block_apply: secs(b.block_apply),
        strip_rows: secs(b.strip_rows),
        robin: secs(b.robin),
        row_generation: secs(b.row_generation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Analytic,
    Dirichlet,
}

impl ReferenceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "dirichlet" => Ok(Self::Dirichlet),
            _ => Err(config_err(format!("unknown reference kind '{s}' (analytic|dirichlet)"))),
        }
    }
}

/// `tbc reference`: writes the reference trajectory on the interior grid
/// to `out` and returns the number of frames.
pub fn cmd_reference(cfg: &SimulationConfig, kind: ReferenceKind, half_width: Option<f64>, out: &Path) -> Result<usize> {
    if cfg.snapshot_stride == 0 {
        return Err(config_err("a reference needs output.snapshot_stride > 0"));
    }
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    let grid = cfg.spatial_grid()?;
    let mut w = SnapshotWriter::create(out, SnapshotHeader::new(&grid, cfg.snapshot_stride, cfg.steps))?;
    match kind {
        ReferenceKind::Analytic => {
            if !matches!(cfg.barrier, BarrierSpec::Zero) {
                return Err(config_err("the analytic reference needs binding_potential.kind = zero"));
            }
            let vp = cfg.vector_potential()?;
            let time = cfg.time_grid()?;
            let packet = wavepacket(cfg)?;
            let header = *w.header();
            for m in (0..=cfg.steps).filter(|&m| header.keeps(m)) {
                let t = time.t(m);
                let u = grid
                    .nodes()
                    .map(|x| packet.map_or(Ok(C64::new(0.0, 0.0)), |p| shifted_reference(&p, &vp, x, t)))
                    .collect::<Result<Vec<_>>>()?;
                w.push(t, &u)?;
            }
        }
        ReferenceKind::Dirichlet => {
            let mut c = cfg.clone();
            c.boundary.half_width = half_width.or(cfg.boundary.half_width);
            let outer = c.dirichlet_grid()?;
            let run = run_dirichlet_reference(&problem_on(&c, outer)?, &grid, |m, t, u| w.observe(m, t, u))?;
            for msg in &run.warnings {
                eprintln!("warning: {msg}");
            }
        }
    }
    let frames = w.frames();
    w.finish()?;
    Ok(frames)
}

/// Comparison of two trajectories over their common frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub max_l2: f64,
    /// `(t, L2 error)` per common frame.
    pub curve: Vec<(f64, f64)>,
}

/// Discrete L2 distance of `a` and `b` over their common frames and the
/// nodes both hold in `domain` (default: the overlap of the grids).
pub fn compare(a: &Trajectory, b: &Trajectory, domain: Option<(f64, f64)>) -> Result<CompareReport> {
    let (ha, hb) = (&a.header, &b.header);
    let dx = ha.dx;
    if ((ha.dx - hb.dx) / dx).abs() > 1e-12 {
        return Err(config_err(format!("grids differ: dx {:e} vs {:e}", ha.dx, hb.dx)));
    }
    let shift = (hb.x0 - ha.x0) / dx;
    if (shift - shift.round()).abs() > 1e-6 {
        return Err(config_err("grids are not aligned"));
    }
    let shift = shift.round() as i64;
    let (lo, hi) = domain.unwrap_or((-ha.x0.min(hb.x0), ha.x0.min(hb.x0)));
    let slack = 1e-9 * dx;
    let pairs: Vec<(usize, usize)> = (0..ha.points())
        .filter(|&j| (lo - slack..=hi + slack).contains(&ha.x(j)))
        .filter_map(|j| {
            let k = j as i64 + shift;
            (0..hb.points() as i64).contains(&k).then_some((j, k as usize))
        })
        .collect();
    if pairs.is_empty() {
        return Err(config_err(format!("no common nodes in [{lo}, {hi}]")));
    }
    let horizon = a.times.last().copied().unwrap_or(0.0).max(1e-300);
    let mut curve = Vec::new();
    let mut k = 0;
    for (i, &t) in a.times.iter().enumerate() {
        while k < b.times.len() && b.times[k] < t - 1e-9 * horizon {
            k += 1;
        }
        if k < b.times.len() && (b.times[k] - t).abs() <= 1e-9 * horizon {
            let (fa, fb) = (&a.frames[i], &b.frames[k]);
            let e = (pairs.iter().map(|&(j, k)| (fa[j] - fb[k]).norm_sqr()).sum::<f64>() * dx).sqrt();
            curve.push((t, e));
        }
    }
    if curve.is_empty() {
        return Err(config_err("trajectories share no snapshot times"));
    }
    Ok(CompareReport { max_l2: curve.iter().map(|c| c.1).fold(0.0, f64::max), curve })
}

/// Observed orders `log2(e_i / e_{i+1})` of a step-halving series.
pub fn convergence_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Timings of one `N` for both transparent modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub steps: usize,
    pub config_hash: String,
    pub butterfly: PhaseTimes,
    pub direct: PhaseTimes,
    pub butterfly_flops: u64,
    pub direct_flops: u64,
    /// Complex numbers in the compressed square blocks.
    pub compressed_entries: usize,
    /// Complex numbers a dense copy of the square blocks would hold.
    pub dense_entries: usize,
    pub storage_ratio: f64,
}

/// Growth of TBC-obtain time per step of the series.
pub fn growth(reports: &[BenchReport], pick: impl Fn(&BenchReport) -> f64) -> Vec<f64> {
    reports.windows(2).map(|w| pick(&w[1]) / pick(&w[0])).collect()
}

/// `tbc bench`: for each `N` (same horizon) builds the operator and marches
/// once per transparent mode.
pub fn cmd_bench(cfg: &SimulationConfig, steps: &[usize], mut log: impl FnMut(&str)) -> Result<Vec<BenchReport>> {
    let mut out = Vec::with_capacity(steps.len());
    for &n in steps {
        let mut c = cfg.clone();
        c.steps = n;
        c.validate()?;
        let p = problem(&c)?;
        log(&format!("N = {n}: precompute"));
        let (op, rep) = build_operator(&c)?;
        log(&format!("N = {n}: butterfly march ({:.1} s precompute)", rep.seconds));
        let mut src = StreamingTbc::new(&op);
        let bf = run_tbc(&p, &mut src, |_, _, _| Ok(()))?;
        drop(src);
        log(&format!("N = {n}: direct march"));
        let mut src = DirectTbc::new(EntryEngine::new(c.vector_potential()?, c.time_grid()?, c.quad())?);
        let dr = run_tbc(&p, &mut src, |_, _, _| Ok(()))?;
        let mut butterfly = phase_times(bf.timing.marching, &bf.timing.boundary);
        butterfly.precompute = rep.seconds;
        let storage = rep.storage;
        out.push(BenchReport {
            steps: n,
            config_hash: c.hash(),
            butterfly,
            direct: phase_times(dr.timing.marching, &dr.timing.boundary),
            butterfly_flops: bf.timing.boundary.block_flops,
            direct_flops: dr.timing.boundary.block_flops,
            compressed_entries: storage.s_blocks.factors + storage.d_blocks.factors,
            dense_entries: storage.s_blocks.dense + storage.d_blocks.dense,
            storage_ratio: storage.block_ratio(),
        });
    }
    Ok(out)
}
