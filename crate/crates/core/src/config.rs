//! Run configuration.
//!
//! The file format is line based. Each non-blank line is `section.key = value`;
//! `#` starts a comment that runs to the end of the line. Keys may appear
//! at most once and unknown keys are rejected. [`SimulationConfig::to_canonical`]
//! writes every key in byte order with floats in Rust's shortest
//! round-trip exponent form, so parsing and re-serializing is the identity.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `grid.x0` | half-width of the interior domain | required |
//! | `grid.J` / `grid.dx` | interval count or spacing (`J * dx = 2 x0`) | one required |
//! | `time.T` | final time | required |
//! | `time.N` / `time.dt` | step count or step (`N * dt = T`) | one required |
//! | `vector_potential.kind` | `zero`, `pulse` or `table` | `zero` |
//! | `vector_potential.A0`, `.omega`, `.T` | pulse parameters | required for `pulse` |
//! | `vector_potential.file` | two-column `t A` samples | required for `table` |
//! | `binding_potential.kind` | `zero`, `gaussian` or `table` | `zero` |
//! | `binding_potential.Vmax`, `.beta`, `.center` | Gaussian barrier | `center = 0` |
//! | `binding_potential.file` | two-column `x V` samples, linear in between | required for `table` |
//! | `initial.kind` | `zero` or `gaussian` | `gaussian` |
//! | `initial.alpha`, `.k`, `.mu` | wavepacket parameters | required for `gaussian` |
//! | `boundary.mode` | `tbc_butterfly`, `tbc_direct` or `dirichlet` | `tbc_butterfly` |
//! | `boundary.L` | Dirichlet half-width | `x0` |
//! | `boundary.operator_path` | operator container | none |
//! | `boundary.eps`, `.leaf`, `.max_rank`, `.quad_tol` | precompute settings | library defaults |
//! | `output.dir` | output directory | `out` |
//! | `output.snapshot_stride` | steps between snapshots, 0 for none | `0` |
//!
//! Relative file paths are resolved against the directory of the
//! configuration file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::compression::CompressionConfig;
use crate::error::{Error, Result};
use crate::kernel::{QuadConfig, TimeGrid};
use crate::solver::{BindingPotential, SpatialGrid};
use crate::vector_potential::{TabulatedField, VectorPotential};

/// Float formatting used in every canonical text: shortest exponent form
/// that parses back to the same value.
pub fn fmt_float(x: f64) -> String {
    format!("{x:e}")
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    TbcButterfly,
    TbcDirect,
    Dirichlet,
}

impl BoundaryMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::TbcButterfly => "tbc_butterfly",
            Self::TbcDirect => "tbc_direct",
            Self::Dirichlet => "dirichlet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tbc_butterfly" => Ok(Self::TbcButterfly),
            "tbc_direct" => Ok(Self::TbcDirect),
            "dirichlet" => Ok(Self::Dirichlet),
            _ => Err(config_err(format!("unknown boundary mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Zero,
    Pulse { a0: f64, omega: f64, duration: f64 },
    Table { file: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierSpec {
    Zero,
    Gaussian { vmax: f64, beta: f64, center: f64 },
    Table { file: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Zero,
    Gaussian { alpha: f64, k: f64, mu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub mode: BoundaryMode,
    pub half_width: Option<f64>,
    pub operator_path: Option<String>,
    pub eps: f64,
    pub leaf: usize,
    pub max_rank: usize,
    pub quad_tol: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        let c = CompressionConfig::default();
        Self {
            mode: BoundaryMode::TbcButterfly,
            half_width: None,
            operator_path: None,
            eps: c.eps,
            leaf: c.leaf,
            max_rank: c.max_rank,
            quad_tol: QuadConfig::default().tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub x0: f64,
    /// Number of grid intervals; nodes are `x_j = -x0 + j dx`, `j = 0..=J`.
    pub intervals: usize,
    pub horizon: f64,
    pub steps: usize,
    pub field: FieldSpec,
    pub barrier: BarrierSpec,
    pub initial: InitialSpec,
    pub boundary: BoundarySpec,
    pub output_dir: String,
    pub snapshot_stride: usize,
    /// Directory that relative paths are resolved against. Not serialized.
    pub base_dir: PathBuf,
}

impl SimulationConfig {
    /// A configuration with defaults for everything but the grids.
    pub fn new(x0: f64, intervals: usize, horizon: f64, steps: usize) -> Self {
        Self {
            x0,
            intervals,
            horizon,
            steps,
            field: FieldSpec::Zero,
            barrier: BarrierSpec::Zero,
            initial: InitialSpec::Zero,
            boundary: BoundarySpec::default(),
            output_dir: "out".into(),
            snapshot_stride: 0,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let cfg = Self::from_keys(&mut kv)?;
        if let Some(k) = kv.map.keys().next() {
            return Err(config_err(format!("unknown key '{k}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_keys(kv: &mut KeyValues) -> Result<Self> {
        let x0 = kv.req_f64("grid.x0")?;
        let intervals = resolve_count(kv, "grid.J", "grid.dx", 2.0 * x0)?;
        let horizon = kv.req_f64("time.T")?;
        let steps = resolve_count(kv, "time.N", "time.dt", horizon)?;

        let field = match kv.take("vector_potential.kind").as_deref().unwrap_or("zero") {
            "zero" => FieldSpec::Zero,
            "pulse" => FieldSpec::Pulse {
                a0: kv.req_f64("vector_potential.A0")?,
                omega: kv.req_f64("vector_potential.omega")?,
                duration: kv.req_f64("vector_potential.T")?,
            },
            "table" => FieldSpec::Table { file: kv.req("vector_potential.file")? },
            other => return Err(config_err(format!("unknown vector_potential.kind '{other}'"))),
        };
        let barrier = match kv.take("binding_potential.kind").as_deref().unwrap_or("zero") {
            "zero" => BarrierSpec::Zero,
            "gaussian" => BarrierSpec::Gaussian {
                vmax: kv.req_f64("binding_potential.Vmax")?,
                beta: kv.req_f64("binding_potential.beta")?,
                center: kv.opt_f64("binding_potential.center")?.unwrap_or(0.0),
            },
            "table" => BarrierSpec::Table { file: kv.req("binding_potential.file")? },
            other => return Err(config_err(format!("unknown binding_potential.kind '{other}'"))),
        };
        let initial = match kv.take("initial.kind").as_deref().unwrap_or("gaussian") {
            "zero" => InitialSpec::Zero,
            "gaussian" => InitialSpec::Gaussian {
                alpha: kv.req_f64("initial.alpha")?,
                k: kv.req_f64("initial.k")?,
                mu: kv.req_f64("initial.mu")?,
            },
            other => return Err(config_err(format!("unknown initial.kind '{other}'"))),
        };
        let d = BoundarySpec::default();
        let boundary = BoundarySpec {
            mode: kv.take("boundary.mode").map(|s| BoundaryMode::parse(&s)).transpose()?.unwrap_or(d.mode),
            half_width: kv.opt_f64("boundary.L")?,
            operator_path: kv.take("boundary.operator_path"),
            eps: kv.opt_f64("boundary.eps")?.unwrap_or(d.eps),
            leaf: kv.opt_usize("boundary.leaf")?.unwrap_or(d.leaf),
            max_rank: kv.opt_usize("boundary.max_rank")?.unwrap_or(d.max_rank),
            quad_tol: kv.opt_f64("boundary.quad_tol")?.unwrap_or(d.quad_tol),
        };
        Ok(Self {
            x0,
            intervals,
            horizon,
            steps,
            field,
            barrier,
            initial,
            boundary,
            output_dir: kv.take("output.dir").unwrap_or_else(|| "out".into()),
            snapshot_stride: kv.opt_usize("output.snapshot_stride")?.unwrap_or(0),
            base_dir: PathBuf::from("."),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(config_err("grid.x0 must be positive"));
        }
        if self.intervals < 16 {
            return Err(config_err(format!("grid.J must be at least 16, got {}", self.intervals)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.steps == 0 {
            return Err(config_err("time.T must be positive and time.N at least 1"));
        }
        if let Some(l) = self.boundary.half_width {
            if !(l >= self.x0) {
                return Err(config_err(format!("boundary.L = {l} is smaller than grid.x0")));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &self.field {
            FieldSpec::Pulse { a0, omega, duration } if !finite(&[*a0, *omega]) || !(*duration > 0.0) => {
                return Err(config_err("pulse needs finite A0, omega and positive T"))
            }
            _ => {}
        }
        match &self.barrier {
            BarrierSpec::Gaussian { vmax, beta, center } if !finite(&[*vmax, *center]) || !(*beta > 0.0) => {
                return Err(config_err("gaussian barrier needs finite Vmax, center and positive beta"))
            }
            _ => {}
        }
        if let InitialSpec::Gaussian { alpha, k, mu } = self.initial {
            if !(alpha > 0.0) || !finite(&[k, mu]) {
                return Err(config_err("initial.alpha must be positive, k and mu finite"));
            }
        }
        self.compression().validate().map_err(|e| config_err(e.to_string()))?;
        self.quad().validate().map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x0 / self.intervals as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_horizon(self.horizon, self.steps)
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.x0, self.intervals)
    }

    /// Grid on `[-L, L]` with the interior spacing, for Dirichlet runs.
    pub fn dirichlet_grid(&self) -> Result<SpatialGrid> {
        let l = self.boundary.half_width.unwrap_or(self.x0);
        let n = (2.0 * l / self.dx()).round() as usize;
        SpatialGrid::new(l, n)
    }

    pub fn quad(&self) -> QuadConfig {
        QuadConfig { tol: self.boundary.quad_tol, ..QuadConfig::default() }
    }

    pub fn compression(&self) -> CompressionConfig {
        CompressionConfig { eps: self.boundary.eps, leaf: self.boundary.leaf, max_rank: self.boundary.max_rank }
    }

    pub fn resolve(&self, file: &str) -> PathBuf {
        let p = Path::new(file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn vector_potential(&self) -> Result<VectorPotential> {
        match &self.field {
            FieldSpec::Zero => Ok(VectorPotential::Zero),
            FieldSpec::Pulse { a0, omega, duration } => {
                VectorPotential::pulse(*a0, *omega, *duration).map_err(|e| config_err(e.to_string()))
            }
            FieldSpec::Table { file } => {
                let text = read_file(&self.resolve(file))?;
                TabulatedField::parse(&text)
                    .map(VectorPotential::Tabulated)
                    .map_err(|e| config_err(e.to_string()))
            }
        }
    }

    pub fn binding_potential(&self) -> Result<BindingPotential> {
        match &self.barrier {
            BarrierSpec::Zero => Ok(BindingPotential::Zero),
            BarrierSpec::Gaussian { vmax, beta, center } => {
                Ok(BindingPotential::Gaussian { vmax: *vmax, beta: *beta, center: *center })
            }
            BarrierSpec::Table { file } => {
                let text = read_file(&self.resolve(file))?;
                BindingPotential::parse_table(&text).map_err(|e| config_err(e.to_string()))
            }
        }
    }

    /// Canonical text: all keys sorted, fixed float formatting.
    pub fn to_canonical(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("grid.x0", fmt_float(self.x0));
        m.insert("grid.J", self.intervals.to_string());
        m.insert("time.T", fmt_float(self.horizon));
        m.insert("time.N", self.steps.to_string());
        match &self.field {
            FieldSpec::Zero => {
                m.insert("vector_potential.kind", "zero".into());
            }
            FieldSpec::Pulse { a0, omega, duration } => {
                m.insert("vector_potential.kind", "pulse".into());
                m.insert("vector_potential.A0", fmt_float(*a0));
                m.insert("vector_potential.omega", fmt_float(*omega));
                m.insert("vector_potential.T", fmt_float(*duration));
            }
            FieldSpec::Table { file } => {
                m.insert("vector_potential.kind", "table".into());
                m.insert("vector_potential.file", file.clone());
            }
        }
        match &self.barrier {
            BarrierSpec::Zero => {
                m.insert("binding_potential.kind", "zero".into());
            }
            BarrierSpec::Gaussian { vmax, beta, center } => {
                m.insert("binding_potential.kind", "gaussian".into());
                m.insert("binding_potential.Vmax", fmt_float(*vmax));
                m.insert("binding_potential.beta", fmt_float(*beta));
                m.insert("binding_potential.center", fmt_float(*center));
            }
            BarrierSpec::Table { file } => {
                m.insert("binding_potential.kind", "table".into());
                m.insert("binding_potential.file", file.clone());
            }
        }
        match &self.initial {
            InitialSpec::Zero => {
                m.insert("initial.kind", "zero".into());
            }
            InitialSpec::Gaussian { alpha, k, mu } => {
                m.insert("initial.kind", "gaussian".into());
                m.insert("initial.alpha", fmt_float(*alpha));
                m.insert("initial.k", fmt_float(*k));
                m.insert("initial.mu", fmt_float(*mu));
            }
        }
        let b = &self.boundary;
        m.insert("boundary.mode", b.mode.name().into());
        if let Some(l) = b.half_width {
            m.insert("boundary.L", fmt_float(l));
        }
        if let Some(p) = &b.operator_path {
            m.insert("boundary.operator_path", p.clone());
        }
        m.insert("boundary.eps", fmt_float(b.eps));
        m.insert("boundary.leaf", b.leaf.to_string());
        m.insert("boundary.max_rank", b.max_rank.to_string());
        m.insert("boundary.quad_tol", fmt_float(b.quad_tol));
        m.insert("output.dir", self.output_dir.clone());
        m.insert("output.snapshot_stride", self.snapshot_stride.to_string());
        let mut out = String::new();
        for (k, v) in m {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))
}

/// Integer count from either the count key or the spacing key.
fn resolve_count(kv: &mut KeyValues, count_key: &str, step_key: &str, length: f64) -> Result<usize> {
    let count = kv.opt_usize(count_key)?;
    let step = kv.opt_f64(step_key)?;
    match (count, step) {
        (Some(n), None) => Ok(n),
        (count, Some(h)) => {
            if !(h > 0.0) {
                return Err(config_err(format!("{step_key} must be positive")));
            }
            let n = (length / h).round();
            if n < 1.0 || ((n * h - length) / length).abs() > 1e-9 {
                return Err(config_err(format!("{step_key} = {h} does not divide {length}")));
            }
            let n = n as usize;
            match count {
                Some(c) if c != n => Err(config_err(format!("{count_key} = {c} disagrees with {step_key} = {h}"))),
                _ => Ok(n),
            }
        }
        (None, None) => Err(config_err(format!("one of {count_key} or {step_key} is required"))),
    }
}

struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected 'key = value'", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() || !k.contains('.') {
                return Err(config_err(format!("line {}: malformed entry '{line}'", i + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key '{k}'", i + 1)));
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn req(&mut self, key: &str) -> Result<String> {
        self.take(key).ok_or_else(|| config_err(format!("missing key '{key}'")))
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|v| v.parse::<f64>().map_err(|_| config_err(format!("{key}: '{v}' is not a number"))))
            .transpose()
    }

    fn req_f64(&mut self, key: &str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| config_err(format!("missing key '{key}'")))
    }

    fn opt_usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take(key)
            .map(|v| v.parse::<usize>().map_err(|_| config_err(format!("{key}: '{v}' is not a count"))))
            .transpose()
    }
}
