//! Crank-Nicolson marching for `i u_t = -u_xx + i A(t) u_x + V(x) u`.
//!
//! The interior uses centered second differences. Each boundary row is a
//! Robin condition `alpha u + beta u_x = gamma` with a one-sided
//! three-point derivative; the entry that falls outside the tridiagonal
//! band is removed by a row operation with the neighbouring interior row.

use std::ops::Range;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;

use crate::boundary::{BcTiming, Robin, RobinSource, Side};
use crate::error::{contract, domain, Error, Result};
use crate::kernel::TimeGrid;
use crate::vector_potential::VectorPotential;

/// Uniform nodes `x_j = -x0 + j dx`, `j = 0..=J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x0: f64,
    intervals: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(x0: f64, intervals: usize) -> Result<Self> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(domain(format!("half-width must be positive, got {x0}")));
        }
        if intervals < 16 {
            return Err(domain(format!("need at least 16 grid intervals, got {intervals}")));
        }
        Ok(Self { x0, intervals, dx: 2.0 * x0 / intervals as f64 })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn points(&self) -> usize {
        self.intervals + 1
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.intervals {
            self.x0
        } else {
            -self.x0 + j as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points()).map(|j| self.x(j))
    }

    /// Node range of `self` that coincides with `inner`, which must share
    /// the spacing and be centered on the same point.
    pub fn restriction(&self, inner: &SpatialGrid) -> Result<Range<usize>> {
        let same_dx = ((self.dx - inner.dx) / inner.dx).abs() < 1e-9;
        let shift = (self.x0 - inner.x0) / self.dx;
        let off = shift.round();
        if !same_dx || (shift - off).abs() > 1e-6 || off < 0.0 {
            return Err(contract("grids are not nested with a common spacing"));
        }
        let off = off as usize;
        Ok(off..off + inner.points())
    }

    /// Nodes of `fine` at the positions of `self`'s nodes, for a grid
    /// refined by an integer factor.
    pub fn coarse_nodes_in(&self, fine: &SpatialGrid) -> Result<(usize, usize)> {
        let ratio = self.dx / fine.dx;
        let r = ratio.round();
        if r < 1.0 || (ratio - r).abs() > 1e-6 {
            return Err(contract("fine grid spacing does not divide the coarse spacing"));
        }
        let shift = (fine.x0 - self.x0) / fine.dx;
        let off = shift.round();
        if (shift - off).abs() > 1e-6 || off < 0.0 {
            return Err(contract("coarse grid is not aligned with the fine grid"));
        }
        Ok((off as usize, r as usize))
    }
}

/// External potential `V(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BindingPotential {
    Zero,
    Gaussian { vmax: f64, beta: f64, center: f64 },
    /// Linear interpolation of samples, zero outside the table.
    Table { x: Vec<f64>, v: Vec<f64> },
}

impl BindingPotential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Gaussian { vmax, beta, center } => {
                let d = x - center;
                vmax * (-d * d / (2.0 * beta * beta)).exp()
            }
            Self::Table { x: xs, v } => {
                if x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
                let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                v[i - 1] + w * (v[i] - v[i - 1])
            }
        }
    }

    pub fn parse_table(text: &str) -> Result<Self> {
        let mut x = Vec::new();
        let mut v = Vec::new();
        for line in text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty()) {
            let cols: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| domain(format!("bad number '{s}' in potential table"))))
                .collect::<Result<_>>()?;
            if cols.len() != 2 {
                return Err(domain(format!("potential table line '{line}' needs two columns")));
            }
            x.push(cols[0]);
            v.push(cols[1]);
        }
        if x.len() < 2 || x.windows(2).any(|w| !(w[1] > w[0])) || v.iter().any(|a| !a.is_finite()) {
            return Err(domain("potential table needs at least two increasing finite samples"));
        }
        Ok(Self::Table { x, v })
    }

    pub fn sample(&self, grid: &SpatialGrid) -> Vec<f64> {
        grid.nodes().map(|x| self.eval(x)).collect()
    }

    fn scale(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Gaussian { vmax, .. } => vmax.abs(),
            Self::Table { v, .. } => v.iter().fold(0.0, |m, a| m.max(a.abs())),
        }
    }

    /// `|V(+-x0)| <= 1e-14 max |V|`, needed for the boundary conditions to
    /// be exact.
    pub fn check_support(&self, x0: f64) -> Result<()> {
        let edge = self.eval(-x0).abs().max(self.eval(x0).abs());
        if edge > 1e-14 * self.scale() {
            return Err(domain(format!("binding potential is {edge:e} at the boundary; it must vanish outside the domain")));
        }
        Ok(())
    }
}

/// Everything a march needs except the boundary closure.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub field: VectorPotential,
    pub potential: BindingPotential,
    pub initial: Vec<C64>,
}

impl Problem {
    pub fn new(
        grid: SpatialGrid,
        time: TimeGrid,
        field: VectorPotential,
        potential: BindingPotential,
        initial: impl Fn(f64) -> C64,
    ) -> Self {
        let initial = grid.nodes().map(initial).collect();
        Self { grid, time, field, potential, initial }
    }

    /// Same problem on another spatial grid (initial data resampled).
    pub fn regrid(&self, grid: SpatialGrid, initial: impl Fn(f64) -> C64) -> Self {
        Self::new(grid, self.time, self.field.clone(), self.potential.clone(), initial)
    }

    /// Same problem with a different time grid.
    pub fn retime(&self, time: TimeGrid) -> Self {
        Self { time, ..self.clone() }
    }
}

/// Boundary closure for one march.
pub enum Closure<'a> {
    Transparent(&'a mut dyn RobinSource),
    Dirichlet,
}

/// Boundary values and derivatives per step (index `m - 1` holds step `m`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceStream {
    pub u: Vec<C64>,
    pub v: Vec<C64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Traces {
    pub left: TraceStream,
    pub right: TraceStream,
}

impl Traces {
    pub fn side(&self, side: Side) -> &TraceStream {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// One Crank-Nicolson march in progress.
pub struct CrankNicolson {
    grid: SpatialGrid,
    time: TimeGrid,
    field: VectorPotential,
    v: Vec<f64>,
    u: Vec<C64>,
    m: usize,
    rhs: Vec<C64>,
    lower: Vec<C64>,
    diag: Vec<C64>,
    upper: Vec<C64>,
    scratch: Vec<C64>,
    traces: Traces,
    marching: Duration,
}

impl CrankNicolson {
    pub fn new(p: &Problem) -> Result<Self> {
        let n = p.grid.points();
        if p.initial.len() != n {
            return Err(contract(format!("initial data has {} values for {n} nodes", p.initial.len())));
        }
        if p.initial.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(domain("initial data is not finite"));
        }
        let norm = (p.initial.iter().map(|z| z.norm_sqr()).sum::<f64>() * p.grid.dx()).sqrt();
        let edge = p.initial[0].norm().max(p.initial[n - 1].norm());
        if edge > 1e-13 * norm {
            return Err(domain(format!(
                "initial data is {edge:e} at the boundary; it must vanish outside the domain"
            )));
        }
        p.potential.check_support(p.grid.x0())?;
        let zeros = vec![C64::default(); n];
        Ok(Self {
            grid: p.grid,
            time: p.time,
            field: p.field.clone(),
            v: p.potential.sample(&p.grid),
            u: p.initial.clone(),
            m: 0,
            rhs: zeros.clone(),
            lower: zeros.clone(),
            diag: zeros.clone(),
            upper: zeros.clone(),
            scratch: zeros,
            traces: Traces::default(),
            marching: Duration::ZERO,
        })
    }

    /// Completed steps.
    /// Steps of the full march.
    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    pub fn step_index(&self) -> usize {
        self.m
    }

    pub fn t(&self) -> f64 {
        self.time.t(self.m)
    }

    pub fn u(&self) -> &[C64] {
        &self.u
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn traces(&self) -> &Traces {
        &self.traces
    }

    /// Time spent assembling and solving, excluding boundary-condition work.
    pub fn marching_time(&self) -> Duration {
        self.marching
    }

    /// Advances one step.
    pub fn step(&mut self, closure: &mut Closure) -> Result<()> {
        if self.m >= self.time.steps() {
            return Err(contract("march is already at the final time"));
        }
        let m = self.m + 1;
        let a_new = self.field.eval_a(self.time.t(m))?;
        let (left, right) = match closure {
            Closure::Transparent(src) => {
                (Some(src.robin(Side::Left, m, a_new)?), Some(src.robin(Side::Right, m, a_new)?))
            }
            Closure::Dirichlet => (None, None),
        };
        let start = Instant::now();
        let a_old = self.field.eval_a(self.time.t(self.m))?;
        self.assemble(a_old, a_new);
        let jn = self.grid.intervals();
        match (left, right) {
            (Some(l), Some(rt)) => {
                self.close_left(l);
                self.close_right(rt);
                thomas(&self.lower, &self.diag, &self.upper, &mut self.rhs, &mut self.scratch, m)?;
                self.u.copy_from_slice(&self.rhs);
            }
            _ => {
                let inner = 1..jn;
                // the boundary values are fixed at zero
                thomas(
                    &self.lower[inner.clone()],
                    &self.diag[inner.clone()],
                    &self.upper[inner.clone()],
                    &mut self.rhs[inner.clone()],
                    &mut self.scratch[inner.clone()],
                    m,
                )?;
                self.u[inner.clone()].copy_from_slice(&self.rhs[inner]);
                self.u[0] = C64::default();
                self.u[jn] = C64::default();
            }
        }
        self.marching += start.elapsed();
        self.m = m;
        if let Closure::Transparent(src) = closure {
            for (side, robin, j) in [(Side::Left, left.unwrap(), 0), (Side::Right, right.unwrap(), jn)] {
                let u = self.u[j];
                let v = (robin.gamma - robin.alpha * u) / robin.beta;
                src.push(side, u, v, a_new)?;
                let t = match side {
                    Side::Left => &mut self.traces.left,
                    Side::Right => &mut self.traces.right,
                };
                t.u.push(u);
                t.v.push(v);
            }
        }
        Ok(())
    }

    /// Interior rows `i(u' - u) / dt = (H' u' + H u) / 2`, boundary rows as
    /// identity placeholders.
    fn assemble(&mut self, a_old: f64, a_new: f64) {
        let dx = self.grid.dx();
        let h = 0.5 * self.time.dt();
        let inv2 = 1.0 / (dx * dx);
        let adv_new = C64::new(0.0, a_new / (2.0 * dx));
        let adv_old = C64::new(0.0, a_old / (2.0 * dx));
        let i = C64::i();
        let jn = self.grid.intervals();
        let u = &self.u;
        for j in 1..jn {
            self.lower[j] = h * (inv2 + adv_new);
            self.upper[j] = h * (inv2 - adv_new);
            self.diag[j] = i - h * (2.0 * inv2 + self.v[j]);
            // H u_j with H = -d_xx + i A d_x + V
            let hu = -(u[j + 1] - 2.0 * u[j] + u[j - 1]) * inv2 + adv_old * (u[j + 1] - u[j - 1]) + self.v[j] * u[j];
            self.rhs[j] = i * u[j] + h * hu;
        }
        for j in [0, jn] {
            self.lower[j] = C64::default();
            self.upper[j] = C64::default();
            self.diag[j] = C64::new(1.0, 0.0);
            self.rhs[j] = C64::default();
        }
    }

    /// `alpha u_0 + beta (-3 u_0 + 4 u_1 - u_2) / (2 dx) = gamma`, with the
    /// `u_2` term removed using row 1.
    fn close_left(&mut self, rb: Robin) {
        let b = rb.beta / (2.0 * self.grid.dx());
        let (c0, c1, c2) = (rb.alpha - 3.0 * b, 4.0 * b, -b);
        let f = c2 / self.upper[1];
        self.diag[0] = c0 - f * self.lower[1];
        self.upper[0] = c1 - f * self.diag[1];
        self.lower[0] = C64::default();
        self.rhs[0] = rb.gamma - f * self.rhs[1];
    }

    /// `alpha u_J + beta (3 u_J - 4 u_{J-1} + u_{J-2}) / (2 dx) = gamma`.
    fn close_right(&mut self, rb: Robin) {
        let jn = self.grid.intervals();
        let b = rb.beta / (2.0 * self.grid.dx());
        let (c0, c1, c2) = (rb.alpha + 3.0 * b, -4.0 * b, b);
        let f = c2 / self.lower[jn - 1];
        self.diag[jn] = c0 - f * self.upper[jn - 1];
        self.lower[jn] = c1 - f * self.diag[jn - 1];
        self.upper[jn] = C64::default();
        self.rhs[jn] = rb.gamma - f * self.rhs[jn - 1];
    }
}

/// Solves a tridiagonal system in place (`rhs` becomes the solution).
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn thomas(lower: &[C64], diag: &[C64], upper: &[C64], rhs: &mut [C64], scratch: &mut [C64], step: usize) -> Result<()> {
    let n = diag.len();
    let mut piv = diag[0];
    if piv.norm() < 1e-300 {
        return Err(Error::SingularSystem { step });
    }
    scratch[0] = upper[0] / piv;
    rhs[0] /= piv;
    for j in 1..n {
        piv = diag[j] - lower[j] * scratch[j - 1];
        if piv.norm() < 1e-300 {
            return Err(Error::SingularSystem { step });
        }
        scratch[j] = if j + 1 < n { upper[j] / piv } else { C64::default() };
        rhs[j] = (rhs[j] - lower[j] * rhs[j - 1]) / piv;
    }
    for j in (0..n - 1).rev() {
        let next = rhs[j + 1];
        rhs[j] -= scratch[j] * next;
    }
    Ok(())
}

/// Wall-clock split of a march.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunTiming {
    pub marching: Duration,
    pub boundary: BcTiming,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub steps: usize,
    pub traces: Traces,
    pub timing: RunTiming,
    pub final_u: Vec<C64>,
    /// Largest `|u|` next to the outer boundary (Dirichlet runs).
    pub edge_max: f64,
    pub warnings: Vec<String>,
}

/// Marches all steps with transparent boundaries; `observe(m, t, u)` sees
/// the initial state and every completed step.
pub fn run_tbc(
    p: &Problem,
    source: &mut dyn RobinSource,
    mut observe: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<RunOutput> {
    if source.steps() < p.time.steps() {
        return Err(Error::OperatorMismatch(format!(
            "boundary operator covers {} steps, run needs {}",
            source.steps(),
            p.time.steps()
        )));
    }
    let mut cn = CrankNicolson::new(p)?;
    observe(0, 0.0, cn.u())?;
    let mut closure = Closure::Transparent(source);
    for _ in 0..p.time.steps() {
        cn.step(&mut closure)?;
        observe(cn.step_index(), cn.t(), cn.u())?;
    }
    let Closure::Transparent(source) = closure else { unreachable!() };
    Ok(RunOutput {
        steps: cn.step_index(),
        traces: cn.traces.clone(),
        timing: RunTiming { marching: cn.marching_time(), boundary: source.timing() },
        final_u: cn.u.clone(),
        edge_max: 0.0,
        warnings: Vec::new(),
    })
}

/// Support threshold for the a-posteriori check of Dirichlet runs.
pub const DIRICHLET_EDGE_TOL: f64 = 1e-13;

/// Marches with `u = 0` at the ends of `p.grid`; `observe` receives the
/// values on `inner`, a nested sub-grid.
pub fn run_dirichlet_reference(
    p: &Problem,
    inner: &SpatialGrid,
    mut observe: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<RunOutput> {
    let range = p.grid.restriction(inner)?;
    let mut cn = CrankNicolson::new(p)?;
    let jn = p.grid.intervals();
    let edge = |u: &[C64]| u[1].norm().max(u[jn - 1].norm());
    let mut edge_max = edge(cn.u());
    observe(0, 0.0, &cn.u()[range.clone()])?;
    let mut closure = Closure::Dirichlet;
    for _ in 0..p.time.steps() {
        cn.step(&mut closure)?;
        edge_max = edge_max.max(edge(cn.u()));
        observe(cn.step_index(), cn.t(), &cn.u()[range.clone()])?;
    }
    let mut warnings = Vec::new();
    if edge_max > DIRICHLET_EDGE_TOL {
        warnings.push(format!(
            "solution reached {edge_max:e} next to x = +-{}; the Dirichlet domain may be too small",
            p.grid.x0()
        ));
    }
    Ok(RunOutput {
        steps: cn.step_index(),
        traces: Traces::default(),
        timing: RunTiming { marching: cn.marching_time(), boundary: BcTiming::default() },
        final_u: cn.u[range].to_vec(),
        edge_max,
        warnings,
    })
}

/// `sqrt(dx sum |a_j - b_j|^2)` over the nodes in `nodes`.
pub fn l2_distance(a: &[C64], b: &[C64], dx: f64, nodes: Range<usize>) -> f64 {
    (a[nodes.clone()].iter().zip(&b[nodes]).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * dx).sqrt()
}
