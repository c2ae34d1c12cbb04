//! Free and vector-potential Green's functions and the hat-basis matrix
//! entries of the boundary single layer `S` and principal-value double
//! layer `D*`.
//!
//! Entries are assembled from per-interval moments: on `[t_k, t_{k+1}]` the
//! hat functions `eta_k` and `eta_{k+1}` are the two linear weights
//! `(t_{k+1} - s)/dt` and `(s - t_k)/dt`, so one pass over an interval
//! yields its contribution to two neighbouring columns of both matrices.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64 as C64;

use crate::error::{domain, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::trig;
use crate::vector_potential::VectorPotential;

/// `1 / sqrt(4 pi i)` on the principal branch.
pub fn single_layer_prefactor() -> C64 {
    C64::from_polar(1.0 / (4.0 * PI).sqrt(), -FRAC_PI_4)
}

/// `sqrt(i) / (4 sqrt(pi))`.
pub fn double_layer_prefactor() -> C64 {
    C64::from_polar(1.0 / (4.0 * PI.sqrt()), FRAC_PI_4)
}

/// Uniform time grid `t_n = n dt`, `n = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, dt: f64) -> Result<Self> {
        if steps == 0 {
            return Err(domain("time grid needs at least one step"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(domain(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { steps, dt })
    }

    pub fn from_horizon(horizon: f64, steps: usize) -> Result<Self> {
        Self::new(steps, horizon / steps as f64)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Absolute tolerance per matrix entry.
    pub tol: f64,
    /// Bisection depth allowed beyond the phase-based initial split.
    pub max_subdiv: usize,
    /// Gauss-Legendre points per panel.
    pub base_order: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_subdiv: 16, base_order: 16 }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(domain("quadrature tolerance must be positive"));
        }
        if !(8..=MAX_ORDER).contains(&self.base_order) {
            return Err(domain(format!("quadrature base order must be in 8..={MAX_ORDER}")));
        }
        Ok(())
    }
}

/// Free-particle Green's function `exp(i x^2 / 4t) / sqrt(4 pi i t)`.
pub fn kernel_k(x: f64, t: f64) -> Result<C64> {
    if !(t > 0.0) {
        return Err(domain(format!("free kernel needs t > 0, got {t}")));
    }
    Ok(C64::from_polar(1.0 / (4.0 * PI * t).sqrt(), x * x / (4.0 * t) - FRAC_PI_4))
}

fn check_causal(t: f64, s: f64) -> Result<()> {
    if !(s >= 0.0 && s < t) {
        return Err(domain(format!("boundary kernels need 0 <= s < t, got t={t}, s={s}")));
    }
    Ok(())
}

/// `K_A(0, t, s)`.
pub fn kernel_s_boundary(vp: &VectorPotential, t: f64, s: f64) -> Result<C64> {
    check_causal(t, s)?;
    let tau = t - s;
    let d = vp.phi_diff(t, s);
    Ok(C64::from_polar(1.0 / (4.0 * PI * tau).sqrt(), d * d / (4.0 * tau) - FRAC_PI_4))
}

/// Principal-value double-layer kernel at the boundary point.
pub fn kernel_dstar_boundary(vp: &VectorPotential, t: f64, s: f64) -> Result<C64> {
    check_causal(t, s)?;
    let tau = t - s;
    let d = vp.phi_diff(t, s);
    Ok(double_layer_prefactor() * d / tau.powf(1.5) * C64::from_polar(1.0, d * d / (4.0 * tau)))
}

/// Contributions of one time interval `[t_k, t_{k+1}]` to row `m`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalMoments {
    /// Against the falling weight, i.e. column `k`.
    pub s_left: C64,
    /// Against the rising weight, i.e. column `k + 1`.
    pub s_right: C64,
    pub d_left: C64,
    pub d_right: C64,
}

#[derive(Default, Clone, Copy)]
struct PanelSums {
    s_all: C64,
    s_rise: C64,
    d_all: C64,
    d_rise: C64,
}

impl std::ops::AddAssign for PanelSums {
    fn add_assign(&mut self, o: Self) {
        self.s_all += o.s_all;
        self.s_rise += o.s_rise;
        self.d_all += o.d_all;
        self.d_rise += o.d_rise;
    }
}

/// Computes entries of `S_N` and `D_N` for one field and time grid.
///
/// The engine caches `phi` and `A` on the grid and `phi` at the Gauss
/// nodes of every interval, so repeated row and block evaluations avoid
/// re-evaluating the field.
#[derive(Debug, Clone)]
pub struct EntryEngine {
    vp: VectorPotential,
    grid: TimeGrid,
    quad: QuadConfig,
    rule: GaussLegendre,
    tail_abs: Vec<f64>,
    phi_grid: Vec<f64>,
    a_grid: Vec<f64>,
    phi_nodes: Option<Vec<f64>>,
}

impl EntryEngine {
    pub fn new(vp: VectorPotential, grid: TimeGrid, quad: QuadConfig) -> Result<Self> {
        let mut e = Self::uncached(vp, grid, quad)?;
        let order = e.rule.order();
        let half = 0.5 * grid.dt();
        let mut nodes = Vec::with_capacity(grid.steps() * order);
        for k in 0..grid.steps() {
            let mid = grid.t(k) + half;
            nodes.extend(e.rule.nodes().iter().map(|&x| e.vp.phi_unchecked(mid + half * x)));
        }
        e.phi_nodes = Some(nodes);
        Ok(e)
    }

    /// Engine without the per-node cache; cheap to build for a handful of
    /// entries.
    pub fn uncached(vp: VectorPotential, grid: TimeGrid, quad: QuadConfig) -> Result<Self> {
        quad.validate()?;
        let rule = GaussLegendre::new(quad.base_order);
        let (t0, t1) = rule.tail_weights();
        let tail_abs = t0.iter().zip(t1).map(|(a, b)| a.abs() + b.abs()).collect();
        let phi_grid = (0..=grid.steps()).map(|n| vp.phi_unchecked(grid.t(n))).collect();
        let a_grid = (0..=grid.steps()).map(|n| vp.a_unchecked(grid.t(n))).collect();
        Ok(Self { vp, grid, quad, rule, tail_abs, phi_grid, a_grid, phi_nodes: None })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn quad(&self) -> &QuadConfig {
        &self.quad
    }

    pub fn potential(&self) -> &VectorPotential {
        &self.vp
    }

    /// `A(t_n)`.
    pub fn a_at(&self, n: usize) -> f64 {
        self.a_grid[n]
    }

    fn check_entry(&self, m: usize, n: usize) -> Result<()> {
        if n == 0 || n > m || m > self.grid.steps() {
            return Err(domain(format!(
                "entry ({m}, {n}) outside 1 <= n <= m <= {}",
                self.grid.steps()
            )));
        }
        Ok(())
    }

    pub fn entry_s(&self, m: usize, n: usize) -> Result<C64> {
        self.entry_pair(m, n).map(|p| p.0)
    }

    pub fn entry_d(&self, m: usize, n: usize) -> Result<C64> {
        self.entry_pair(m, n).map(|p| p.1)
    }

    /// `(S_N(m,n), D_N(m,n))`.
    pub fn entry_pair(&self, m: usize, n: usize) -> Result<(C64, C64)> {
        self.check_entry(m, n)?;
        let rising = self.interval(m, n - 1)?;
        let mut s = rising.s_right;
        let mut d = rising.d_right;
        if n < m {
            let falling = self.interval(m, n)?;
            s += falling.s_left;
            d += falling.d_left;
        }
        Ok((s, d))
    }

    /// Row `m` of both matrices: `s_out[n-1] = S_N(m, n)` for `n = 1..=m`.
    pub fn row(&self, m: usize, s_out: &mut [C64], d_out: &mut [C64]) -> Result<()> {
        self.check_entry(m, m)?;
        assert!(s_out.len() >= m && d_out.len() >= m);
        s_out[..m].fill(C64::new(0.0, 0.0));
        d_out[..m].fill(C64::new(0.0, 0.0));
        for k in 0..m {
            let mo = self.interval(m, k)?;
            if k > 0 {
                s_out[k - 1] += mo.s_left;
                d_out[k - 1] += mo.d_left;
            }
            s_out[k] += mo.s_right;
            d_out[k] += mo.d_right;
        }
        Ok(())
    }

    /// Entries for rows `m` in `rows` and columns `n` in `cols` (1-based,
    /// half-open ranges) with every column strictly below every row.
    /// Output is column-major with leading dimension `rows.len()`.
    pub fn fill_block(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
        s_out: &mut [C64],
        d_out: &mut [C64],
    ) -> Result<()> {
        let nr = rows.len();
        let nc = cols.len();
        assert!(cols.start >= 1 && cols.end <= rows.start, "block must lie below the diagonal");
        assert!(s_out.len() >= nr * nc && d_out.len() >= nr * nc);
        for (i, m) in rows.enumerate() {
            let mut carry_s = C64::new(0.0, 0.0);
            let mut carry_d = C64::new(0.0, 0.0);
            // interval k feeds column k (falling) and column k+1 (rising)
            for k in cols.start - 1..cols.end {
                let mo = self.interval(m, k)?;
                if k >= cols.start {
                    let j = k - cols.start;
                    s_out[j * nr + i] = carry_s + mo.s_left;
                    d_out[j * nr + i] = carry_d + mo.d_left;
                }
                carry_s = mo.s_right;
                carry_d = mo.d_right;
            }
        }
        Ok(())
    }

    /// Moments of interval `[t_k, t_{k+1}]` for row `m` (`k < m`).
    pub fn interval(&self, m: usize, k: usize) -> Result<IntervalMoments> {
        debug_assert!(k < m && m <= self.grid.steps());
        let tol = 0.5 * self.quad.tol;
        let sums = if k + 1 == m {
            self.singular_interval(m, tol)
        } else {
            self.regular_interval(m, k, tol)
        }
        .ok_or_else(|| Error::Quadrature { m, n: k + 1, tol: self.quad.tol })?;
        let cs = single_layer_prefactor();
        let cd = double_layer_prefactor();
        Ok(IntervalMoments {
            s_left: cs * (sums.s_all - sums.s_rise),
            s_right: cs * sums.s_rise,
            d_left: cd * (sums.d_all - sums.d_rise),
            d_right: cd * sums.d_rise,
        })
    }

    fn phase_presplit(&self, m: usize, k: usize) -> usize {
        let tm = self.grid.t(m);
        let pm = self.phi_grid[m];
        let theta = |j: usize| {
            let tau = tm - self.grid.t(j);
            let d = pm - self.phi_grid[j];
            let q = d / (2.0 * tau);
            (d * d / (4.0 * tau), (q * (q - self.a_grid[j])).abs())
        };
        let (th0, dth0) = theta(k);
        let (th1, dth1) = theta(k + 1);
        let var = (th1 - th0).abs().max(self.grid.dt() * dth0.max(dth1));
        ((var / PI).ceil() as usize).clamp(1, 1 << 20)
    }

    fn regular_interval(&self, m: usize, k: usize, tol: f64) -> Option<PanelSums> {
        let dt = self.grid.dt();
        let a = self.grid.t(k);
        let tm = self.grid.t(m);
        let pm = self.phi_grid[m];
        let vp = &self.vp;
        // close to the diagonal the difference of phi values cancels badly,
        // and t_m - s would carry rounding of order eps t_m; integrate in the
        // lag instead
        if m - k <= NEAR_INTERVALS {
            let presplit = self.phase_presplit(m, k);
            let far = (m - k) as f64 * dt;
            return self.adaptive((m - k - 1) as f64 * dt, far, presplit, tol, |lo, hi| {
                self.panel(lo, hi, |tau| {
                    let d = vp.phi_lag(tm, tau);
                    regular_node(tau, d, (far - tau) / dt, 8.0 * f64::EPSILON * d.abs() + vp.phi_lag_rounding(tm, tau))
                })
            });
        }
        // the bound grows with t, so phi(t_m) bounds both terms
        let round_m = vp.phi_rounding(tm);
        let presplit = self.phase_presplit(m, k);
        if presplit == 1 {
            if let Some(cache) = &self.phi_nodes {
                let order = self.rule.order();
                let phis = &cache[k * order..(k + 1) * order];
                let mut i = 0;
                let out = self.panel(a, a + dt, |s| {
                    let p = phis[i];
                    i += 1;
                    regular_node(tm - s, pm - p, (s - a) / dt, 2.0 * round_m)
                });
                if let Some(sums) = self.accept(&out, tol) {
                    return Some(sums);
                }
            }
        }
        self.adaptive(a, a + dt, presplit, tol, |lo, hi| {
            self.panel(lo, hi, |s| {
                let p = vp.phi_unchecked(s);
                regular_node(tm - s, pm - p, (s - a) / dt, 2.0 * round_m)
            })
        })
    }

    fn singular_interval(&self, m: usize, tol: f64) -> Option<PanelSums> {
        let dt = self.grid.dt();
        let tm = self.grid.t(m);
        let root = dt.sqrt();
        let d_end = self.vp.phi_lag(tm, dt);
        let presplit = ((d_end * d_end / (4.0 * dt) / PI).ceil() as usize).clamp(1, 1 << 20);
        let vp = &self.vp;
        self.adaptive(0.0, root, presplit, tol, |lo, hi| {
            self.panel(lo, hi, |sigma| {
                let tau = sigma * sigma;
                let d = vp.phi_lag(tm, tau);
                let theta = 0.25 * d * d / tau;
                // ds = 2 sigma dsigma cancels the 1/sqrt(tau) singularity
                let dd = 8.0 * f64::EPSILON * d.abs() + vp.phi_lag_rounding(tm, tau);
                let dtheta = d.abs() * dd / (2.0 * tau) + 4.0 * f64::EPSILON * theta;
                Node { theta, amp: 2.0, ratio: d / tau, rise: 1.0 - tau / dt, dtheta, dratio: dd / tau }
            })
        })
    }

    fn accept(&self, out: &PanelOut, allowed: f64) -> Option<PanelSums> {
        let cs = 1.0 / (4.0 * PI).sqrt();
        let ok_s = out.err_s <= allowed.max(out.floor_s) / cs;
        let ok_d = out.err_d <= allowed.max(out.floor_d) / cs;
        (ok_s && ok_d).then_some(out.sums)
    }

    fn adaptive(
        &self,
        a: f64,
        b: f64,
        presplit: usize,
        tol: f64,
        panel: impl Fn(f64, f64) -> PanelOut,
    ) -> Option<PanelSums> {
        let len = b - a;
        let step = len / presplit as f64;
        let mut stack: Vec<(f64, f64, usize)> = (0..presplit)
            .rev()
            .map(|j| (a + step * j as f64, if j + 1 == presplit { b } else { a + step * (j + 1) as f64 }, 0))
            .collect();
        let mut total = PanelSums::default();
        while let Some((lo, hi, depth)) = stack.pop() {
            let out = panel(lo, hi);
            if let Some(sums) = self.accept(&out, tol * (hi - lo) / len) {
                total += sums;
            } else if depth >= self.quad.max_subdiv {
                return None;
            } else {
                let mid = 0.5 * (lo + hi);
                stack.push((mid, hi, depth + 1));
                stack.push((lo, mid, depth + 1));
            }
        }
        Some(total)
    }

    /// One Gauss panel on `[lo, hi]`; `node(x)` evaluates the integrand at
    /// the mapped node `x`.
    #[inline]
    fn panel(&self, lo: f64, hi: f64, mut node: impl FnMut(f64) -> Node) -> PanelOut {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let n = self.rule.order();
        let x = self.rule.nodes();
        let w = self.rule.weights();
        let (t0, t1) = self.rule.tail_weights();
        let spread = &self.tail_abs[..n];

        // gather samples first so the arithmetic below vectorizes
        let mut theta = [0.0; MAX_ORDER];
        let mut amp = [0.0; MAX_ORDER];
        let mut ratio = [0.0; MAX_ORDER];
        let mut rise = [0.0; MAX_ORDER];
        let mut fs = 0.0;
        let mut fd = 0.0;
        for i in 0..n {
            let v = node(mid + half * x[i]);
            theta[i] = v.theta;
            amp[i] = v.amp;
            ratio[i] = v.ratio;
            rise[i] = v.rise;
            // worst-case rounding of the node value seen by the two tail sums
            let e = spread[i] * v.amp * (v.dtheta + f64::EPSILON);
            fs += e;
            fd += e * v.ratio.abs() + spread[i] * v.amp * v.dratio;
        }
        let mut sn = [0.0; MAX_ORDER];
        let mut cn = [0.0; MAX_ORDER];
        trig::sincos_slice(&theta[..n], &mut sn[..n], &mut cn[..n]);

        let mut acc = [0.0; 16];
        for i in 0..n {
            let re = cn[i] * amp[i];
            let im = sn[i] * amp[i];
            let dre = re * ratio[i];
            let dim = im * ratio[i];
            let wr = w[i] * rise[i];
            let row = [
                re * w[i], im * w[i], re * wr, im * wr,
                dre * w[i], dim * w[i], dre * wr, dim * wr,
                re * t0[i], im * t0[i], re * t1[i], im * t1[i],
                dre * t0[i], dim * t0[i], dre * t1[i], dim * t1[i],
            ];
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
        let c = |j: usize| C64::new(acc[j], acc[j + 1]) * half;
        let norm = |j: usize| (acc[j] * acc[j] + acc[j + 1] * acc[j + 1]).sqrt();
        let cs = 1.0 / (4.0 * PI).sqrt();
        PanelOut {
            sums: PanelSums { s_all: c(0), s_rise: c(2), d_all: c(4), d_rise: c(6) },
            err_s: half * (norm(8) + norm(10)),
            err_d: half * (norm(12) + norm(14)),
            floor_s: 2.0 * half * fs * cs,
            floor_d: 2.0 * half * fd * cs,
        }
    }
}

const NEAR_INTERVALS: usize = 4;
/// Largest supported Gauss order.
pub const MAX_ORDER: usize = 64;

/// Integrand sample. The single-layer kernel without its constant
/// prefactor (including any Jacobian) is `amp * exp(i theta)`; the double
/// layer multiplies that by `ratio`.
struct Node {
    theta: f64,
    amp: f64,
    ratio: f64,
    rise: f64,
    /// Rounding bound on the phase.
    dtheta: f64,
    /// Rounding bound on `ratio`.
    dratio: f64,
}

struct PanelOut {
    sums: PanelSums,
    err_s: f64,
    err_d: f64,
    floor_s: f64,
    floor_d: f64,
}

#[inline]
fn regular_node(tau: f64, d: f64, rise: f64, delta_err: f64) -> Node {
    let inv_tau = 1.0 / tau;
    let theta = 0.25 * d * d * inv_tau;
    Node {
        theta,
        amp: inv_tau.sqrt(),
        ratio: d * inv_tau,
        rise,
        dtheta: d.abs() * delta_err * 0.5 * inv_tau + 4.0 * f64::EPSILON * theta,
        dratio: delta_err * inv_tau,
    }
}

/// `S_N(m, n)` for a single entry.
pub fn entry_s(vp: &VectorPotential, grid: &TimeGrid, m: usize, n: usize, q: &QuadConfig) -> Result<C64> {
    EntryEngine::uncached(vp.clone(), *grid, *q)?.entry_s(m, n)
}

/// `D_N(m, n)` for a single entry.
pub fn entry_d(vp: &VectorPotential, grid: &TimeGrid, m: usize, n: usize, q: &QuadConfig) -> Result<C64> {
    EntryEngine::uncached(vp.clone(), *grid, *q)?.entry_d(m, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector_potential::TabulatedField;

    fn example1() -> VectorPotential {
        VectorPotential::pulse(3000.0, 300.0, 0.1).unwrap()
    }

    #[test]
    fn free_kernel_values() {
        let v = kernel_k(0.0, 1.0 / (4.0 * PI)).unwrap();
        assert!((v - C64::new(FRAC_PI_4.cos(), -FRAC_PI_4.sin())).norm() < 1e-15);
        for &x in &[0.0, 0.3, -2.0, 10.0] {
            let t = 0.037;
            assert!((kernel_k(x, t).unwrap().norm() - 1.0 / (4.0 * PI * t).sqrt()).abs() < 1e-13);
        }
        assert!(kernel_k(0.1, 0.0).is_err());
    }

    #[test]
    fn boundary_kernel_branches() {
        let zero = VectorPotential::Zero;
        for &(t, s) in &[(0.5, 0.1), (1e-3, 0.0), (0.2, 0.19999)] {
            let a = kernel_s_boundary(&zero, t, s).unwrap();
            let b = kernel_k(0.0, t - s).unwrap();
            assert!((a - b).norm() < 1e-13 * b.norm());
            assert_eq!(kernel_dstar_boundary(&zero, t, s).unwrap(), C64::new(0.0, 0.0));
        }
        assert!(kernel_s_boundary(&zero, 0.1, 0.1).is_err());
        assert!(kernel_dstar_boundary(&zero, 0.1, 0.2).is_err());
    }

    #[test]
    fn constant_field_kernels() {
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let vp = VectorPotential::Tabulated(TabulatedField::new(times.clone(), vec![2.0; 21]).unwrap());
        let d = kernel_dstar_boundary(&vp, 1.5, 0.5).unwrap();
        assert!((d.norm() - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-14);
        let s = kernel_s_boundary(&vp, 1.5, 0.5).unwrap();
        assert!((s.norm() - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-14);
        let expected_phase = 4.0 * 1.0 / 4.0 - FRAC_PI_4;
        assert!((s.arg() - expected_phase).abs() < 1e-13);
    }

    #[test]
    fn zero_field_diagonal_closed_form() {
        let grid = TimeGrid::new(8, 0.01).unwrap();
        let e = EntryEngine::new(VectorPotential::Zero, grid, QuadConfig::default()).unwrap();
        let expect = C64::from_polar(2.0 / 3.0 * (0.01 / PI).sqrt(), -FRAC_PI_4);
        for m in 1..=8 {
            let (s, d) = e.entry_pair(m, m).unwrap();
            assert!((s - expect).norm() < 1e-13, "m={m}");
            assert_eq!(d, C64::new(0.0, 0.0));
        }
        assert!((expect.re - 0.0265962).abs() < 1e-7);
    }

    /// Closed-form antiderivative of `(c0 + c1 tau)/sqrt(tau)` for the A=0 kernel.
    fn abel_entry(m: usize, n: usize, dt: f64) -> C64 {
        let tm = m as f64 * dt;
        let piece = |lo: f64, hi: f64, at_lo: f64, at_hi: f64| {
            // linear weight in s from at_lo to at_hi, integrate / sqrt(tm - s)
            let (ta, tb) = (tm - lo, tm - hi);
            let slope_tau = (at_lo - at_hi) / (ta - tb);
            let c0 = at_hi - slope_tau * tb;
            let f = |tau: f64| 2.0 * c0 * tau.sqrt() + 2.0 / 3.0 * slope_tau * tau.powf(1.5);
            f(ta) - f(tb)
        };
        let tn = n as f64 * dt;
        let mut v = piece(tn - dt, tn, 0.0, 1.0);
        if n < m {
            v += piece(tn, tn + dt, 1.0, 0.0);
        }
        single_layer_prefactor() * v
    }

    #[test]
    fn zero_field_matches_abel_antiderivative() {
        let dt = 1e-3;
        let grid = TimeGrid::new(64, dt).unwrap();
        let e = EntryEngine::new(VectorPotential::Zero, grid, QuadConfig::default()).unwrap();
        for &(m, n) in &[(64, 1), (64, 62), (10, 3), (2, 1), (40, 38), (5, 5)] {
            let got = e.entry_s(m, n).unwrap();
            let exact = abel_entry(m, n, dt);
            assert!((got - exact).norm() < 1e-12, "({m},{n}) {got} vs {exact}");
        }
    }

    #[test]
    fn small_constant_field_first_order() {
        // D(2,1) ~ a * cd * int eta_1 / sqrt(t_2 - s) to O(a^3)
        let a = 1e-3;
        let dt = 0.01;
        let times: Vec<f64> = (0..=4).map(|k| k as f64 * dt).collect();
        let vp = VectorPotential::Tabulated(TabulatedField::new(times, vec![a; 5]).unwrap());
        let grid = TimeGrid::new(4, dt).unwrap();
        let got = entry_d(&vp, &grid, 2, 1, &QuadConfig::default()).unwrap();
        let series = double_layer_prefactor() * a * (abel_entry(2, 1, dt) / single_layer_prefactor());
        assert!((got - series).norm() < 1e-8 * series.norm(), "{got} vs {series}");
    }

    #[test]
    fn entry_domain_errors() {
        let grid = TimeGrid::new(10, 0.01).unwrap();
        let q = QuadConfig::default();
        assert!(entry_s(&VectorPotential::Zero, &grid, 3, 4, &q).is_err());
        assert!(entry_s(&VectorPotential::Zero, &grid, 3, 0, &q).is_err());
        assert!(entry_d(&VectorPotential::Zero, &grid, 11, 1, &q).is_err());
        assert!(QuadConfig { base_order: 4, ..q }.validate().is_err());
    }

    #[test]
    fn row_and_block_agree_with_entries() {
        let grid = TimeGrid::from_horizon(0.1, 256).unwrap();
        let e = EntryEngine::new(example1(), grid, QuadConfig::default()).unwrap();
        let m = 200;
        let mut srow = vec![C64::default(); m];
        let mut drow = vec![C64::default(); m];
        e.row(m, &mut srow, &mut drow).unwrap();
        for &n in &[1, 2, 77, 199, 200] {
            let (s, d) = e.entry_pair(m, n).unwrap();
            assert!((srow[n - 1] - s).norm() < 1e-15 + 1e-12 * s.norm());
            assert!((drow[n - 1] - d).norm() < 1e-15 + 1e-12 * d.norm());
        }
        let rows = 150..160;
        let cols = 40..50;
        let mut sb = vec![C64::default(); 100];
        let mut db = vec![C64::default(); 100];
        e.fill_block(rows.clone(), cols.clone(), &mut sb, &mut db).unwrap();
        for (i, m) in rows.enumerate() {
            for (j, n) in cols.clone().enumerate() {
                let (s, d) = e.entry_pair(m, n).unwrap();
                assert!((sb[j * 10 + i] - s).norm() < 1e-15 + 1e-12 * s.norm());
                assert!((db[j * 10 + i] - d).norm() < 1e-15 + 1e-12 * d.norm());
            }
        }
    }

    #[test]
    fn halving_tolerance_is_stable() {
        use rand::{Rng, SeedableRng};
        let grid = TimeGrid::from_horizon(0.1, 2048).unwrap();
        let q = QuadConfig::default();
        let loose = EntryEngine::uncached(example1(), grid, q).unwrap();
        let tight = EntryEngine::uncached(example1(), grid, QuadConfig { tol: q.tol / 2.0, ..q }).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let m = rng.gen_range(1..=2048);
            let n = rng.gen_range(1..=m);
            let (a, b) = (loose.entry_pair(m, n).unwrap(), tight.entry_pair(m, n).unwrap());
            assert!((a.0 - b.0).norm() < q.tol && (a.1 - b.1).norm() < q.tol, "({m},{n})");
        }
    }
}
