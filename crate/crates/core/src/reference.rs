//! Exact solutions, exterior evaluation through the layer potentials, the
//! classical `A = 0` boundary maps and error metrics.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::boundary::Side;
use crate::error::{domain, Error, Result};
use crate::kernel::{double_layer_prefactor, single_layer_prefactor, TimeGrid};
use crate::quadrature::{integrate_adaptive_n, GaussLegendre};
use crate::solver::{l2_distance, SpatialGrid, TraceStream};
use crate::vector_potential::VectorPotential;

/// `u0(x) = exp(ik(x - mu)) exp(-(x - mu)^2 / 4 alpha^2) / sqrt(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavepacketParams {
    pub alpha: f64,
    pub k: f64,
    pub mu: f64,
}

impl WavepacketParams {
    pub fn new(alpha: f64, k: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !k.is_finite() || !mu.is_finite() {
            return Err(domain(format!("wavepacket needs alpha > 0 and finite k, mu (got {alpha}, {k}, {mu})")));
        }
        Ok(Self { alpha, k, mu })
    }
}

pub fn gaussian_wavepacket(p: &WavepacketParams, x: f64) -> C64 {
    free_evolution(p, x, 0.0)
}

/// Solution of `i u_t = -u_xx` with wavepacket data.
///
/// With `z = 1 + i t / alpha^2` and `d = x - mu`,
/// `u = exp((-d^2 / 4 alpha^2 + i k d - i k^2 t) / z) / sqrt(alpha z)`.
pub fn free_evolution(p: &WavepacketParams, x: f64, t: f64) -> C64 {
    let a2 = p.alpha * p.alpha;
    let d = x - p.mu;
    let z = C64::new(1.0, t / a2);
    let expo = C64::new(-d * d / (4.0 * a2), p.k * d - p.k * p.k * t) / z;
    expo.exp() / (p.alpha * z).sqrt()
}

/// Exact solution under a vector potential: the free solution shifted by
/// `phi(t)`.
pub fn shifted_reference(p: &WavepacketParams, vp: &VectorPotential, x: f64, t: f64) -> Result<C64> {
    Ok(free_evolution(p, x + vp.eval_phi(t)?, t))
}

/// Maximum over frames of the discrete L2 distance on `nodes`.
pub fn max_l2_error(a: &[Vec<C64>], b: &[Vec<C64>], dx: f64, nodes: std::ops::Range<usize>) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len() || x.len() < nodes.end) {
        return Err(domain("trajectories do not share a grid"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| l2_distance(x, y, dx, nodes.clone())).fold(0.0, f64::max))
}

/// Chebyshev interpolant of `tau -> phi(t) - phi(t - tau)` on `[0, w]`,
/// evaluable at complex `tau`.
struct LagModel {
    w: f64,
    coef: Vec<f64>,
}

const MODEL_DEGREE: usize = 24;

impl LagModel {
    fn new(vp: &VectorPotential, t: f64, w: f64) -> Self {
        let n = MODEL_DEGREE;
        let f: Vec<f64> = (0..n)
            .map(|j| {
                let x = (PI * (j as f64 + 0.5) / n as f64).cos();
                vp.phi_lag(t, 0.5 * w * (x + 1.0))
            })
            .collect();
        let coef = (0..n)
            .map(|k| {
                let s: f64 = f
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                    .sum();
                s * if k == 0 { 1.0 } else { 2.0 } / n as f64
            })
            .collect();
        Self { w, coef }
    }

    fn eval(&self, tau: C64) -> C64 {
        let x = tau * (2.0 / self.w) - 1.0;
        let mut b1 = C64::default();
        let mut b2 = C64::default();
        for &c in self.coef.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coef[0] + x * b1 - b2
    }
}

/// Single- and double-layer kernels (with prefactors) at offset `y` and
/// lag `tau`, both possibly complex.
#[inline]
fn layer_kernels(y: C64, tau: C64) -> (C64, C64) {
    let theta = y * y / (4.0 * tau);
    if theta.im > 700.0 {
        return (C64::default(), C64::default());
    }
    let e = (C64::i() * theta).exp();
    let root = tau.sqrt();
    let ks = single_layer_prefactor() * e / root;
    (ks, double_layer_prefactor() * y * e / (tau * root))
}

/// Integrates `K_S sigma + K_D mu` over lags in `[0, t]` for a boundary
/// at offset `y0` from the target.
struct LayerIntegrator<'a> {
    vp: &'a VectorPotential,
    t: f64,
    y0: f64,
    rule: GaussLegendre,
    max_depth: usize,
}

const CONTOUR_TILT: f64 = 1.0;

/// Relative rounding error of a kernel sample whose phase is about `theta`.
fn sample_noise(theta: f64) -> f64 {
    f64::EPSILON * (16.0 + 4.0 * theta.abs())
}

impl<'a> LayerIntegrator<'a> {
    fn new(vp: &'a VectorPotential, t: f64, y0: f64) -> Self {
        Self { vp, t, y0, rule: GaussLegendre::new(16), max_depth: 30 }
    }

    /// Largest lag window near `tau = 0` on which the field shift is small
    /// against `y0`; there the path can leave the real axis safely.
    fn window(&self, limit: f64) -> f64 {
        let amax = self.vp.max_abs_a(self.t);
        let w = if amax > 0.0 { 0.1 * self.y0.abs() / amax } else { limit };
        w.min(limit).min(self.t)
    }

    fn theta(&self, tau: f64) -> f64 {
        let y = self.y0 + self.vp.phi_lag(self.t, tau);
        y * y / (4.0 * tau)
    }

    /// Phase error `|y| dy / (2 tau)` carried by the rounding `dy` of the
    /// field shift.
    fn phase_rounding(&self, tau: f64) -> f64 {
        let y = self.y0 + self.vp.phi_lag(self.t, tau);
        let dy = self.vp.phi_lag_rounding(self.t, tau) + f64::EPSILON * y.abs();
        y.abs() * dy / (2.0 * tau)
    }

    /// Lags in `[a, b]` on the real axis; `dens(tau)` gives `(sigma, mu)`.
    fn real(&self, a: f64, b: f64, tol: f64, dens: impl Fn(f64) -> (C64, C64)) -> Result<(C64, C64), f64> {
        let samples = 16;
        let mut var = 0.0;
        let mut prev = self.theta(a);
        let mut peak = prev.abs();
        let mut shift = self.phase_rounding(a);
        for i in 1..=samples {
            let tau = a + (b - a) * i as f64 / samples as f64;
            let th = self.theta(tau);
            var += (th - prev).abs();
            peak = peak.max(th.abs());
            shift = shift.max(self.phase_rounding(tau));
            prev = th;
        }
        let presplit = ((var / PI).ceil() as usize).clamp(1, 1 << 18);
        let f = |tau: f64| {
            let (sigma, mu) = dens(tau);
            let y = self.y0 + self.vp.phi_lag(self.t, tau);
            let (ks, kd) = layer_kernels(C64::new(y, 0.0), C64::new(tau, 0.0));
            [ks * sigma, kd * mu]
        };
        integrate_adaptive_n(&self.rule, f, a, b, tol, self.max_depth, presplit, sample_noise(peak) + shift)
            .map(|v| (v[0], v[1]))
            .map_err(|e| e.estimate)
    }

    /// Lags in `[0, w]` along `tau = w r (1 - i c (1 - r))`, where the
    /// kernel decays instead of oscillating. `dens` must be analytic.
    fn contour(&self, w: f64, tol: f64, dens: impl Fn(C64) -> (C64, C64)) -> Result<(C64, C64), f64> {
        let model = LagModel::new(self.vp, self.t, w);
        let c = CONTOUR_TILT;
        let f = |r: f64| {
            let tau = C64::new(w * r, -w * c * r * (1.0 - r));
            let dtau = C64::new(w, -w * c * (1.0 - 2.0 * r));
            let (sigma, mu) = dens(tau);
            let y = self.y0 + model.eval(tau);
            let (ks, kd) = layer_kernels(y, tau);
            [ks * sigma * dtau, kd * mu * dtau]
        };
        // panels shrink geometrically toward r = 1 where the decay is slowest
        let rate = self.y0 * self.y0 / (4.0 * w);
        let mut edges = vec![0.0];
        let mut gap = 0.5;
        while gap * rate > 0.1 && edges.len() < 60 {
            edges.push(1.0 - gap);
            gap *= 0.5;
        }
        edges.push(1.0);
        let mut s = C64::default();
        let mut d = C64::default();
        for pair in edges.windows(2) {
            let v = integrate_adaptive_n(
                &self.rule,
                f,
                pair[0],
                pair[1],
                tol * (pair[1] - pair[0]),
                self.max_depth,
                1,
                sample_noise(rate),
            )
            .map_err(|e| e.estimate)?;
            s += v[0];
            d += v[1];
        }
        Ok((s, d))
    }
}

/// `u(x, t_m)` outside the domain from the boundary traces at `side`:
/// `u = -i (S_A[v - iAu] + D_A[u])` to the right of `x0`, `+i (...)` to the
/// left of `-x0`, with hat-function densities.
pub fn exterior_eval(
    traces: &TraceStream,
    vp: &VectorPotential,
    grid: &TimeGrid,
    x0: f64,
    x: f64,
    m: usize,
    side: Side,
) -> Result<C64> {
    let y0 = match side {
        Side::Right if x > x0 => x - x0,
        Side::Left if x < -x0 => x + x0,
        _ => return Err(domain(format!("x = {x} is not outside the {} boundary at {x0}", side.name()))),
    };
    if m > traces.u.len() || traces.u.len() != traces.v.len() {
        return Err(domain(format!("traces cover {} steps, step {m} requested", traces.u.len())));
    }
    if m == 0 {
        return Ok(C64::default());
    }
    let dt = grid.dt();
    let t = grid.t(m);
    // densities at grid times, zero at t = 0
    let q = |n: usize| {
        if n == 0 {
            C64::default()
        } else {
            traces.v[n - 1] - C64::i() * vp.eval_a(grid.t(n)).unwrap_or(0.0) * traces.u[n - 1]
        }
    };
    let u = |n: usize| if n == 0 { C64::default() } else { traces.u[n - 1] };
    let scale = traces.u[..m].iter().chain(&traces.v[..m]).map(|z| z.norm()).fold(1e-300, f64::max);
    let tol = 1e-11 * scale;
    let li = LayerIntegrator::new(vp, t, y0);
    let fail = |n: usize| Error::Quadrature { m, n, tol };
    let mut s = C64::default();
    let mut d = C64::default();
    // interval [t_k, t_{k+1}] carries lags [(m-k-1) dt, (m-k) dt]
    for k in 0..m {
        let (qa, qb, ua, ub) = (q(k), q(k + 1), u(k), u(k + 1));
        let lo = (m - k - 1) as f64 * dt;
        let hi = if k == 0 { t } else { (m - k) as f64 * dt };
        let share = tol * (hi - lo) / t;
        // rise = (s - t_k) / dt = (hi - tau) / dt
        let lin = move |tau: C64| {
            let rise = (C64::new(hi, 0.0) - tau) / dt;
            (qa + (qb - qa) * rise, ua + (ub - ua) * rise)
        };
        if k + 1 == m {
            let w = li.window(hi);
            let (cs, cd) = li.contour(w, share * w / hi, lin).map_err(|_| fail(k + 1))?;
            s += cs;
            d += cd;
            if w < hi {
                let (rs, rd) =
                    li.real(w, hi, share * (hi - w) / hi, |tau| lin(C64::new(tau, 0.0))).map_err(|_| fail(k + 1))?;
                s += rs;
                d += rd;
            }
        } else {
            let (rs, rd) = li.real(lo, hi, share, |tau| lin(C64::new(tau, 0.0))).map_err(|_| fail(k + 1))?;
            s += rs;
            d += rd;
        }
    }
    let sum = s + d;
    Ok(match side {
        Side::Right => -C64::i() * sum,
        Side::Left => C64::i() * sum,
    })
}

/// Which side of the boundary point the double layer is evaluated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    /// `x0 + eps`
    Above,
    /// `x0 - eps`
    Below,
}

impl Approach {
    fn sign(self) -> f64 {
        match self {
            Self::Above => 1.0,
            Self::Below => -1.0,
        }
    }
}

/// Outcome of a jump-relation check.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpCheck {
    /// `(eps, D_A[mu](x0 +- eps, t))` for the sampled offsets.
    pub samples: Vec<(f64, C64)>,
    /// Richardson limit of the samples.
    pub limit: C64,
    /// `+-(i/2) mu(t) + D*_A[mu](t)`.
    pub expected: C64,
}

/// `D_A[mu](x0 + s eps, t)` for a density `mu(s)` analytic near `s = t`.
pub fn double_layer_off_boundary(
    vp: &VectorPotential,
    density: &dyn Fn(C64) -> C64,
    t: f64,
    offset: f64,
    tol: f64,
) -> Result<C64> {
    if !(t > 0.0) || offset == 0.0 {
        return Err(domain("off-boundary layer needs t > 0 and a nonzero offset"));
    }
    let li = LayerIntegrator::new(vp, t, offset);
    let w = li.window(t);
    let dens = |tau: C64| (C64::default(), density(C64::new(t, 0.0) - tau));
    let fail = |_| Error::Quadrature { m: 0, n: 0, tol };
    let (_, mut d) = li.contour(w, tol * 0.5, dens).map_err(fail)?;
    if w < t {
        let (_, rd) = li.real(w, t, tol * 0.5, |tau| dens(C64::new(tau, 0.0))).map_err(fail)?;
        d += rd;
    }
    Ok(d)
}

/// Principal-value double layer `D*_A[mu](t)` by adaptive quadrature in
/// `sigma = sqrt(t - s)`.
pub fn principal_value_double_layer(vp: &VectorPotential, density: &dyn Fn(f64) -> C64, t: f64, tol: f64) -> Result<C64> {
    if !(t > 0.0) {
        return Err(domain("principal-value layer needs t > 0"));
    }
    let rule = GaussLegendre::new(16);
    let f = |sigma: f64| {
        let tau = sigma * sigma;
        let d = vp.phi_lag(t, tau);
        let theta = d * d / (4.0 * tau);
        // d tau = 2 sigma d sigma turns d / tau^{3/2} into 2 d / tau
        [double_layer_prefactor() * C64::new(0.0, theta).exp() * (2.0 * d / tau) * density(t - tau)]
    };
    let end = t.sqrt();
    let mut var = 0.0;
    let mut prev = 0.0;
    for i in 1..=64 {
        let tau = (end * i as f64 / 64.0).powi(2);
        let d = vp.phi_lag(t, tau);
        let th = d * d / (4.0 * tau);
        var += (th - prev).abs();
        prev = th;
    }
    let presplit = ((var / PI).ceil() as usize).clamp(1, 1 << 18);
    integrate_adaptive_n(&rule, f, 0.0, end, tol, 40, presplit, sample_noise(var))
        .map(|v| v[0])
        .map_err(|_| Error::Quadrature { m: 0, n: 0, tol })
}

/// Evaluates the double layer at `x0 +- eps_k`, `eps_k = eps0 / 2^k` for
/// `k = 0, 1, 2`, and extrapolates to `eps = 0` assuming an expansion in
/// integer powers of `eps`.
pub fn jump_check(
    vp: &VectorPotential,
    density: &dyn Fn(C64) -> C64,
    t: f64,
    approach: Approach,
    eps0: f64,
) -> Result<JumpCheck> {
    if !(eps0 > 0.0) {
        return Err(domain("jump check needs eps0 > 0"));
    }
    let tol = 1e-12;
    let samples: Vec<(f64, C64)> = (0..3)
        .map(|k| {
            let eps = eps0 / f64::powi(2.0, k);
            double_layer_off_boundary(vp, density, t, approach.sign() * eps, tol).map(|v| (eps, v))
        })
        .collect::<Result<_>>()?;
    let r1: Vec<C64> = samples.windows(2).map(|w| 2.0 * w[1].1 - w[0].1).collect();
    let limit = (4.0 * r1[1] - r1[0]) / 3.0;
    let pv = principal_value_double_layer(vp, &|s| density(C64::new(s, 0.0)), t, tol)?;
    let expected = C64::new(0.0, 0.5 * approach.sign()) * density(C64::new(t, 0.0)) + pv;
    Ok(JumpCheck { samples, limit, expected })
}

/// Hat moments of `1 / sqrt(tau)` over `[j, j + 1]` (units of `dt`): the
/// parts weighted by the hat rising toward `tau = j` and falling from it.
fn abel_moments(j: usize) -> (f64, f64) {
    let sa = (j as f64).sqrt();
    let sb = (j as f64 + 1.0).sqrt();
    let s = sa + sb;
    let near = 2.0 / 3.0 * (2.0 - sa / s) / s;
    let far = 2.0 / 3.0 * (1.0 + sa / s) / s;
    (near, far)
}

/// Classical Neumann-to-Dirichlet map for `A = 0`:
/// `u(t) = e^{-3 pi i / 4} / sqrt(pi) int_0^t v(s) / sqrt(t - s) ds` with
/// `v` piecewise linear through `(t_n, v[n - 1])` and `v(0) = 0`.
pub fn ntd_classical(v: &[C64], grid: &TimeGrid) -> Vec<C64> {
    let c = C64::from_polar(1.0 / PI.sqrt(), -0.75 * PI) * grid.dt().sqrt();
    let n = v.len();
    let w: Vec<f64> = (0..n)
        .map(|j| abel_moments(j).0 + if j > 0 { abel_moments(j - 1).1 } else { 0.0 })
        .collect();
    (1..=n)
        .map(|m| c * (1..=m).map(|k| v[k - 1] * w[m - k]).sum::<C64>())
        .collect()
}

/// Classical Dirichlet-to-Neumann map for `A = 0`:
/// `v(t) = e^{3 pi i / 4} / sqrt(pi) int_0^t u_t(s) / sqrt(t - s) ds`, with
/// `u_t` the exact derivative of the piecewise-linear interpolant.
pub fn dtn_classical(u: &[C64], grid: &TimeGrid) -> Vec<C64> {
    let c = C64::from_polar(1.0 / PI.sqrt(), 0.75 * PI) / grid.dt().sqrt();
    let n = u.len();
    let w: Vec<f64> = (0..n)
        .map(|j| {
            let (a, b) = abel_moments(j);
            a + b
        })
        .collect();
    let at = |k: usize| if k == 0 { C64::default() } else { u[k - 1] };
    (1..=n)
        .map(|m| c * (0..m).map(|k| (at(k + 1) - at(k)) * w[m - 1 - k]).sum::<C64>())
        .collect()
}

/// Exact boundary traces `(u, u_x)` of a wavepacket at `x`, per step.
pub fn exact_traces(p: &WavepacketParams, vp: &VectorPotential, grid: &TimeGrid, x: f64) -> Result<TraceStream> {
    let mut out = TraceStream::default();
    for m in 1..=grid.steps() {
        let t = grid.t(m);
        let xs = x + vp.eval_phi(t)?;
        out.u.push(free_evolution(p, xs, t));
        out.v.push(free_evolution_dx(p, xs, t));
    }
    Ok(out)
}

/// `d/dx` of [`free_evolution`].
pub fn free_evolution_dx(p: &WavepacketParams, x: f64, t: f64) -> C64 {
    let a2 = p.alpha * p.alpha;
    let d = x - p.mu;
    let z = C64::new(1.0, t / a2);
    let slope = C64::new(-d / (2.0 * a2), p.k) / z;
    slope * free_evolution(p, x, t)
}

/// Samples of the exact solution on a spatial grid.
pub fn sample_reference(p: &WavepacketParams, vp: &VectorPotential, grid: &SpatialGrid, t: f64) -> Result<Vec<C64>> {
    let shift = vp.eval_phi(t)?;
    Ok(grid.nodes().map(|x| free_evolution(p, x + shift, t)).collect())
}
