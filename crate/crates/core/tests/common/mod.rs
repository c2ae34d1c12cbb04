//! Oracles written independently of the library: their own quadrature
//! nodes, their own pulse antiderivative and their own entry assembly.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp;
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        xs.push(z);
        ws.push(2.0 / ((1.0 - z * z) * dp * dp));
    }
    (xs, ws)
}

/// `A(t) = A0 sin^2(pi t / T) cos(w t)` on `[0, T]`, zero afterwards.
#[derive(Clone, Copy, Debug)]
pub struct Pulse {
    pub a0: f64,
    pub omega: f64,
    pub period: f64,
}

pub const EXAMPLE1: Pulse = Pulse { a0: 3000.0, omega: 300.0, period: 0.1 };
pub const ZERO: Pulse = Pulse { a0: 0.0, omega: 300.0, period: 0.1 };

impl Pulse {
    pub fn a(&self, t: f64) -> f64 {
        if t > self.period {
            return 0.0;
        }
        let s = (PI * t / self.period).sin();
        self.a0 * s * s * (self.omega * t).cos()
    }

    /// Product-to-sum antiderivative; needs `omega` away from `0` and
    /// `2 pi / T`.
    pub fn phi(&self, t: f64) -> f64 {
        let t = t.min(self.period);
        let w = self.omega;
        let wp = w + 2.0 * PI / self.period;
        let wm = w - 2.0 * PI / self.period;
        self.a0 * ((w * t).sin() / (2.0 * w) - (wp * t).sin() / (4.0 * wp) - (wm * t).sin() / (4.0 * wm))
    }

    /// `phi(t) - phi(s)`.
    pub fn lag(&self, t: f64, s: f64) -> f64 {
        self.lag_by(t, t - s)
    }

    /// `phi(t) - phi(t - tau)`, by quadrature of `A(t - r)` over `r` in
    /// `[0, tau]` for short lags so the length is exact.
    pub fn lag_by(&self, t: f64, tau: f64) -> f64 {
        if tau > 1e-3 {
            return self.phi(t) - self.phi(t - tau);
        }
        let (x, w) = gl24();
        // A is only C^1 at the end of the pulse
        let end = t - self.period;
        let cuts = if 0.0 < end && end < tau { vec![0.0, end, tau] } else { vec![0.0, tau] };
        let mut total = 0.0;
        for p in cuts.windows(2) {
            let (a, b) = (p[0], p[1]);
            let h = 0.5 * (b - a);
            total += h * x.iter().zip(w).map(|(xi, wi)| wi * self.a(t - a - h * (xi + 1.0))).sum::<f64>();
        }
        total
    }
}

fn gl24() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(24))
}

fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// `e^{-i pi/4} / sqrt(4 pi)`.
pub fn cs() -> C64 {
    C64::from_polar(1.0 / (4.0 * PI).sqrt(), -PI / 4.0)
}

/// `e^{i pi/4} / (4 sqrt(pi))`.
pub fn cd() -> C64 {
    C64::from_polar(1.0 / (4.0 * PI.sqrt()), PI / 4.0)
}

/// Composite Gauss-Legendre with panel doubling until two levels agree.
fn composite(f: &dyn Fn(f64) -> (C64, C64), a: f64, b: f64, tol: f64) -> (C64, C64) {
    let (x, w) = gl20();
    let run = |panels: usize| {
        let h = (b - a) / panels as f64;
        let mut s = C64::default();
        let mut d = C64::default();
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(w) {
                let (fs, fd) = f(lo + 0.5 * h * (xi + 1.0));
                s += fs * (0.5 * h * wi);
                d += fd * (0.5 * h * wi);
            }
        }
        (s, d)
    };
    let mut panels = 2;
    let mut prev = run(panels);
    loop {
        panels *= 2;
        let next = run(panels);
        let diff = (next.0 - prev.0).norm().max((next.1 - prev.1).norm());
        if diff <= tol || panels >= 1 << 14 {
            assert!(diff <= tol, "oracle did not converge on [{a}, {b}]: {diff:e}");
            return next;
        }
        prev = next;
    }
}

/// Moments `(S, D)` of interval `[t_k, t_{k+1}]` for row `m`, against the
/// falling and rising hat weights.
fn interval(p: &Pulse, dt: f64, m: usize, k: usize, tol: f64) -> [(C64, C64); 2] {
    let tm = m as f64 * dt;
    let (a, b) = (k as f64 * dt, (k + 1) as f64 * dt);
    let mut out = [(C64::default(), C64::default()); 2];
    for (slot, rising) in [(0, false), (1, true)] {
        let res = if k + 1 == m {
            // s = t_m - u^2 removes the lag singularity
            let f = move |u: f64| {
                let tau = u * u;
                let wgt = if rising { (dt - tau) / dt } else { tau / dt };
                let d = p.lag_by(tm, tau);
                let e = C64::from_polar(1.0, d * d / (4.0 * tau));
                (cs() * e * (2.0 * wgt), cd() * (d / tau) * e * (2.0 * wgt))
            };
            composite(&f, 0.0, dt.sqrt(), tol)
        } else {
            let f = move |s: f64| {
                let tau = tm - s;
                let wgt = if rising { (s - a) / dt } else { (b - s) / dt };
                let d = p.lag_by(tm, tau);
                let e = C64::from_polar(1.0, d * d / (4.0 * tau));
                (cs() * e * (wgt / tau.sqrt()), cd() * d / tau.powf(1.5) * e * wgt)
            };
            composite(&f, a, b, tol)
        };
        out[slot] = res;
    }
    out
}

/// `(S_N(m, n), D_N(m, n))` for `1 <= n <= m`.
pub fn entry(p: &Pulse, dt: f64, m: usize, n: usize, tol: f64) -> (C64, C64) {
    assert!(1 <= n && n <= m);
    let rise = interval(p, dt, m, n - 1, tol)[1];
    let mut s = rise.0;
    let mut d = rise.1;
    if n < m {
        let fall = interval(p, dt, m, n, tol)[0];
        s += fall.0;
        d += fall.1;
    }
    (s, d)
}

/// Closed-form `S_N(m, n)` for `A = 0` from the second antiderivative of
/// `tau^{-1/2}`.
pub fn free_single_layer(dt: f64, m: usize, n: usize) -> C64 {
    let f = |x: f64| 4.0 / 3.0 * x.powf(1.5);
    let j = (m - n) as f64;
    let tent = if m == n { f(1.0) } else { f(j + 1.0) - 2.0 * f(j) + f(j - 1.0) };
    cs() * dt.sqrt() * tent
}

/// Wavepacket `exp(ik(x - mu) - (x - mu)^2 / 4 alpha^2) / sqrt(alpha)`.
pub fn packet(alpha: f64, k: f64, mu: f64, x: f64) -> C64 {
    let d = x - mu;
    C64::from_polar((-d * d / (4.0 * alpha * alpha)).exp() / alpha.sqrt(), k * d)
}

/// Discrete L2 distance over the given node values.
pub fn l2(a: &[C64], b: &[C64], dx: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * dx).sqrt()
}

pub fn random_unit_c64(rng: &mut impl rand::Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}
