//! The applied field `A(t)` and its antiderivative `phi(t) = int_0^t A`.
//!
//! Kernels only ever see differences `phi(t) - phi(s)`, so every variant
//! provides [`VectorPotential::phi_diff`], which avoids cancellation when
//! `t - s` is small.

use std::f64::consts::PI;

use sha2::{Digest, Sha256};

use crate::config::fmt_float;
use crate::error::{domain, Error, Result};

/// `A(t) = A0 sin^2(pi t / T) cos(omega t)` on `[0, T]`, zero afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    pub amplitude: f64,
    pub omega: f64,
    pub duration: f64,
}

impl PulseParams {
    pub fn new(amplitude: f64, omega: f64, duration: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(domain(format!("pulse duration must be positive, got {duration}")));
        }
        if !amplitude.is_finite() || !omega.is_finite() {
            return Err(domain("pulse parameters must be finite"));
        }
        Ok(Self { amplitude, omega, duration })
    }

    fn a(&self, t: f64) -> f64 {
        if t > self.duration {
            return 0.0;
        }
        let s = (PI * t / self.duration).sin();
        self.amplitude * s * s * (self.omega * t).cos()
    }

    /// The three carrier frequencies of the product-to-sum expansion with
    /// their weights: `phi = A0 * sum_k w_k * sin(f_k t) / f_k`.
    fn terms(&self) -> [(f64, f64); 3] {
        let a = 2.0 * PI / self.duration;
        [(0.5, self.omega), (-0.25, self.omega + a), (-0.25, self.omega - a)]
    }

    fn phi(&self, t: f64) -> f64 {
        let t = t.min(self.duration);
        self.amplitude * self.terms().iter().map(|&(w, f)| w * sinc_t(f, t)).sum::<f64>()
    }

    fn phi_diff(&self, t: f64, s: f64) -> f64 {
        let t = t.min(self.duration);
        let s = s.min(self.duration);
        if t == s {
            return 0.0;
        }
        self.phi_span(0.5 * (t + s), 0.5 * (t - s))
    }

    /// `phi(t) - phi(t - tau)` with the gap passed exactly.
    fn phi_lag(&self, t: f64, tau: f64) -> f64 {
        if t > self.duration {
            return self.phi_diff(t, t - tau);
        }
        self.phi_span(t - 0.5 * tau, 0.5 * tau)
    }

    fn phi_span(&self, half_sum: f64, half_diff: f64) -> f64 {
        // sin(ft) - sin(fs) = 2 cos(f(t+s)/2) sin(f(t-s)/2)
        let sum: f64 = self
            .terms()
            .iter()
            .map(|&(w, f)| {
                let d = if f == 0.0 {
                    2.0 * half_diff
                } else {
                    2.0 * (f * half_sum).cos() * (f * half_diff).sin() / f
                };
                w * d
            })
            .sum();
        self.amplitude * sum
    }
}

/// `sin(f t) / f`, continuous at `f = 0`.
fn sinc_t(f: f64, t: f64) -> f64 {
    if f == 0.0 {
        t
    } else {
        (f * t).sin() / f
    }
}

/// Tabulated field: piecewise-cubic Hermite interpolation of samples with
/// exactly integrated cumulative values.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedField {
    times: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedField {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(domain("tabulated field needs at least two (t, A) samples"));
        }
        if times[0] != 0.0 {
            return Err(domain("tabulated field must start at t = 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("tabulated sample times must be strictly increasing"));
        }
        if values.iter().chain(times.iter()).any(|v| !v.is_finite()) {
            return Err(domain("tabulated field contains non-finite values"));
        }
        let n = times.len();
        let mut slopes = vec![0.0; n];
        slopes[0] = (values[1] - values[0]) / (times[1] - times[0]);
        slopes[n - 1] = (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]);
        for i in 1..n - 1 {
            let h0 = times[i] - times[i - 1];
            let h1 = times[i + 1] - times[i];
            let d0 = (values[i] - values[i - 1]) / h0;
            let d1 = (values[i + 1] - values[i]) / h1;
            slopes[i] = (d1 * h0 + d0 * h1) / (h0 + h1);
        }
        let mut field = Self { times, values, slopes, cumulative: vec![0.0; n] };
        for i in 0..n - 1 {
            let h = field.times[i + 1] - field.times[i];
            field.cumulative[i + 1] = field.cumulative[i] + field.cell_integral(i, 0.0, h);
        }
        Ok(field)
    }

    /// Parses the two-column `t A` text format (whitespace or comma
    /// separated, `#` comments).
    pub fn parse(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Config(format!("field table line {}: expected two columns", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("field table line {}: bad number {s:?}", lineno + 1)))
            };
            times.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn cell(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        }
    }

    fn hermite(&self, i: usize, local: f64) -> f64 {
        let h = self.times[i + 1] - self.times[i];
        let u = local / h;
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * self.values[i]
            + (u3 - 2.0 * u2 + u) * h * self.slopes[i]
            + (-2.0 * u3 + 3.0 * u2) * self.values[i + 1]
            + (u3 - u2) * h * self.slopes[i + 1]
    }

    /// Integral of the cubic on cell `i` between local offsets `lo <= hi`.
    /// Three-point Gauss-Legendre is exact for cubics.
    fn cell_integral(&self, i: usize, lo: f64, hi: f64) -> f64 {
        const X: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        half * (5.0 / 9.0 * self.hermite(i, mid - half * X)
            + 8.0 / 9.0 * self.hermite(i, mid)
            + 5.0 / 9.0 * self.hermite(i, mid + half * X))
    }

    /// Crude bound on `int_0^t |A|`.
    fn abs_integral(&self, t: f64) -> f64 {
        let amax = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        2.0 * amax * t.min(self.end())
    }

    fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn a(&self, t: f64) -> f64 {
        if t > self.end() {
            return 0.0;
        }
        let i = self.cell(t);
        self.hermite(i, t - self.times[i])
    }

    fn phi(&self, t: f64) -> f64 {
        let t = t.min(self.end());
        let i = self.cell(t);
        self.cumulative[i] + self.cell_integral(i, 0.0, t - self.times[i])
    }

    fn phi_diff(&self, t: f64, s: f64) -> f64 {
        let t = t.min(self.end());
        let s = s.min(self.end());
        let (i, j) = (self.cell(t), self.cell(s));
        if i == j {
            self.cell_integral(i, s - self.times[i], t - self.times[i])
        } else {
            self.phi(t) - self.phi(s)
        }
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (t, a) in self.times.iter().zip(&self.values) {
            h.update(t.to_le_bytes());
            h.update(a.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Spatially uniform applied vector potential.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorPotential {
    Zero,
    Pulse(PulseParams),
    Tabulated(TabulatedField),
}

impl VectorPotential {
    pub fn pulse(amplitude: f64, omega: f64, duration: f64) -> Result<Self> {
        PulseParams::new(amplitude, omega, duration).map(Self::Pulse)
    }

    fn check_time(t: f64) -> Result<()> {
        if t < 0.0 || t.is_nan() {
            Err(domain(format!("time must be non-negative, got {t}")))
        } else {
            Ok(())
        }
    }

    /// `A(t)`; errors for `t < 0`.
    pub fn eval_a(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.a_unchecked(t))
    }

    /// `phi(t) = int_0^t A(s) ds`; errors for `t < 0`.
    pub fn eval_phi(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.phi_unchecked(t))
    }

    #[inline]
    pub(crate) fn a_unchecked(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Pulse(p) => p.a(t),
            Self::Tabulated(f) => f.a(t),
        }
    }

    #[inline]
    pub(crate) fn phi_unchecked(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Pulse(p) => p.phi(t),
            Self::Tabulated(f) => f.phi(t),
        }
    }

    /// Bound on the rounding error of `phi(t)` as evaluated here.
    pub(crate) fn phi_rounding(&self, t: f64) -> f64 {
        let eps = f64::EPSILON;
        match self {
            Self::Zero => 0.0,
            Self::Pulse(p) => {
                let t = t.min(p.duration);
                let terms: f64 = p
                    .terms()
                    .iter()
                    .map(|&(w, f)| w.abs() * if f == 0.0 { t } else { 1.0 / f.abs() + t })
                    .sum();
                2.0 * eps * p.amplitude.abs() * terms
            }
            Self::Tabulated(f) => 4.0 * eps * (f.phi(t).abs() + f.abs_integral(t)),
        }
    }

    /// Bound on the rounding error of `phi_lag(t, tau)`.
    pub(crate) fn phi_lag_rounding(&self, t: f64, tau: f64) -> f64 {
        let eps = f64::EPSILON;
        match self {
            Self::Zero => 0.0,
            Self::Pulse(p) => {
                let fmax = p.terms().iter().map(|&(_, f)| f.abs()).fold(0.0, f64::max);
                2.0 * eps * p.amplitude.abs() * tau.min(p.duration) * (2.0 + fmax * t.min(p.duration))
            }
            Self::Tabulated(_) => self.phi_rounding(t) + self.phi_rounding(t - tau),
        }
    }

    /// `phi(t) - phi(t - tau)`, accurate relative to `tau` for small lags.
    #[inline]
    pub fn phi_lag(&self, t: f64, tau: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Pulse(p) => p.phi_lag(t, tau),
            Self::Tabulated(f) => f.phi_diff(t, t - tau),
        }
    }

    /// `phi(t) - phi(s)` without cancellation for nearby arguments.
    #[inline]
    pub fn phi_diff(&self, t: f64, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Pulse(p) => p.phi_diff(t, s),
            Self::Tabulated(f) => f.phi_diff(t, s),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }

    /// Upper bound on `|A|` over `[0, horizon]`.
    pub fn max_abs_a(&self, horizon: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Pulse(p) => p.amplitude.abs(),
            Self::Tabulated(f) => f
                .values
                .iter()
                .zip(&f.times)
                .filter(|(_, &t)| t <= horizon)
                .map(|(a, _)| a.abs())
                .fold(0.0, f64::max)
                * 1.5,
        }
    }

    /// Largest `|phi(t)|` over a dense sampling of `[0, horizon]`.
    pub fn max_excursion(&self, horizon: f64) -> Result<f64> {
        if !(horizon > 0.0) {
            return Err(domain("horizon must be positive"));
        }
        const SAMPLES: usize = 20_000;
        let mut best = 0.0f64;
        for k in 0..=SAMPLES {
            let t = horizon * k as f64 / SAMPLES as f64;
            best = best.max(self.phi_unchecked(t).abs());
        }
        if let Self::Tabulated(f) = self {
            for &t in f.times.iter().filter(|&&t| t <= horizon) {
                best = best.max(f.phi(t).abs());
            }
        }
        Ok(best)
    }

    /// Canonical configuration text identifying this field; used for
    /// operator compatibility checks.
    pub fn descriptor(&self) -> String {
        match self {
            Self::Zero => "vector_potential.kind = zero\n".to_string(),
            Self::Pulse(p) => format!(
                "vector_potential.A0 = {}\nvector_potential.T = {}\nvector_potential.kind = pulse\nvector_potential.omega = {}\n",
                fmt_float(p.amplitude),
                fmt_float(p.duration),
                fmt_float(p.omega)
            ),
            Self::Tabulated(f) => format!(
                "vector_potential.kind = table\nvector_potential.samples = {}\nvector_potential.sha256 = {}\n",
                f.times.len(),
                f.digest()
            ),
        }
    }
}
