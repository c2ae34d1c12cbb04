//! Gauss-Legendre rules and a panel-adaptive integrator.
//!
//! The error indicator of a panel is the size of the two highest Legendre
//! coefficients of the degree `n-1` interpolant through the Gauss nodes.
//! It bounds the interpolation error, which in turn bounds the (much
//! smaller) quadrature error.

use num_complex::Complex64 as C64;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `(2k+1)/2 * w_i * P_k(x_i)` for `k = n-2, n-1`.
    tail: [Vec<f64>; 2],
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64, f64) {
    // returns (P_{n-1}(x), P_n(x), P_n'(x))
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (0.0, 1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p0, p1, dp)
}

fn legendre(k: usize, x: f64) -> f64 {
    legendre_with_derivative(k, x).1
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "Gauss-Legendre rule needs at least two nodes");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (_, p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, _, dp) = legendre_with_derivative(n, x);
            // ascending order
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        let tail = [n - 2, n - 1].map(|k| {
            nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| (2 * k + 1) as f64 * 0.5 * w * legendre(k, x))
                .collect()
        });
        Self { nodes, weights, tail }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn tail_weights(&self) -> (&[f64], &[f64]) {
        (&self.tail[0], &self.tail[1])
    }

    pub fn integrate_real(&self, mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        half * self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>()
    }

    /// One panel: returns `(integral, error indicator)`.
    pub fn panel(&self, mut f: impl FnMut(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
        let (v, e, _) = self.panel_n(|x| [f(x)], a, b);
        (v[0], e)
    }

    /// One panel of a vector-valued integrand. Returns the integrals, the
    /// summed error indicator and the indicator's sensitivity to unit
    /// relative perturbations of the samples.
    pub fn panel_n<const K: usize>(
        &self,
        mut f: impl FnMut(f64) -> [C64; K],
        a: f64,
        b: f64,
    ) -> ([C64; K], f64, f64) {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut sum = [C64::new(0.0, 0.0); K];
        let mut c0 = [C64::new(0.0, 0.0); K];
        let mut c1 = [C64::new(0.0, 0.0); K];
        let mut sens = 0.0;
        for i in 0..self.nodes.len() {
            let v = f(mid + half * self.nodes[i]);
            let spread = self.tail[0][i].abs() + self.tail[1][i].abs();
            for k in 0..K {
                sum[k] += v[k] * self.weights[i];
                c0[k] += v[k] * self.tail[0][i];
                c1[k] += v[k] * self.tail[1][i];
                sens += spread * v[k].norm();
            }
        }
        let err = (0..K).map(|k| c0[k].norm() + c1[k].norm()).sum::<f64>() * half.abs();
        (sum.map(|v| v * half), err, sens * half.abs())
    }
}

/// Why an adaptive integration stopped short of its tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadFailure {
    pub estimate: f64,
}

/// Adaptive bisection on `[a, b]`, starting from `presplit` equal panels.
/// The tolerance is absolute and distributed over panels by length.
pub fn integrate_adaptive(
    rule: &GaussLegendre,
    mut f: impl FnMut(f64) -> C64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
    presplit: usize,
) -> Result<C64, QuadFailure> {
    integrate_adaptive_n(rule, |x| [f(x)], a, b, tol, max_depth, presplit, 0.0).map(|v| v[0])
}

/// [`integrate_adaptive`] for a vector-valued integrand. A panel is also
/// accepted once its indicator is within what relative sample errors of
/// size `noise` could produce.
#[allow(clippy::too_many_arguments)]
pub fn integrate_adaptive_n<const K: usize>(
    rule: &GaussLegendre,
    mut f: impl FnMut(f64) -> [C64; K],
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
    presplit: usize,
    noise: f64,
) -> Result<[C64; K], QuadFailure> {
    let mut total = [C64::new(0.0, 0.0); K];
    if a == b {
        return Ok(total);
    }
    let len = (b - a).abs();
    let presplit = presplit.max(1);
    let mut stack: Vec<(f64, f64, usize)> = (0..presplit)
        .rev()
        .map(|k| {
            let lo = a + (b - a) * k as f64 / presplit as f64;
            let hi = if k + 1 == presplit { b } else { a + (b - a) * (k + 1) as f64 / presplit as f64 };
            (lo, hi, 0)
        })
        .collect();
    let mut worst = 0.0f64;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err, sens) = rule.panel_n(&mut f, lo, hi);
        let allowed = (tol * (hi - lo).abs() / len).max(2.0 * noise * sens);
        if err <= allowed || depth >= max_depth {
            if err > allowed {
                worst = worst.max(err);
            }
            for k in 0..K {
                total[k] += val[k];
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    if worst > 0.0 {
        Err(QuadFailure { estimate: worst })
    } else {
        Ok(total)
    }
}
