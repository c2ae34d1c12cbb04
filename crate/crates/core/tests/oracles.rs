mod common;

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rustfft::FftPlanner;

use tbc_core::kernel::{EntryEngine, QuadConfig, TimeGrid};
use tbc_core::reference::{free_evolution, shifted_reference, WavepacketParams};
use tbc_core::vector_potential::VectorPotential;

use common::{Pulse, EXAMPLE1};

/// Propagates samples of `u0` on a periodic grid under `i u_t = -u_xx`,
/// then shifts by `phi`.
fn spectral(u0: &[C64], len: f64, t: f64, phi: f64) -> Vec<C64> {
    let n = u0.len();
    let mut planner = FftPlanner::new();
    let mut buf = u0.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (j, z) in buf.iter_mut().enumerate() {
        let f = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let kappa = 2.0 * PI * f / len;
        *z *= C64::from_polar(1.0 / n as f64, -kappa * kappa * t + kappa * phi);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

#[test]
fn legendre_rule_is_exact_for_polynomials() {
    let (x, w) = common::gauss_legendre(12);
    for p in 0..24 {
        let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum();
        let want = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
        assert!((got - want).abs() < 1e-14, "degree {p}");
    }
}

#[test]
fn free_evolution_matches_spectral_propagation() {
    let n = 1 << 14;
    let len = 40.0;
    let dx = len / n as f64;
    let xs: Vec<f64> = (0..n).map(|j| -20.0 + j as f64 * dx).collect();
    let p = WavepacketParams::new(0.08, -10.0, 0.0).unwrap();
    let u0: Vec<C64> = xs.iter().map(|&x| common::packet(0.08, -10.0, 0.0, x)).collect();
    for t in [0.0, 0.01, 0.05] {
        let want = spectral(&u0, len, t, 0.0);
        let err = xs.iter().zip(&want).map(|(&x, w)| (free_evolution(&p, x, t) - w).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "t = {t}: {err:e}");
    }
}

#[test]
fn shifted_reference_matches_spectral_propagation() {
    let n = 1 << 14;
    let len = 40.0;
    let dx = len / n as f64;
    let xs: Vec<f64> = (0..n).map(|j| -20.0 + j as f64 * dx).collect();
    let p = WavepacketParams::new(0.08, -10.0, 0.0).unwrap();
    let vp = VectorPotential::pulse(3000.0, 300.0, 0.1).unwrap();
    let u0: Vec<C64> = xs.iter().map(|&x| common::packet(0.08, -10.0, 0.0, x)).collect();
    for t in [0.013, 0.05] {
        let want = spectral(&u0, len, t, EXAMPLE1.phi(t));
        let err = xs
            .iter()
            .zip(&want)
            .map(|(&x, w)| (shifted_reference(&p, &vp, x, t).unwrap() - w).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "t = {t}: {err:e}");
    }
}

#[test]
fn pulse_antiderivative_matches_independent_forms() {
    let vp = VectorPotential::pulse(3000.0, 300.0, 0.1).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let (x, w) = common::gauss_legendre(40);
    for _ in 0..100 {
        let t: f64 = rng.gen_range(0.0..0.12);
        assert!((vp.eval_phi(t).unwrap() - EXAMPLE1.phi(t)).abs() < 1e-12, "phi({t})");
        assert!((vp.eval_a(t).unwrap() - EXAMPLE1.a(t)).abs() < 1e-9, "A({t})");
        // composite quadrature of A from zero
        let panels = 64;
        let h = t.min(0.1) / panels as f64;
        let quad: f64 = (0..panels)
            .map(|p| {
                let lo = p as f64 * h;
                x.iter().zip(&w).map(|(xi, wi)| 0.5 * h * wi * EXAMPLE1.a(lo + 0.5 * h * (xi + 1.0))).sum::<f64>()
            })
            .sum();
        assert!((vp.eval_phi(t).unwrap() - quad).abs() < 1e-12, "quadrature at {t}");
        let s = t * rng.gen_range(0.9..1.0);
        assert!((vp.phi_diff(t, s) - EXAMPLE1.lag(t, s)).abs() < 1e-12);
    }
    let peak = (0..=10000).map(|i| EXAMPLE1.phi(i as f64 * 1e-5).abs()).fold(0.0, f64::max);
    assert!((vp.max_excursion(0.1).unwrap() - peak).abs() < 1e-3 * peak);
}

#[test]
fn entries_match_quadrature_oracle_on_a_coarse_grid() {
    let grid = TimeGrid::from_horizon(0.1, 256).unwrap();
    let vp = VectorPotential::pulse(3000.0, 300.0, 0.1).unwrap();
    let eng = EntryEngine::new(vp, grid, QuadConfig::default()).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let mut cases: Vec<(usize, usize)> = vec![(1, 1), (256, 256), (256, 1), (2, 1), (129, 128)];
    cases.extend((0..40).map(|_| {
        let m = rng.gen_range(1..=256);
        (m, rng.gen_range(1..=m))
    }));
    for (m, n) in cases {
        let (s, d) = eng.entry_pair(m, n).unwrap();
        let (os, od) = common::entry(&EXAMPLE1, grid.dt(), m, n, 1e-13);
        assert!((s - os).norm() < 1e-11, "S({m},{n}): {s} vs {os}");
        assert!((d - od).norm() < 1e-11, "D({m},{n}): {d} vs {od}");
    }
}

#[test]
fn zero_field_entries_have_closed_forms() {
    let grid = TimeGrid::new(300, 1e-4).unwrap();
    let eng = EntryEngine::new(VectorPotential::Zero, grid, QuadConfig::default()).unwrap();
    let zero = Pulse { a0: 0.0, ..EXAMPLE1 };
    for (m, n) in [(1, 1), (300, 300), (300, 1), (17, 5), (200, 199)] {
        let (s, d) = eng.entry_pair(m, n).unwrap();
        let want = common::free_single_layer(1e-4, m, n);
        assert!((s - want).norm() < 1e-14, "S({m},{n})");
        assert_eq!(d, C64::default());
        // the quadrature oracle agrees with the closed form
        assert!((common::entry(&zero, 1e-4, m, n, 1e-15).0 - want).norm() < 1e-14);
    }
}
