use num_complex::Complex64 as C64;
use proptest::prelude::*;

use tbc_core::boundary::build_partition_padded;
use tbc_core::compression::{compress, CompressionConfig, FnOracle, Mat};
use tbc_core::config::{BarrierSpec, BoundaryMode, FieldSpec, InitialSpec, SimulationConfig};
use tbc_core::solver::thomas;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

prop_compose! {
    fn config()(
        x0 in 0.5..5.0f64,
        intervals in 16usize..5000,
        horizon in 1e-3..1.0f64,
        steps in 1usize..100_000,
        pulse in proptest::option::of((-5e3..5e3f64, 0.0..1e3f64, 1e-3..1.0f64)),
        barrier in proptest::option::of((0.0..5e3f64, 0.01..1.0f64, -0.4..0.4f64)),
        packet in proptest::option::of((0.01..1.0f64, -50.0..50.0f64, -0.4..0.4f64)),
        mode in 0usize..3,
        eps in 1e-12..1e-2f64,
        leaf in 8usize..256,
        max_rank in 1usize..200,
        stride in 0usize..100,
    ) -> SimulationConfig {
        let mut c = SimulationConfig::new(x0, intervals, horizon, steps);
        if let Some((a0, omega, duration)) = pulse {
            c.field = FieldSpec::Pulse { a0, omega, duration };
        }
        if let Some((vmax, beta, center)) = barrier {
            c.barrier = BarrierSpec::Gaussian { vmax, beta, center: center * x0 };
        }
        if let Some((alpha, k, mu)) = packet {
            c.initial = InitialSpec::Gaussian { alpha, k, mu: mu * x0 };
        }
        c.boundary.mode = [BoundaryMode::TbcButterfly, BoundaryMode::TbcDirect, BoundaryMode::Dirichlet][mode];
        if mode == 2 {
            c.boundary.half_width = Some(3.0 * x0);
        }
        c.boundary.eps = eps;
        c.boundary.leaf = leaf;
        c.boundary.max_rank = max_rank;
        c.snapshot_stride = stride;
        c
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_text_roundtrips(c in config()) {
        let text = c.to_canonical();
        let back = SimulationConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_canonical(), text);
        prop_assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partition_covers_each_entry_once(steps in 1usize..700, leaf in 1usize..40) {
        let p = build_partition_padded(steps, leaf).unwrap();
        let mut hits = vec![0u8; steps * steps];
        for b in p.blocks() {
            prop_assert!(b.col_hi < b.row_lo, "block {:?} reaches the diagonal", b);
            prop_assert!(b.row_hi <= steps);
            for m in b.row_lo..=b.row_hi {
                for n in b.col_lo..=b.col_hi {
                    hits[(m - 1) * steps + n - 1] += 1;
                }
            }
        }
        for s in p.strips() {
            for m in s.lo..=s.hi.min(steps) {
                for n in s.lo..m {
                    hits[(m - 1) * steps + n - 1] += 1;
                }
            }
        }
        for m in 1..=steps {
            for n in 1..m {
                prop_assert_eq!(hits[(m - 1) * steps + n - 1], 1, "entry ({}, {})", m, n);
            }
        }
        // blocks become applicable in order
        prop_assert!(p.blocks().windows(2).all(|w| w[0].col_hi <= w[1].col_hi));
    }

    #[test]
    fn compressed_apply_is_linear_and_accurate(
        freq in 1.0..30.0f64,
        shift in 0.5..2.0f64,
        xs in proptest::collection::vec(c64(), 192),
        ys in proptest::collection::vec(c64(), 192),
        a in c64(),
        b in c64(),
    ) {
        let n = 192;
        let f = move |i: usize, j: usize| {
            let (x, y) = (i as f64 / n as f64 + shift, j as f64 / n as f64);
            C64::from_polar(1.0 / (x - y + 0.1), freq * x * y)
        };
        let dense = Mat::from_fn(n, n, &f);
        let eps = 1e-9;
        let blk = compress(&FnOracle::new(n, n, f), &CompressionConfig { eps, leaf: 16, max_rank: 64 }).unwrap();
        let combo: Vec<C64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
        let (bx, by, bc) = (blk.apply(&xs).unwrap(), blk.apply(&ys).unwrap(), blk.apply(&combo).unwrap());
        let scale = bc.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for i in 0..n {
            prop_assert!((bc[i] - (a * bx[i] + b * by[i])).norm() <= 1e-12 * scale);
        }
        let mut want = vec![C64::default(); n];
        dense.gemv_acc(&xs, &mut want);
        let err = bx.iter().zip(&want).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let xn = xs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err <= 10.0 * eps * dense.frobenius() * xn, "err {:e}", err);
        prop_assert!(blk.storage_report().factors <= n * n);
    }

    #[test]
    fn thomas_leaves_small_residual(
        n in 2usize..300,
        seed in proptest::collection::vec((c64(), c64(), c64(), c64()), 300),
    ) {
        let lower: Vec<C64> = seed[..n].iter().map(|s| s.0).collect();
        let upper: Vec<C64> = seed[..n].iter().map(|s| s.1).collect();
        // diagonally dominant, as in the Crank-Nicolson matrices
        let diag: Vec<C64> = seed[..n].iter().map(|s| s.2 * 0.5 + C64::new(2.5, 1.0)).collect();
        let rhs: Vec<C64> = seed[..n].iter().map(|s| s.3).collect();
        let mut x = rhs.clone();
        let mut scratch = vec![C64::default(); n];
        thomas(&lower, &diag, &upper, &mut x, &mut scratch, 0).unwrap();
        for j in 0..n {
            let mut r = diag[j] * x[j] - rhs[j];
            if j > 0 {
                r += lower[j] * x[j - 1];
            }
            if j + 1 < n {
                r += upper[j] * x[j + 1];
            }
            prop_assert!(r.norm() < 1e-13, "row {} residual {:e}", j, r.norm());
        }
    }
}
