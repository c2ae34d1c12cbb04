use super::*;
use crate::error::FormatError;
use crate::kernel::single_layer_prefactor;
use rand::{Rng, SeedableRng};

fn example1() -> VectorPotential {
    VectorPotential::pulse(3000.0, 300.0, 0.1).unwrap()
}

fn random_stream(n: usize, seed: u64) -> Vec<(C64, C64, f64)> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-3000.0..3000.0),
            )
        })
        .collect()
}

/// Streams `traces` through the history and returns every `rhs(m)`.
fn streamed_rhs(op: &BoundaryOperator, traces: &[(C64, C64, f64)]) -> Vec<C64> {
    let mut h = BoundaryHistory::new(Side::Right, op.grid().steps());
    let mut out = Vec::new();
    for (m, &(u, v, a)) in traces.iter().enumerate() {
        out.push(h.rhs(op, m + 1).unwrap());
        h.push_step(op, u, v, a).unwrap();
    }
    out
}

fn dense_rhs(engine: &EntryEngine, traces: &[(C64, C64, f64)]) -> Vec<C64> {
    let n = traces.len();
    let mut s = vec![C64::default(); n];
    let mut d = vec![C64::default(); n];
    (1..=n)
        .map(|m| {
            engine.row(m, &mut s, &mut d).unwrap();
            (0..m - 1)
                .map(|j| {
                    let (u, v, a) = traces[j];
                    d[j] * u + s[j] * (v - C64::i() * a * u)
                })
                .sum()
        })
        .collect()
}

fn small_op(vp: &VectorPotential, n: usize, dt: f64, eps: f64) -> BoundaryOperator {
    let grid = TimeGrid::new(n, dt).unwrap();
    BoundaryOperator::precompute(grid, vp, QuadConfig::default(), CompressionConfig { eps, leaf: 16, max_rank: 60 })
        .unwrap()
}

#[test]
fn zero_field_operator() {
    let dt = 1e-3;
    let op = small_op(&VectorPotential::Zero, 256, dt, 1e-10);
    let expect = C64::from_polar(2.0 / 3.0 * (dt / std::f64::consts::PI).sqrt(), -std::f64::consts::FRAC_PI_4);
    for m in 1..=256 {
        let (s, d) = op.diagonal(m);
        assert!((s - expect).norm() < 1e-13);
        assert!(d.norm() <= 1e-12);
    }
    for e in &op.strips {
        assert!(e.d.iter().all(|z| z.norm() <= 1e-12));
    }
    let r = robin_coeffs(op.diagonal(5).0, op.diagonal(5).1, Side::Right, 0.0, C64::default());
    assert!((r.alpha - C64::new(0.0, 0.5)).norm() < 1e-15);
    assert!((r.beta + expect).norm() < 1e-13);
    let l = robin_coeffs(op.diagonal(5).0, op.diagonal(5).1, Side::Left, 0.0, C64::default());
    assert!((l.alpha - C64::new(0.0, -0.5)).norm() < 1e-15);
    assert_eq!(l.beta, r.beta);
    assert!((single_layer_prefactor() * -2.0 * C64::i()
        - C64::from_polar(1.0 / std::f64::consts::PI.sqrt(), -0.75 * std::f64::consts::PI))
    .norm()
        < 1e-15);
}

#[test]
fn zero_history_gives_zero_rhs() {
    let op = small_op(&example1(), 64, 1e-5, 1e-8);
    let zeros = vec![(C64::default(), C64::default(), 0.0); 64];
    assert!(streamed_rhs(&op, &zeros).iter().all(|z| *z == C64::default()));
}

#[test]
fn dense_blocks_match_dense_rows() {
    let n = 512;
    let grid = TimeGrid::from_horizon(0.1, n).unwrap();
    let op = BoundaryOperator::precompute(
        grid,
        &example1(),
        QuadConfig::default(),
        CompressionConfig { eps: 0.0, leaf: 16, max_rank: 60 },
    )
    .unwrap();
    let engine = EntryEngine::new(example1(), grid, QuadConfig::default()).unwrap();
    let traces = random_stream(n, 11);
    let got = streamed_rhs(&op, &traces);
    let want = dense_rhs(&engine, &traces);
    let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (m, (g, w)) in got.iter().zip(&want).enumerate() {
        assert!((g - w).norm() <= 1e-10 * scale, "m={}", m + 1);
    }
    assert_eq!(got[0], C64::default());
}

#[test]
fn compressed_blocks_match_dense_rows() {
    let n = 1024;
    let grid = TimeGrid::from_horizon(0.1, n).unwrap();
    let eps = 1e-8;
    let op = BoundaryOperator::precompute(
        grid,
        &example1(),
        QuadConfig::default(),
        CompressionConfig { eps, leaf: 32, max_rank: 60 },
    )
    .unwrap();
    assert!(op.s_blocks().iter().any(|b| b.is_butterfly()));
    let engine = EntryEngine::new(example1(), grid, QuadConfig::default()).unwrap();
    let traces = random_stream(n, 12);
    let got = streamed_rhs(&op, &traces);
    let want = dense_rhs(&engine, &traces);
    let num = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let den = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(num / den <= 1e-6, "relative error {}", num / den);
}

#[test]
fn blocks_fire_when_columns_complete() {
    let op = small_op(&example1(), 64, 1e-5, 0.0);
    // rows 33..64 x cols 1..32 must fire exactly at step 32
    let mut h = BoundaryHistory::new(Side::Left, 64);
    let one = C64::new(1.0, 0.0);
    for m in 1..=31 {
        h.push_step(&op, one, one, 0.0).unwrap();
        assert!(h.accumulator()[32..].iter().all(|z| *z == C64::default()), "fired early at {m}");
    }
    h.push_step(&op, one, one, 0.0).unwrap();
    assert!(h.accumulator()[32..].iter().all(|z| *z != C64::default()));
}

#[test]
fn out_of_order_is_contract_violation() {
    let op = small_op(&VectorPotential::Zero, 32, 1e-3, 0.0);
    let mut h = BoundaryHistory::new(Side::Right, 32);
    assert!(matches!(h.rhs(&op, 3), Err(Error::Contract(_))));
    for _ in 0..32 {
        h.push_step(&op, C64::default(), C64::default(), 0.0).unwrap();
    }
    assert!(matches!(h.push_step(&op, C64::default(), C64::default(), 0.0), Err(Error::Contract(_))));
}

#[test]
fn robin_coefficients_match_entries() {
    let grid = TimeGrid::new(128, 1e-5).unwrap();
    let op = BoundaryOperator::precompute(grid, &example1(), QuadConfig::default(), CompressionConfig::default())
        .unwrap();
    let vp = example1();
    let s = crate::kernel::entry_s(&vp, &grid, 100, 100, &QuadConfig::default()).unwrap();
    let d = crate::kernel::entry_d(&vp, &grid, 100, 100, &QuadConfig::default()).unwrap();
    let a = vp.eval_a(grid.t(100)).unwrap();
    let r = robin_coeffs(op.diagonal(100).0, op.diagonal(100).1, Side::Right, a, C64::default());
    assert!((r.alpha - (C64::new(0.0, 0.5) + C64::i() * s * a - d)).norm() < 1e-12);
    assert!((r.beta + s).norm() < 1e-14);
}

fn bytes(op: &BoundaryOperator) -> Vec<u8> {
    let mut b = Vec::new();
    write_operator(op, &mut b).unwrap();
    b
}

#[test]
fn container_round_trip() {
    let op = small_op(&example1(), 200, 5e-4, 1e-8);
    let b1 = bytes(&op);
    let loaded = read_operator(&mut b1.as_slice()).unwrap();
    assert_eq!(bytes(&loaded), b1);
    let traces = random_stream(200, 3);
    assert_eq!(streamed_rhs(&op, &traces), streamed_rhs(&loaded, &traces));
    assert_eq!(loaded.descriptor(), op.descriptor());
}

#[test]
fn container_errors_are_distinct() {
    let op = small_op(&VectorPotential::Zero, 64, 1e-3, 1e-8);
    let good = bytes(&op);
    let err = |b: &[u8]| match read_operator(&mut &b[..]) {
        Err(Error::Format(f)) => f,
        other => panic!("expected format error, got {:?}", other.map(|_| ())),
    };
    assert_eq!(err(&good[..good.len() - 3]), FormatError::Truncated);
    assert_eq!(err(&good[..10]), FormatError::Truncated);
    let mut b = good.clone();
    b[0] = b'X';
    assert_eq!(err(&b), FormatError::BadMagic);
    let mut b = good.clone();
    b[4..8].copy_from_slice(&1u32.to_be_bytes());
    assert_eq!(err(&b), FormatError::Endianness);
    let mut b = good.clone();
    b[4..8].copy_from_slice(&7u32.to_le_bytes());
    assert_eq!(err(&b), FormatError::Version(7));
    let mut b = good.clone();
    b[20] ^= 1;
    assert_eq!(err(&b), FormatError::HeaderChecksum);
    let mut b = good.clone();
    let last = b.len() - 80;
    b[last] ^= 0x40;
    assert!(matches!(err(&b), FormatError::PayloadChecksum(_)));
}

#[test]
fn mismatch_reports_diff() {
    let op = small_op(&example1(), 64, 1e-5, 1e-8);
    assert!(op.check_compatible(op.grid(), &example1().descriptor()).is_ok());
    let other = VectorPotential::pulse(3000.0, 299.0, 0.1).unwrap();
    match op.check_compatible(op.grid(), &other.descriptor()) {
        Err(Error::OperatorMismatch(msg)) => assert!(msg.contains("omega")),
        _ => panic!("expected mismatch"),
    }
    let grid = TimeGrid::new(63, 1e-5).unwrap();
    assert!(op.check_compatible(&grid, op.descriptor()).is_err());
}

#[test]
fn dense_row_reassembles_entries() {
    let grid = TimeGrid::from_horizon(0.1, 160).unwrap();
    let op = BoundaryOperator::precompute(
        grid,
        &example1(),
        QuadConfig::default(),
        CompressionConfig { eps: 0.0, leaf: 16, max_rank: 60 },
    )
    .unwrap();
    let engine = EntryEngine::new(example1(), grid, QuadConfig::default()).unwrap();
    let (s, d) = op.dense_row(150).unwrap();
    for n in 1..=150 {
        let (es, ed) = engine.entry_pair(150, n).unwrap();
        assert!((s[n - 1] - es).norm() < 1e-13 * (1.0 + es.norm()));
        assert!((d[n - 1] - ed).norm() < 1e-13 * (1.0 + ed.norm()));
    }
}

#[test]
fn direct_source_matches_streaming() {
    let grid = TimeGrid::from_horizon(0.1, 300).unwrap();
    let op = BoundaryOperator::precompute(
        grid,
        &example1(),
        QuadConfig::default(),
        CompressionConfig { eps: 0.0, leaf: 16, max_rank: 60 },
    )
    .unwrap();
    let mut a = StreamingTbc::new(&op);
    let mut b = DirectTbc::new(EntryEngine::new(example1(), grid, QuadConfig::default()).unwrap());
    let traces = random_stream(300, 8);
    for (m, &(u, v, am)) in traces.iter().enumerate() {
        for side in [Side::Left, Side::Right] {
            let ra = a.robin(side, m + 1, am).unwrap();
            let rb = b.robin(side, m + 1, am).unwrap();
            assert!((ra.gamma - rb.gamma).norm() <= 1e-11 * (1.0 + rb.gamma.norm()));
            assert!((ra.alpha - rb.alpha).norm() <= 1e-13);
            a.push(side, u, v, am).unwrap();
            b.push(side, u, v, am).unwrap();
        }
    }
    assert!(b.timing().row_generation > Duration::ZERO);
}

#[test]
fn split_blocks_round_trip() {
    let grid = TimeGrid::new(1024, 1e-4).unwrap();
    let comp = CompressionConfig { eps: 1e-10, leaf: 16, max_rank: 6 };
    let op = BoundaryOperator::precompute(grid, &example1(), QuadConfig::default(), comp).unwrap();
    let split = |b: &CompressedBlock| matches!(b.storage(), crate::compression::Storage::Split(_));
    assert!(op.s_blocks().iter().chain(op.d_blocks()).any(split), "rank cap 6 should force quadrant splits");
    let b1 = bytes(&op);
    let loaded = read_operator(&mut b1.as_slice()).unwrap();
    assert_eq!(bytes(&loaded), b1);
    let traces = random_stream(1024, 9);
    assert_eq!(streamed_rhs(&op, &traces), streamed_rhs(&loaded, &traces));
}
