use std::time::Instant;

use num_complex::Complex64 as C64;

use super::{robin_coeffs, BcTiming, Robin, RobinSource, Side};
use crate::error::{contract, Result};
use crate::kernel::EntryEngine;

#[derive(Debug, Clone, Default)]
struct Traces {
    u: Vec<C64>,
    q: Vec<C64>,
}

/// Robin data from full matrix rows built at each step.
///
/// Rows are generated on the fly since dense storage of both matrices is
/// quadratic in `N`; generation time is reported separately from the row
/// application that a stored-matrix scheme would also pay.
pub struct DirectTbc {
    engine: EntryEngine,
    row: usize,
    s_row: Vec<C64>,
    d_row: Vec<C64>,
    left: Traces,
    right: Traces,
    timing: BcTiming,
}

impl DirectTbc {
    pub fn new(engine: EntryEngine) -> Self {
        let n = engine.grid().steps();
        Self {
            engine,
            row: 0,
            s_row: vec![C64::new(0.0, 0.0); n],
            d_row: vec![C64::new(0.0, 0.0); n],
            left: Traces { u: Vec::with_capacity(n), q: Vec::with_capacity(n) },
            right: Traces { u: Vec::with_capacity(n), q: Vec::with_capacity(n) },
            timing: BcTiming::default(),
        }
    }

    fn traces(&mut self, side: Side) -> &mut Traces {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }
}

impl RobinSource for DirectTbc {
    fn steps(&self) -> usize {
        self.engine.grid().steps()
    }

    fn robin(&mut self, side: Side, m: usize, a_m: f64) -> Result<Robin> {
        if m != self.traces(side).u.len() + 1 {
            return Err(contract(format!("robin({m}) out of order")));
        }
        if self.row != m {
            let start = Instant::now();
            self.engine.row(m, &mut self.s_row, &mut self.d_row)?;
            self.row = m;
            self.timing.row_generation += start.elapsed();
        }
        let start = Instant::now();
        let tr = match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        };
        let mut gamma = C64::new(0.0, 0.0);
        for ((s, d), (u, q)) in self.s_row[..m - 1].iter().zip(&self.d_row[..m - 1]).zip(tr.u.iter().zip(&tr.q)) {
            gamma += d * u + s * q;
        }
        self.timing.block_apply += start.elapsed();
        self.timing.block_flops += 16 * (m as u64 - 1);
        let start = Instant::now();
        let r = robin_coeffs(self.s_row[m - 1], self.d_row[m - 1], side, a_m, gamma);
        self.timing.robin += start.elapsed();
        Ok(r)
    }

    fn push(&mut self, side: Side, u: C64, v: C64, a_m: f64) -> Result<()> {
        let n = self.steps();
        let tr = self.traces(side);
        if tr.u.len() >= n {
            return Err(contract("history already holds every step"));
        }
        tr.u.push(u);
        tr.q.push(v - C64::i() * a_m * u);
        Ok(())
    }

    fn timing(&self) -> BcTiming {
        self.timing
    }
}
