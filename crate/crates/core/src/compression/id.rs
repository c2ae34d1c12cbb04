//! Column interpolative decomposition by truncated pivoted Householder QR.

use num_complex::Complex64 as C64;

use super::Mat;

/// `A ~= A[:, skeleton] * interp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolative {
    pub skeleton: Vec<usize>,
    /// `rank x cols`.
    pub interp: Mat,
}

impl Interpolative {
    pub fn rank(&self) -> usize {
        self.skeleton.len()
    }
}

/// Stops at the first pivot below `eps` times the leading pivot, or after
/// `max_rank + 1` columns (callers treat `rank > max_rank` as failure).
pub fn interpolative_decomposition(a: &Mat, eps: f64, max_rank: usize) -> Interpolative {
    let (m, k) = (a.rows(), a.cols());
    let mut w = a.data().to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let limit = m.min(k).min(max_rank + 1);
    let mut lead = 0.0f64;
    let mut rank = 0;
    // exact residual norms, recomputed while each reflector is applied;
    // avoids the downdating drift of the cheap update
    let mut norms: Vec<f64> = (0..k).map(|c| w[c * m..(c + 1) * m].iter().map(|z| z.norm_sqr()).sum()).collect();
    let mut v: Vec<C64> = Vec::with_capacity(m);
    for j in 0..limit {
        let mut best = j;
        let mut best_norm = -1.0;
        for (c, &nrm) in norms.iter().enumerate().skip(j) {
            if nrm > best_norm {
                best_norm = nrm;
                best = c;
            }
        }
        let pivot = best_norm.sqrt();
        if j == 0 {
            lead = pivot;
        }
        if pivot == 0.0 || pivot <= eps * lead {
            break;
        }
        if best != j {
            for i in 0..m {
                w.swap(j * m + i, best * m + i);
            }
            perm.swap(j, best);
            norms.swap(j, best);
        }
        // Householder reflector zeroing w[j+1.., j]
        let x0 = w[j * m + j];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * pivot;
        v.clear();
        v.extend_from_slice(&w[j * m + j..(j + 1) * m]);
        v[0] -= alpha;
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        for c in j + 1..k {
            let col = &mut w[c * m + j..(c + 1) * m];
            if vn > 0.0 {
                let dot: C64 = v.iter().zip(col.iter()).map(|(vi, ci)| vi.conj() * ci).sum();
                let f = dot * (2.0 / vn);
                let mut tail = 0.0;
                col[0] -= f * v[0];
                for (ci, vi) in col[1..].iter_mut().zip(&v[1..]) {
                    *ci -= f * vi;
                    tail += ci.norm_sqr();
                }
                norms[c] = tail;
            } else {
                norms[c] = col[1..].iter().map(|z| z.norm_sqr()).sum();
            }
        }
        w[j * m + j] = alpha;
        for i in j + 1..m {
            w[j * m + i] = C64::new(0.0, 0.0);
        }
        rank = j + 1;
    }
    // solve R11 X = R12
    let r = rank;
    let mut interp = Mat::zeros(r, k);
    for q in 0..r {
        interp.data_mut()[perm[q] * r + q] = C64::new(1.0, 0.0);
    }
    for c in r..k {
        let mut x: Vec<C64> = (0..r).map(|i| w[c * m + i]).collect();
        for i in (0..r).rev() {
            let mut s = x[i];
            for l in i + 1..r {
                s -= w[l * m + i] * x[l];
            }
            x[i] = s / w[i * m + i];
        }
        interp.data_mut()[perm[c] * r..perm[c] * r + r].copy_from_slice(&x);
    }
    Interpolative { skeleton: perm[..r].to_vec(), interp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn reconstruct(a: &Mat, id: &Interpolative) -> Mat {
        let sk = a.select_cols(&id.skeleton);
        let mut out = Mat::zeros(a.rows(), a.cols());
        for j in 0..a.cols() {
            let mut y = vec![C64::default(); a.rows()];
            sk.gemv_acc(id.interp.col(j), &mut y);
            out.data_mut()[j * a.rows()..(j + 1) * a.rows()].copy_from_slice(&y);
        }
        out
    }

    #[test]
    fn low_rank_exactly_recovered() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let (m, k, r) = (40, 30, 5);
        let u = Mat::from_fn(m, r, |_, _| C64::new(rng.gen(), rng.gen()));
        let v = Mat::from_fn(r, k, |_, _| C64::new(rng.gen(), rng.gen()));
        let a = Mat::from_fn(m, k, |i, j| (0..r).map(|l| u.get(i, l) * v.get(l, j)).sum());
        let id = interpolative_decomposition(&a, 1e-12, 60);
        assert_eq!(id.rank(), r);
        let rec = reconstruct(&a, &id);
        let err: f64 = rec.data().iter().zip(a.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-11 * a.frobenius());
        // skeleton columns are reproduced by unit columns
        for (q, &c) in id.skeleton.iter().enumerate() {
            for p in 0..id.rank() {
                let want = if p == q { 1.0 } else { 0.0 };
                assert_eq!(id.interp.get(p, c), C64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let id = interpolative_decomposition(&Mat::zeros(10, 6), 1e-8, 60);
        assert_eq!(id.rank(), 0);
        assert_eq!(id.interp.rows(), 0);
    }

    #[test]
    fn respects_rank_cap() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let a = Mat::from_fn(50, 50, |_, _| C64::new(rng.gen(), rng.gen()));
        assert_eq!(interpolative_decomposition(&a, 1e-14, 7).rank(), 8);
    }

    #[test]
    fn empty_row_count() {
        let id = interpolative_decomposition(&Mat::zeros(0, 6), 1e-8, 60);
        assert_eq!(id.rank(), 0);
    }
}
