//! Dense kernels shared by the weight solvers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative threshold on the pivoted diagonal of `R` below which a
/// least-squares matrix is declared rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Householder QR with column pivoting (largest remaining column norm),
/// `A P = Q R`, for tall matrices.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    /// Householder vectors, `v_k` occupying rows `k..` of column `k`.
    reflectors: DMatrix<f64>,
    r: DMatrix<f64>,
    /// `perm[k]` is the original column in position `k`.
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        let steps = rows.min(cols);
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut reflectors = DMatrix::zeros(rows, steps);
        let mut norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm_squared()).collect();

        for k in 0..steps {
            let (mut best, mut best_norm) = (k, -1.0);
            for (j, &nj) in norms.iter().enumerate().skip(k) {
                if nj > best_norm {
                    best = j;
                    best_norm = nj;
                }
            }
            if best != k {
                a.swap_columns(k, best);
                perm.swap(k, best);
                norms.swap(k, best);
            }
            let x_norm = a.view((k, k), (rows - k, 1)).norm();
            if x_norm == 0.0 {
                for j in k..cols {
                    norms[j] = 0.0;
                }
                continue;
            }
            let alpha = if a[(k, k)] > 0.0 { -x_norm } else { x_norm };
            let mut v: Vec<f64> = (k..rows).map(|i| a[(i, k)]).collect();
            v[0] -= alpha;
            let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= v_norm;
            }
            for j in k..cols {
                let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * a[(k + t, j)]).sum();
                for (t, vt) in v.iter().enumerate() {
                    a[(k + t, j)] -= 2.0 * vt * dot;
                }
            }
            for (t, vt) in v.iter().enumerate() {
                reflectors[(k + t, k)] = *vt;
            }
            for j in k + 1..cols {
                norms[j] = a.view((k + 1, j), (rows - k - 1, 1)).norm_squared();
            }
        }
        let r = a.rows(0, steps).upper_triangle();
        PivotedQr {
            rows,
            cols,
            reflectors,
            r,
            perm,
        }
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Numerical rank: diagonal entries of `R` above `tol * |R_00|`.
    pub fn rank(&self, tol: f64) -> usize {
        let steps = self.rows.min(self.cols);
        if steps == 0 {
            return 0;
        }
        let lead = self.r[(0, 0)].abs();
        if lead == 0.0 {
            return 0;
        }
        (0..steps)
            .take_while(|&k| self.r[(k, k)].abs() > tol * lead)
            .count()
    }

    /// Computes `Q R^{-T} P^T p`, i.e. the minimum-norm vector `y` with
    /// `A^T y = p`.
    pub fn solve_transposed(&self, p: &[f64]) -> Vec<f64> {
        let n = self.cols;
        // forward substitution R^T z = P^T p
        let mut z = vec![0.0; n];
        for k in 0..n {
            let mut s = p[self.perm[k]];
            for i in 0..k {
                s -= self.r[(i, k)] * z[i];
            }
            z[k] = s / self.r[(k, k)];
        }
        // y = Q [z; 0] = H_0 H_1 ... H_{n-1} [z; 0]
        let mut y = vec![0.0; self.rows];
        y[..n].copy_from_slice(&z);
        for k in (0..n).rev() {
            let v = self.reflectors.view((k, k), (self.rows - k, 1));
            let dot: f64 = v.iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            for (t, vt) in v.iter().enumerate() {
                y[k + t] -= 2.0 * vt * dot;
            }
        }
        y
    }
}

/// Fails with an unisolvency error unless `a` has full column rank.
pub fn require_full_rank(qr: &PivotedQr, degree: usize) -> Result<()> {
    let rank = qr.rank(RANK_TOLERANCE);
    if rank < qr.cols {
        return Err(Error::Unisolvent {
            degree,
            rank,
            size: qr.cols,
        });
    }
    Ok(())
}
