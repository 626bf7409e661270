//! Householder least squares on column-major data.

use alloc::vec;
use alloc::vec::Vec;

pub struct LeastSquares {
    /// Input columns that entered the fit, in input order.
    pub kept: Vec<usize>,
    /// Input columns found to be linear combinations of earlier ones.
    pub collinear: Vec<usize>,
    pub coef: Vec<f64>,
    /// `(X'X)^-1` over the kept columns.
    pub xtx_inv: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Solves `min |y - X b|`. A column whose component orthogonal to the
/// earlier kept columns is below `rel_tol` times its own norm is dropped.
pub fn least_squares(cols: &[Vec<f64>], y: &[f64], rel_tol: f64) -> LeastSquares {
    let n = y.len();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut collinear = Vec::new();

    let apply = |reflectors: &[(Vec<f64>, f64)], a: &mut [f64]| {
        for (j, (v, beta)) in reflectors.iter().enumerate() {
            let s: f64 = beta * v.iter().zip(&a[j..]).map(|(p, q)| p * q).sum::<f64>();
            for (ai, vi) in a[j..].iter_mut().zip(v) {
                *ai -= s * vi;
            }
        }
    };

    for (c, col) in cols.iter().enumerate() {
        debug_assert_eq!(col.len(), n);
        let norm0 = norm(col);
        let mut a = col.clone();
        apply(&reflectors, &mut a);
        let j = reflectors.len();
        let tail = if j < n { norm(&a[j..]) } else { 0.0 };
        if norm0 == 0.0 || tail <= rel_tol * norm0 {
            collinear.push(c);
            continue;
        }
        let alpha = if a[j] > 0.0 { -tail } else { tail };
        let mut v = a[j..].to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        reflectors.push((v, 2.0 / vtv));
        let mut r = a[..j].to_vec();
        r.push(alpha);
        r_cols.push(r);
        kept.push(c);
    }

    let k = kept.len();
    let mut qty = y.to_vec();
    apply(&reflectors, &mut qty);

    // back substitution, R stored by column
    let r = |i: usize, j: usize| r_cols[j][i];
    let mut coef = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r(i, j) * coef[j]).sum();
        coef[i] = (qty[i] - s) / r(i, i);
    }

    let mut r_inv = vec![vec![0.0; k]; k];
    #[allow(clippy::needless_range_loop)]
    for col in 0..k {
        for i in (0..=col).rev() {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=col).map(|j| r(i, j) * r_inv[j][col]).sum();
            r_inv[i][col] = (rhs - s) / r(i, i);
        }
    }
    let mut xtx_inv = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (i.max(j)..k).map(|m| r_inv[i][m] * r_inv[j][m]).sum();
            xtx_inv[i][j] = s;
            xtx_inv[j][i] = s;
        }
    }

    let mut residuals = y.to_vec();
    for (b, &c) in coef.iter().zip(&kept) {
        for (e, x) in residuals.iter_mut().zip(&cols[c]) {
            *e -= b * x;
        }
    }

    LeastSquares {
        kept,
        collinear,
        coef,
        xtx_inv,
        residuals,
    }
}
