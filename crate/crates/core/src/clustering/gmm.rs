use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Added to every covariance diagonal.
const REG_COVAR: f64 = 1e-6;

/// Hard labels from a full-covariance Gaussian mixture fitted by EM,
/// started from the responsibilities implied by `init`.
pub(crate) fn gmm_labels(points: &[f64], dim: usize, k: usize, init: &[usize], max_iter: usize, tol: f64) -> Result<Vec<usize>> {
    let n = init.len();
    if points.len() != n * dim || init.iter().any(|&a| a >= k) {
        return Err(Error::Shape {
            op: "gmm_labels",
            left: vec![n, dim],
            right: vec![points.len()],
        });
    }
    let x = DMatrix::from_row_slice(n, dim, points);
    let mut resp = DMatrix::<f64>::zeros(n, k);
    for (i, &a) in init.iter().enumerate() {
        resp[(i, a)] = 1.0;
    }
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        let mut log_prob = DMatrix::<f64>::zeros(n, k);
        for j in 0..k {
            let r = resp.column(j);
            let nk = r.sum() + 10.0 * f64::EPSILON;
            let mean: DVector<f64> = x.tr_mul(&r) / nk;
            let mut centered = x.clone();
            for mut row in centered.row_iter_mut() {
                row -= mean.transpose();
            }
            let mut weighted = centered.clone();
            for (mut row, w) in weighted.row_iter_mut().zip(r.iter()) {
                row *= *w;
            }
            let mut cov = weighted.tr_mul(&centered) / nk;
            cov = (&cov + cov.transpose()) * 0.5;
            for d in 0..dim {
                cov[(d, d)] += REG_COVAR;
            }
            let l = cov
                .cholesky()
                .ok_or_else(|| Error::numerical("mixture covariance is not positive definite"))?
                .l();
            let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let solved = l
                .solve_lower_triangular(&centered.transpose())
                .ok_or_else(|| Error::numerical("mixture covariance is singular"))?;
            let constant = (nk / n as f64).ln() - 0.5 * (dim as f64 * (2.0 * PI).ln() + log_det);
            for (i, col) in solved.column_iter().enumerate() {
                log_prob[(i, j)] = constant - 0.5 * col.norm_squared();
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            let row = log_prob.row(i);
            let max = row.max();
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse;
            for j in 0..k {
                resp[(i, j)] = (log_prob[(i, j)] - lse).exp();
            }
        }
        let mean_ll = total / n as f64;
        if (mean_ll - previous).abs() < tol {
            break;
        }
        previous = mean_ll;
    }
    Ok((0..n).map(|i| resp.row(i).transpose().argmax().0).collect())
}
