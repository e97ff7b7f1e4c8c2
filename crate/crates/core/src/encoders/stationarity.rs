//! Augmented Dickey–Fuller test and the TNC neighborhood search built on it.

use nalgebra::{DMatrix, DVector};

use crate::timeseries::MultivariateTimeSeries;

/// Lagged differences included in the test regression.
pub const ADF_LAGS: usize = 1;

/// Response-surface coefficients for the constant-only ADF regression
/// (single series): `tau = b0 + b1/T + b2/T^2 + b3/T^3` at 1%, 5%, 10%.
const TAU_C: [(f64, [f64; 4]); 3] = [
    (0.01, [-3.43035, -6.5393, -16.786, -79.433]),
    (0.05, [-2.86154, -2.8903, -4.234, -40.040]),
    (0.10, [-2.56677, -1.5384, -2.809, 0.0]),
];

/// Critical value of the ADF t-statistic at significance `alpha` for a
/// sample of `n` observations. Levels between the tabulated 1%, 5% and 10%
/// are interpolated linearly; levels outside that range are clamped.
pub fn adf_critical_value(alpha: f64, n: usize) -> f64 {
    let t = n as f64;
    let tau = |b: &[f64; 4]| b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t);
    let a = alpha.clamp(TAU_C[0].0, TAU_C[2].0);
    for pair in TAU_C.windows(2) {
        let ((a0, b0), (a1, b1)) = (pair[0], pair[1]);
        if a <= a1 {
            let f = (a - a0) / (a1 - a0);
            return (1.0 - f) * tau(&b0) + f * tau(&b1);
        }
    }
    tau(&TAU_C[2].1)
}

/// t-statistic of the lag coefficient, or `None` when the regression is
/// degenerate (too short, constant, or singular).
pub fn adf_statistic(y: &[f64], lags: usize) -> Option<f64> {
    let n = y.len();
    if n < lags + 8 {
        return None;
    }
    let dy: Vec<f64> = y.windows(2).map(|p| p[1] - p[0]).collect();
    // rows t = lags..dy.len(): dy[t] ~ 1 + y[t] + dy[t-1..t-lags]
    let m = dy.len() - lags;
    let k = 2 + lags;
    if m <= k + 1 {
        return None;
    }
    let mut x = DMatrix::<f64>::zeros(m, k);
    let mut target = DVector::<f64>::zeros(m);
    for (row, t) in (lags..dy.len()).enumerate() {
        x[(row, 0)] = 1.0;
        x[(row, 1)] = y[t];
        for j in 1..=lags {
            x[(row, 1 + j)] = dy[t - j];
        }
        target[row] = dy[t];
    }
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse()?;
    let beta = &inv * x.transpose() * &target;
    let resid = &target - &x * &beta;
    let s2 = resid.dot(&resid) / (m - k) as f64;
    let var_gamma = s2 * inv[(1, 1)];
    if !(var_gamma.is_finite() && var_gamma > 1e-300) {
        return None;
    }
    Some(beta[1] / var_gamma.sqrt())
}

/// Whether `y` looks stationary: the unit-root null is rejected at `alpha`.
/// Degenerate inputs count as stationary.
pub fn is_stationary(y: &[f64], alpha: f64) -> bool {
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len().max(1) as f64;
    if var < 1e-18 {
        return true;
    }
    match adf_statistic(y, ADF_LAGS) {
        Some(tstat) => tstat < adf_critical_value(alpha, y.len()),
        None => true,
    }
}

/// Majority vote over channels of the span `start..=end`; ties count as
/// stationary.
pub fn span_is_stationary(series: &MultivariateTimeSeries, start: usize, end: usize, alpha: f64) -> bool {
    let votes = (0..series.dim())
        .filter(|&c| is_stationary(&series.channel(c)[start..=end], alpha))
        .count();
    2 * votes >= series.dim()
}

/// Radius (in windows) of the stationary neighborhood around the window
/// ending at `anchor_end`.
///
/// The candidate span covers every window whose end lies within
/// `radius * w` of the anchor. It grows one window-width per side at a time
/// until the span fails the stationarity test or `max_radius` is reached.
/// The result is the last accepted radius and never below 1.
pub fn estimate_neighborhood(
    series: &MultivariateTimeSeries,
    anchor_end: usize,
    w: usize,
    alpha: f64,
    max_radius: usize,
) -> usize {
    let n = series.len();
    let mut radius = 1;
    for r in 2..=max_radius {
        let start = anchor_end.saturating_sub(r * w + w - 1);
        let end = (anchor_end + r * w).min(n - 1);
        if !span_is_stationary(series, start, end, alpha) {
            break;
        }
        radius = r;
    }
    radius
}
