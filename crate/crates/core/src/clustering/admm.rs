use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 1.0;
pub const DEFAULT_THRESHOLD: f64 = 2e-5;
pub const MAX_ADMM_ITER: usize = 1000;

pub fn soft_threshold(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

/// Index groups of a symmetric block-Toeplitz matrix with `blocks × blocks`
/// sub-blocks of size `block × block`. Entries in one group are tied.
#[derive(Clone, Debug)]
pub struct ToeplitzGroups {
    pub block: usize,
    pub blocks: usize,
    groups: Vec<Vec<(usize, usize)>>,
}

impl ToeplitzGroups {
    pub fn new(block: usize, blocks: usize) -> Self {
        let mut groups = Vec::new();
        for lag in 0..blocks {
            for a in 0..block {
                let b_start = if lag == 0 { a } else { 0 };
                for b in b_start..block {
                    let mut g = Vec::new();
                    for i in 0..blocks - lag {
                        let r = i * block + a;
                        let c = (i + lag) * block + b;
                        g.push((r, c));
                        if r != c {
                            g.push((c, r));
                        }
                    }
                    groups.push(g);
                }
            }
        }
        ToeplitzGroups { block, blocks, groups }
    }

    pub fn size(&self) -> usize {
        self.block * self.blocks
    }

    pub fn iter(&self) -> impl Iterator<Item = &[(usize, usize)]> {
        self.groups.iter().map(Vec::as_slice)
    }

    /// Replaces every group by its mean.
    pub fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for g in self.iter() {
            let mean = g.iter().map(|&(r, c)| m[(r, c)]).sum::<f64>() / g.len() as f64;
            for &(r, c) in g {
                out[(r, c)] = mean;
            }
        }
        out
    }

    /// Largest spread between tied entries.
    pub fn max_tie_violation(&self, m: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for g in self.iter() {
            let first = m[g[0]];
            for &rc in g {
                worst = worst.max((m[rc] - first).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    pub threshold: f64,
    pub max_iter: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: DEFAULT_RHO,
            threshold: DEFAULT_THRESHOLD,
            max_iter: MAX_ADMM_ITER,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdmmSolution {
    pub precision: DMatrix<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

/// Block-Toeplitz graphical lasso.
///
/// Minimizes `-log det Θ + tr(SΘ) + (λ / n_samples)·‖Θ‖₁` over symmetric
/// block-Toeplitz Θ. Multiplying by `n_samples / 2` gives the summed Gaussian
/// negative log-likelihood of the samples plus `λ/2 · ‖Θ‖₁`.
/// `warm` seeds the split variable.
pub fn toeplitz_glasso_admm(
    s: &DMatrix<f64>,
    groups: &ToeplitzGroups,
    lambda: f64,
    n_samples: usize,
    config: &AdmmConfig,
    warm: Option<&DMatrix<f64>>,
) -> Result<AdmmSolution> {
    let n = groups.size();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::Shape {
            op: "toeplitz_glasso_admm",
            left: vec![n, n],
            right: vec![s.nrows(), s.ncols()],
        });
    }
    if !(lambda >= 0.0) || n_samples == 0 || !(config.rho > 0.0) {
        return Err(Error::config("ADMM needs lambda >= 0, rho > 0 and at least one sample"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite covariance"));
    }
    let asym = (s - s.transpose()).abs().max();
    if asym > 1e-9 * (1.0 + s.abs().max()) {
        return Err(Error::data(format!("covariance is not symmetric (max asymmetry {asym:e})")));
    }
    let rho = config.rho;
    let kappa = lambda / n_samples as f64 / rho;
    let mut z = match warm {
        Some(w) => groups.project(w),
        None => DMatrix::identity(n, n),
    };
    let mut u = DMatrix::zeros(n, n);
    let mut iterations = 0;
    let (primal, dual) = loop {
        iterations += 1;
        let mut a = (&z - &u) * rho - s;
        a = (&a + a.transpose()) * 0.5;
        let eig = a.symmetric_eigen();
        let mapped = eig
            .eigenvalues
            .map(|d| (d + (d * d + 4.0 * rho).sqrt()) / (2.0 * rho));
        let theta = &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose();
        let v = &theta + &u;
        let mut z_next = DMatrix::zeros(n, n);
        for g in groups.iter() {
            let mean = g.iter().map(|&rc| v[rc]).sum::<f64>() / g.len() as f64;
            let shrunk = soft_threshold(mean, kappa);
            for &rc in g {
                z_next[rc] = shrunk;
            }
        }
        u += &theta - &z_next;
        let primal = (&theta - &z_next).norm();
        let dual = rho * (&z_next - &z).norm();
        z = z_next;
        if primal.max(dual) < config.threshold || iterations >= config.max_iter {
            break (primal, dual);
        }
    };
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("ADMM diverged"));
    }
    if z.clone().cholesky().is_none() {
        let smallest = z.clone().symmetric_eigen().eigenvalues.min();
        return Err(Error::numerical(format!(
            "ADMM precision estimate is not positive definite (smallest eigenvalue {smallest:e})"
        )));
    }
    Ok(AdmmSolution {
        precision: z,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged: primal.max(dual) < config.threshold,
    })
}

/// `-log det Θ + tr(SΘ) + penalty·‖Θ‖₁`, or infinity when Θ is not PD.
pub fn glasso_objective(s: &DMatrix<f64>, theta: &DMatrix<f64>, penalty: f64) -> f64 {
    match theta.clone().cholesky() {
        Some(ch) => {
            let log_det = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let trace = s.component_mul(theta).sum();
            -log_det + trace + penalty * theta.iter().map(|v| v.abs()).sum::<f64>()
        }
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Empirical covariance of `10 n` standard normal draws.
    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, 10 * n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        &a * a.transpose() / (10 * n) as f64
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft_threshold(0.3, 0.5), 0.0);
        assert!((soft_threshold(0.8, 0.5) - 0.3).abs() < 1e-15);
        assert!((soft_threshold(-0.8, 0.5) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn scalar_inverse() {
        let g = ToeplitzGroups::new(1, 1);
        let s = DMatrix::from_element(1, 1, 2.0);
        let sol = toeplitz_glasso_admm(&s, &g, 0.0, 1, &AdmmConfig::default(), None).unwrap();
        assert!((sol.precision[(0, 0)] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn group_layout() {
        let g = ToeplitzGroups::new(2, 3);
        // lag 0: 3 groups, lags 1 and 2: 4 groups each
        assert_eq!(g.iter().count(), 11);
        let covered: usize = g.iter().map(<[_]>::len).sum();
        assert_eq!(covered, 36);
    }

    #[test]
    fn matches_inverse_without_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = ToeplitzGroups::new(4, 1);
        let cfg = AdmmConfig {
            threshold: 1e-10,
            ..AdmmConfig::default()
        };
        for _ in 0..10 {
            let s = random_psd(4, &mut rng);
            let sol = toeplitz_glasso_admm(&s, &g, 0.0, 1, &cfg, None).unwrap();
            assert!(sol.converged);
            let inv = s.clone().try_inverse().unwrap();
            let err = (&sol.precision - &inv).abs().max();
            assert!(err < 1e-6, "error {err}");
        }
    }

    #[test]
    fn toeplitz_structure_and_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ToeplitzGroups::new(3, 4);
        for lambda in [0.0, 0.05, 0.5] {
            let s = random_psd(12, &mut rng);
            let sol = toeplitz_glasso_admm(&s, &g, lambda, 1, &AdmmConfig::default(), None).unwrap();
            assert!(sol.converged);
            assert!(sol.primal_residual < DEFAULT_THRESHOLD && sol.dual_residual < DEFAULT_THRESHOLD);
            assert_eq!(g.max_tie_violation(&sol.precision), 0.0);
            assert!((&sol.precision - sol.precision.transpose()).abs().max() <= 1e-12);
            assert!(sol.precision.clone().cholesky().is_some());
        }
    }

    #[test]
    fn penalty_shrinks_and_optimizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = ToeplitzGroups::new(2, 3);
        let s = random_psd(6, &mut rng);
        let cfg = AdmmConfig {
            threshold: 1e-9,
            ..AdmmConfig::default()
        };
        let loose = toeplitz_glasso_admm(&s, &g, 0.01, 1, &cfg, None).unwrap();
        let tight = toeplitz_glasso_admm(&s, &g, 0.5, 1, &cfg, None).unwrap();
        let l1 = |m: &DMatrix<f64>| m.iter().map(|v| v.abs()).sum::<f64>();
        assert!(l1(&tight.precision) < l1(&loose.precision));
        // random Toeplitz perturbations never beat the solution
        let best = glasso_objective(&s, &tight.precision, 0.5);
        for _ in 0..50 {
            let noise = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-0.01..0.01));
            let sym = g.project(&(&noise + noise.transpose()));
            let cand = &tight.precision + sym;
            assert!(glasso_objective(&s, &cand, 0.5) >= best - 1e-9);
        }
        // sample count divides the penalty
        let scaled = toeplitz_glasso_admm(&s, &g, 5.0, 10, &cfg, None).unwrap();
        assert!((&scaled.precision - &tight.precision).abs().max() < 1e-6);
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = ToeplitzGroups::new(2, 2);
        let s = DMatrix::identity(3, 3);
        assert!(toeplitz_glasso_admm(&s, &g, 0.0, 1, &AdmmConfig::default(), None).is_err());
        let mut s = DMatrix::identity(4, 4);
        s[(0, 1)] = 0.5;
        assert!(toeplitz_glasso_admm(&s, &g, 0.0, 1, &AdmmConfig::default(), None).is_err());
    }
}
