use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::admm::ToeplitzGroups;
use crate::error::{Error, Result};

/// Stationary Gaussian process whose stacked windows of `blocks` points
/// have a given block-Toeplitz precision.
///
/// Points are drawn one at a time from the conditional distribution given
/// the previous `blocks - 1` points.
#[derive(Clone, Debug)]
pub struct BlockToeplitzGaussian {
    pub block: usize,
    pub blocks: usize,
    pub mean: Vec<f64>,
    pub precision: DMatrix<f64>,
    /// Per history length `h`: conditional gain and Cholesky factor.
    conditionals: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl BlockToeplitzGaussian {
    pub fn new(block: usize, blocks: usize, mean: Vec<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let n = block * blocks;
        if mean.len() != block || precision.shape() != (n, n) {
            return Err(Error::Shape {
                op: "block_toeplitz_gaussian",
                left: vec![block, n, n],
                right: vec![mean.len(), precision.nrows(), precision.ncols()],
            });
        }
        let cov = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::config("precision is not positive definite"))?
            .inverse();
        let mut conditionals = Vec::with_capacity(blocks);
        for h in 0..blocks {
            let past = h * block;
            let s22 = cov.view((past, past), (block, block)).into_owned();
            let (gain, cond) = if h == 0 {
                (DMatrix::zeros(block, 0), s22)
            } else {
                let s11 = cov.view((0, 0), (past, past)).into_owned();
                let s21 = cov.view((past, 0), (block, past)).into_owned();
                let inv11 = s11
                    .cholesky()
                    .ok_or_else(|| Error::numerical("history covariance is singular"))?
                    .inverse();
                let gain = &s21 * inv11;
                let cond = &s22 - &gain * s21.transpose();
                (gain, cond)
            };
            let cond = (&cond + cond.transpose()) * 0.5;
            let l = cond
                .cholesky()
                .ok_or_else(|| Error::numerical("conditional covariance is not positive definite"))?
                .l();
            conditionals.push((gain, l));
        }
        Ok(BlockToeplitzGaussian {
            block,
            blocks,
            mean,
            precision,
            conditionals,
        })
    }

    /// Random sparse block-Toeplitz precision with zero mean. Off-diagonal
    /// entries are nonzero with probability `density`; the diagonal is shifted
    /// until the smallest eigenvalue is 0.1.
    pub fn random_sparse(block: usize, blocks: usize, density: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = block * blocks;
        let groups = ToeplitzGroups::new(block, blocks);
        let mut theta = DMatrix::zeros(n, n);
        for g in groups.iter() {
            let (r, c) = g[0];
            let on_diagonal = r == c;
            let v = if on_diagonal {
                1.0
            } else if rng.random_bool(density) {
                let mag = rng.random_range(0.3..0.6);
                if rng.random_bool(0.5) { mag } else { -mag }
            } else {
                0.0
            };
            for &rc in g {
                theta[rc] = v;
            }
        }
        let min_eig = theta.clone().symmetric_eigen().eigenvalues.min();
        theta += DMatrix::identity(n, n) * (0.1 - min_eig);
        Self::new(block, blocks, vec![0.0; block], theta)
    }

    /// `labels.len() × block` row-major draw where point `t` follows
    /// `regimes[labels[t]]` conditioned on the preceding points.
    pub fn sample_sequence(regimes: &[Self], labels: &[usize], rng: &mut impl Rng) -> Result<Vec<f64>> {
        let Some(first) = regimes.first() else {
            return Err(Error::config("no regimes to sample from"));
        };
        let block = first.block;
        if regimes.iter().any(|r| r.block != block) {
            return Err(Error::config("regimes disagree on point dimension"));
        }
        let mut out: Vec<f64> = Vec::with_capacity(labels.len() * block);
        for (t, &label) in labels.iter().enumerate() {
            let r = regimes
                .get(label)
                .ok_or_else(|| Error::config(format!("label {label} has no regime")))?;
            let h = t.min(r.blocks - 1);
            let (gain, l) = &r.conditionals[h];
            let mut x = DVector::from_column_slice(&r.mean);
            if h > 0 {
                let hist = DVector::from_iterator(
                    h * block,
                    out[(t - h) * block..t * block]
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v - r.mean[i % block]),
                );
                x += gain * hist;
            }
            let eps = DVector::from_fn(block, |_, _| rng.sample::<f64, _>(StandardNormal));
            x += l * eps;
            out.extend(x.iter());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_precision_is_toeplitz_and_pd() {
        let g = BlockToeplitzGaussian::random_sparse(3, 4, 0.5, 1).unwrap();
        let groups = ToeplitzGroups::new(3, 4);
        assert_eq!(groups.max_tie_violation(&g.precision), 0.0);
        let min = g.precision.clone().symmetric_eigen().eigenvalues.min();
        assert!((min - 0.1).abs() < 1e-9);
    }

    #[test]
    fn independent_points_match_marginal() {
        // one block: points are iid with covariance Θ⁻¹
        let theta = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = BlockToeplitzGaussian::new(2, 1, vec![1.0, -1.0], theta.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40_000;
        let xs = BlockToeplitzGaussian::sample_sequence(&[g], &vec![0; n], &mut rng).unwrap();
        let mean0 = xs.iter().step_by(2).sum::<f64>() / n as f64;
        let var0 = xs.iter().step_by(2).map(|x| (x - mean0).powi(2)).sum::<f64>() / n as f64;
        let expected = theta.try_inverse().unwrap()[(0, 0)];
        assert!((mean0 - 1.0).abs() < 0.02);
        assert!((var0 - expected).abs() < 0.03 * expected);
    }
}
