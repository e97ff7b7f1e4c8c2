use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::admm::{glasso_objective, toeplitz_glasso_admm, AdmmConfig, ToeplitzGroups, MAX_ADMM_ITER};
use super::dp::assign_dp;
use super::gmm::gmm_labels;
use super::kmeans::{kmeans_fit, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::nn::gemm::gemm;
use crate::representation::Representation;

const GMM_MAX_ITER: usize = 100;
const GMM_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TiccConfig {
    pub k: usize,
    pub window: usize,
    pub lambda: f64,
    pub beta: f64,
    pub threshold: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TiccConfig {
    fn default() -> Self {
        TiccConfig {
            k: 5,
            window: 10,
            lambda: 5e-3,
            beta: 400.0,
            threshold: 2e-5,
            max_iter: 3,
            seed: 0,
        }
    }
}

impl TiccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.window == 0 || self.max_iter == 0 {
            return Err(Error::config("TICC needs k, window and max_iter >= 1"));
        }
        if !(self.lambda >= 0.0) || !(self.beta >= 0.0) || !(self.threshold > 0.0) {
            return Err(Error::config("TICC needs lambda >= 0, beta >= 0 and threshold > 0"));
        }
        Ok(())
    }
}

/// Gaussian over stacked windows of `window` consecutive representation rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiccCluster {
    pub mean: Vec<f64>,
    /// Block-Toeplitz precision, row-major.
    pub precision: Vec<f64>,
    pub log_det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiccModel {
    pub dim: usize,
    pub config: TiccConfig,
    pub clusters: Vec<TiccCluster>,
}

#[derive(Clone, Debug)]
pub struct TiccFit {
    pub model: TiccModel,
    /// One label per representation row, per session.
    pub assignments: Vec<Vec<usize>>,
    /// Objective after each E-step.
    pub objective_trace: Vec<f64>,
}

/// Rows `t..t+W` of every session concatenated, `T × (dim·W)`.
struct Stacked {
    n: usize,
    values: Vec<f64>,
    /// Stacked row count per session.
    lens: Vec<usize>,
}

impl Stacked {
    fn build(reps: &[&Representation], window: usize) -> Result<Self> {
        let Some(first) = reps.first() else {
            return Err(Error::data("TICC needs at least one session"));
        };
        let dim = first.dim;
        let n = dim * window;
        let mut values = Vec::new();
        let mut lens = Vec::new();
        for r in reps {
            if r.dim != dim {
                return Err(Error::data(format!(
                    "session {} has dimension {} but {} was expected",
                    r.session, r.dim, dim
                )));
            }
            if r.len() < window {
                return Err(Error::data(format!(
                    "session {} has {} rows, fewer than the TICC window {window}",
                    r.session,
                    r.len()
                )));
            }
            let t_len = r.len() - window + 1;
            for t in 0..t_len {
                values.extend_from_slice(&r.values[t * dim..t * dim + n]);
            }
            lens.push(t_len);
        }
        Ok(Stacked { n, values, lens })
    }

    fn total(&self) -> usize {
        self.values.len() / self.n
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

fn l1(m: &[f64]) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

impl TiccCluster {
    pub fn new(mean: Vec<f64>, precision: &DMatrix<f64>) -> Result<Self> {
        let ch = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("cluster precision is not positive definite"))?;
        let log_det = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let n = mean.len();
        Ok(TiccCluster {
            mean,
            precision: (0..n * n).map(|i| precision[(i / n, i % n)]).collect(),
            log_det,
        })
    }

    pub fn precision_matrix(&self) -> DMatrix<f64> {
        let n = self.mean.len();
        DMatrix::from_row_slice(n, n, &self.precision)
    }

    /// Negative Gaussian log-likelihood of each `n`-row.
    fn nll(&self, rows: &[f64]) -> Vec<f64> {
        let n = self.mean.len();
        let t_len = rows.len() / n;
        let mut centered = rows.to_vec();
        for row in centered.chunks_mut(n) {
            for (x, m) in row.iter_mut().zip(&self.mean) {
                *x -= m;
            }
        }
        let mut projected = vec![0.0; rows.len()];
        gemm(t_len, n, n, &centered, false, &self.precision, false, 0.0, &mut projected);
        let constant = 0.5 * (n as f64 * (2.0 * PI).ln() - self.log_det);
        centered
            .chunks(n)
            .zip(projected.chunks(n))
            .map(|(c, p)| 0.5 * c.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + constant)
            .collect()
    }
}

impl TiccModel {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    fn cost_matrix(&self, stacked: &Stacked) -> Vec<f64> {
        let k = self.k();
        let t_len = stacked.total();
        let mut costs = vec![0.0; t_len * k];
        for (j, c) in self.clusters.iter().enumerate() {
            for (t, v) in c.nll(&stacked.values).into_iter().enumerate() {
                costs[t * k + j] = v;
            }
        }
        costs
    }

    fn penalty(&self) -> f64 {
        0.5 * self.config.lambda * self.clusters.iter().map(|c| l1(&c.precision)).sum::<f64>()
    }

    /// Switching-penalty assignment of every stacked window; the last
    /// `window - 1` rows of each session inherit the final label.
    fn assign_stacked(&self, stacked: &Stacked) -> Result<(Vec<Vec<usize>>, f64)> {
        let k = self.k();
        let costs = self.cost_matrix(stacked);
        let mut start = 0;
        let mut out = Vec::with_capacity(stacked.lens.len());
        let mut objective = self.penalty();
        for &len in &stacked.lens {
            let slice = &costs[start * k..(start + len) * k];
            let path = assign_dp(slice, k, self.config.beta)?;
            objective += super::dp::path_cost(slice, k, self.config.beta, &path);
            out.push(path);
            start += len;
        }
        Ok((out, objective))
    }

    /// Labels for every row of every session.
    pub fn assign(&self, reps: &[&Representation]) -> Result<Vec<Vec<usize>>> {
        let stacked = Stacked::build(reps, self.config.window)?;
        if stacked.n != self.clusters[0].mean.len() {
            return Err(Error::Shape {
                op: "ticc_assign",
                left: vec![self.clusters[0].mean.len()],
                right: vec![stacked.n],
            });
        }
        let (paths, _) = self.assign_stacked(&stacked)?;
        Ok(extend_tails(paths, self.config.window))
    }

    /// Objective: summed NLL, switch penalties and `λ/2 · Σ‖Θ_j‖₁`.
    pub fn objective(&self, reps: &[&Representation]) -> Result<f64> {
        let stacked = Stacked::build(reps, self.config.window)?;
        Ok(self.assign_stacked(&stacked)?.1)
    }
}

fn extend_tails(paths: Vec<Vec<usize>>, window: usize) -> Vec<Vec<usize>> {
    paths
        .into_iter()
        .map(|mut p| {
            let last = *p.last().expect("sessions have at least one stacked row");
            p.extend(std::iter::repeat_n(last, window - 1));
            p
        })
        .collect()
}

fn mean_and_cov(stacked: &Stacked, members: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let n = stacked.n;
    let m = members.len() as f64;
    let mut mean = vec![0.0; n];
    for &i in members {
        for (a, x) in mean.iter_mut().zip(stacked.row(i)) {
            *a += x / m;
        }
    }
    let mut centered = Vec::with_capacity(members.len() * n);
    for &i in members {
        centered.extend(stacked.row(i).iter().zip(&mean).map(|(x, mu)| x - mu));
    }
    let mut cov = vec![0.0; n * n];
    gemm(n, members.len(), n, &centered, true, &centered, false, 0.0, &mut cov);
    let cov = DMatrix::from_row_slice(n, n, &cov) / m;
    (mean, (&cov + cov.transpose()) * 0.5)
}

/// Moves the least likely points of other clusters into empty ones.
fn reseed_empty(assign: &mut [usize], k: usize, nll_under_own: &[f64]) -> Result<()> {
    let mut counts = vec![0usize; k];
    for &a in assign.iter() {
        counts[a] += 1;
    }
    let take = (assign.len() / (2 * k)).max(1);
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..assign.len()).collect();
        order.sort_by(|&a, &b| nll_under_own[b].total_cmp(&nll_under_own[a]).then(a.cmp(&b)));
        let mut moved = 0;
        for i in order {
            if moved == take {
                break;
            }
            let donor = assign[i];
            if donor != j && counts[donor] > 1 {
                counts[donor] -= 1;
                counts[j] += 1;
                assign[i] = j;
                moved += 1;
            }
        }
        if moved == 0 {
            return Err(Error::data("not enough windows to populate every TICC cluster"));
        }
        log::debug!("reseeded empty TICC cluster {j} with {moved} windows");
    }
    Ok(())
}

/// Toeplitz inverse covariance clustering over all sessions jointly.
pub fn ticc_fit(reps: &[&Representation], config: &TiccConfig) -> Result<TiccFit> {
    config.validate()?;
    let stacked = Stacked::build(reps, config.window)?;
    let k = config.k;
    let n = stacked.n;
    if stacked.total() < k * config.window {
        return Err(Error::data(format!(
            "TICC with k = {k} and window {} needs at least {} stacked windows, got {}",
            config.window,
            k * config.window,
            stacked.total()
        )));
    }
    let dim = n / config.window;
    let groups = ToeplitzGroups::new(dim, config.window);
    let admm = AdmmConfig {
        threshold: config.threshold,
        max_iter: MAX_ADMM_ITER,
        ..AdmmConfig::default()
    };
    let init = kmeans_fit(&stacked.values, n, k, DEFAULT_RESTARTS, config.seed)?;
    let mut flat = gmm_labels(&stacked.values, n, k, &init.assignments, GMM_MAX_ITER, GMM_TOL)?;
    let mut model: Option<TiccModel> = None;
    let mut trace = Vec::new();
    let mut paths = Vec::new();
    for iter in 0..config.max_iter {
        if let Some(m) = &model {
            let costs = m.cost_matrix(&stacked);
            let own: Vec<f64> = flat.iter().enumerate().map(|(t, &a)| costs[t * k + a]).collect();
            reseed_empty(&mut flat, k, &own)?;
        } else {
            let zeros = vec![0.0; flat.len()];
            reseed_empty(&mut flat, k, &zeros)?;
        }
        let mut clusters = Vec::with_capacity(k);
        for j in 0..k {
            let members: Vec<usize> = (0..flat.len()).filter(|&i| flat[i] == j).collect();
            let (mean, s) = mean_and_cov(&stacked, &members);
            let previous = model.as_ref().map(|m| m.clusters[j].precision_matrix());
            let solved = toeplitz_glasso_admm(&s, &groups, config.lambda, members.len(), &admm, previous.as_ref());
            let penalty = config.lambda / members.len() as f64;
            let theta = match (solved, previous) {
                (Ok(sol), Some(prev)) => {
                    if glasso_objective(&s, &prev, penalty) < glasso_objective(&s, &sol.precision, penalty) {
                        prev
                    } else {
                        sol.precision
                    }
                }
                (Ok(sol), None) => sol.precision,
                (Err(_), Some(prev)) => prev,
                (Err(e), None) => return Err(e),
            };
            clusters.push(TiccCluster::new(mean, &theta)?);
        }
        let current = TiccModel {
            dim,
            config: config.clone(),
            clusters,
        };
        let (new_paths, objective) = current.assign_stacked(&stacked)?;
        let new_flat: Vec<usize> = new_paths.iter().flatten().copied().collect();
        log::info!("TICC iteration {}: objective {objective:.6}", iter + 1);
        trace.push(objective);
        let stable = new_flat == flat;
        flat = new_flat;
        paths = new_paths;
        model = Some(current);
        if stable {
            break;
        }
    }
    Ok(TiccFit {
        model: model.expect("at least one iteration"),
        assignments: extend_tails(paths, config.window),
        objective_trace: trace,
    })
}
