use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 15;
pub const MAX_ITER: usize = 300;

/// Fitted centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    /// Sum of squared distances of the training points to their centroid.
    pub inertia: f64,
}

/// Outcome of [`kmeans_fit`], including per-restart diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub assignments: Vec<usize>,
    pub restart_inertias: Vec<f64>,
    /// Inertia after every Lloyd iteration and transfer pass of the winning
    /// restart.
    pub inertia_trace: Vec<f64>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    /// Nearest centroid by Euclidean distance; ties go to the lower index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, self.dim, x)
    }

    /// Assigns each `dim`-row of `points`.
    pub fn assign(&self, points: &[f64], dim: usize) -> Result<Vec<usize>> {
        if dim != self.dim || !points.len().is_multiple_of(dim) {
            return Err(Error::Shape {
                op: "kmeans_assign",
                left: vec![self.dim],
                right: vec![dim, points.len()],
            });
        }
        Ok(points.chunks(dim).map(|x| self.nearest(x).0).collect())
    }
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks(dim).enumerate() {
        let d = sqdist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn count_distinct_up_to(points: &[f64], dim: usize, limit: usize) -> usize {
    let mut distinct: Vec<&[f64]> = Vec::new();
    for p in points.chunks(dim) {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= limit {
                break;
            }
        }
    }
    distinct.len()
}

/// k-means++ seeding.
fn seed_centroids(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = points.chunks(dim).map(|p| sqdist(p, &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx * dim..(idx + 1) * dim].to_vec();
        for (p, d) in points.chunks(dim).zip(d2.iter_mut()) {
            *d = d.min(sqdist(p, &c));
        }
        centroids.extend(c);
    }
    centroids
}

struct Run {
    centroids: Vec<f64>,
    assignments: Vec<usize>,
    inertia: f64,
    trace: Vec<f64>,
}

fn lloyd(points: &[f64], dim: usize, k: usize, mut centroids: Vec<f64>) -> Run {
    let n = points.len() / dim;
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut dists = vec![0.0; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, p) in points.chunks(dim).enumerate() {
            let (j, d) = nearest(&centroids, dim, p);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            dists[i] = d;
        }
        trace.push(dists.iter().sum());
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.chunks(dim).zip(&assignments) {
            counts[j] += 1;
            for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // move the point farthest from its centroid into the empty cluster
                let far = (0..n)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    let old = assignments[i];
                    counts[old] -= 1;
                    for (s, x) in sums[old * dim..(old + 1) * dim].iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
                        *s -= x;
                    }
                    assignments[i] = j;
                    counts[j] = 1;
                    dists[i] = 0.0;
                    sums[j * dim..(j + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
                }
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for d in 0..dim {
                    centroids[j * dim + d] = sums[j * dim + d] / counts[j] as f64;
                }
            }
        }
    }
    let inertia = inertia(points, dim, &centroids, &assignments);
    Run {
        centroids,
        assignments,
        inertia,
        trace,
    }
}

fn centroids_of(points: &[f64], dim: usize, k: usize, assignments: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &j) in points.chunks(dim).zip(assignments) {
        counts[j] += 1;
        for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(p) {
            *s += x;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            for s in &mut sums[j * dim..(j + 1) * dim] {
                *s /= counts[j] as f64;
            }
        }
    }
    (sums, counts)
}

/// Single-point transfers (Hartigan) after Lloyd has converged: a point
/// moves from `a` to `b` when `n_b/(n_b+1)·‖x−c_b‖² < n_a/(n_a−1)·‖x−c_a‖²`,
/// which strictly lowers the inertia.
fn transfer_refine(points: &[f64], dim: usize, k: usize, run: &mut Run) {
    let (mut centroids, mut counts) = centroids_of(points, dim, k, &run.assignments);
    for _ in 0..MAX_ITER {
        let mut moved = false;
        for (i, x) in points.chunks(dim).enumerate() {
            let a = run.assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * sqdist(x, &centroids[a * dim..(a + 1) * dim]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add = nb / (nb + 1.0) * sqdist(x, &centroids[b * dim..(b + 1) * dim]);
                if add < remove * (1.0 - 1e-12) && best.is_none_or(|(_, c)| add < c) {
                    best = Some((b, add));
                }
            }
            if let Some((b, _)) = best {
                let nb = counts[b] as f64;
                for d in 0..dim {
                    centroids[a * dim + d] = (centroids[a * dim + d] * na - x[d]) / (na - 1.0);
                    centroids[b * dim + d] = (centroids[b * dim + d] * nb + x[d]) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                run.assignments[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        let (c, _) = centroids_of(points, dim, k, &run.assignments);
        centroids = c;
        run.trace.push(inertia(points, dim, &centroids, &run.assignments));
    }
    run.centroids = centroids_of(points, dim, k, &run.assignments).0;
    run.inertia = inertia(points, dim, &run.centroids, &run.assignments);
}

fn inertia(points: &[f64], dim: usize, centroids: &[f64], assignments: &[usize]) -> f64 {
    points
        .chunks(dim)
        .zip(assignments)
        .map(|(p, &j)| sqdist(p, &centroids[j * dim..(j + 1) * dim]))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding, polished by single-point
/// transfers, best of `restarts`.
///
/// `points` holds `dim`-rows. Each restart uses its own generator derived
/// from `seed`, so results do not depend on execution order.
pub fn kmeans_fit(points: &[f64], dim: usize, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::Shape {
            op: "kmeans_fit",
            left: vec![dim],
            right: vec![points.len()],
        });
    }
    if k == 0 || restarts == 0 {
        return Err(Error::config("k-means needs k >= 1 and at least one restart"));
    }
    if let Some(i) = points.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite point at row {}", i / dim)));
    }
    let n = points.len() / dim;
    if n < k || count_distinct_up_to(points, dim, k) < k {
        return Err(Error::data(format!(
            "k-means with k = {k} needs at least {k} distinct points"
        )));
    }
    let mut best: Option<Run> = None;
    let mut restart_inertias = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64));
        let init = seed_centroids(points, dim, k, &mut rng);
        let mut run = lloyd(points, dim, k, init);
        transfer_refine(points, dim, k, &mut run);
        restart_inertias.push(run.inertia);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(KMeansFit {
        model: KMeansModel {
            dim,
            centroids: best.centroids,
            inertia: best.inertia,
        },
        assignments: best.assignments,
        restart_inertias,
        inertia_trace: best.trace,
    })
}
