//! Labelled regime-switching sessions with known generating parameters.

mod drivelike;

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{Label, MultivariateTimeSeries};

pub use drivelike::{drivelike5, drivelike5_scaled, DRIVELIKE5};

/// One regime: `x_t = mean + ramp_t + jitter + y_t` with the deviation
/// `y_t = A y_{t-1} + ε_t`, `ε ~ N(0, noise_cov)`.
///
/// `ramp_t` is `trend · (τ - (L - 1) / 2) / hz` at step `τ` of a visit of
/// `L` steps (truncated at the session end), so it sums to zero over every visit. `jitter` is drawn once per
/// visit from `N(0, diag(level_jitter²))`. The deviation process is carried
/// across regime switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub label: Label,
    pub name: String,
    pub mean: Vec<f64>,
    #[serde(default)]
    pub trend: Vec<f64>,
    #[serde(default)]
    pub level_jitter: Vec<f64>,
    /// `d × d`, row-major.
    pub ar: Vec<f64>,
    /// `d × d`, row-major.
    pub noise_cov: Vec<f64>,
    /// Visit length range in seconds, inclusive.
    pub duration_s: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub name: String,
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub regimes: Vec<RegimeSpec>,
    /// Row-stochastic, `regimes × regimes`.
    pub transitions: Vec<Vec<f64>>,
}

/// Validated regime with factored noise.
struct Prepared {
    ar: DMatrix<f64>,
    noise_chol: DMatrix<f64>,
}

fn square(name: &str, v: &[f64], d: usize) -> Result<DMatrix<f64>> {
    if v.len() != d * d {
        return Err(Error::config(format!("{name} needs {} entries, found {}", d * d, v.len())));
    }
    Ok(DMatrix::from_row_slice(d, d, v))
}

fn per_channel(name: &str, v: &[f64], d: usize) -> Result<Vec<f64>> {
    match v.len() {
        0 => Ok(vec![0.0; d]),
        n if n == d => Ok(v.to_vec()),
        n => Err(Error::config(format!("{name} needs {d} entries, found {n}"))),
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl RegimeSpec {
    fn prepare(&self, d: usize) -> Result<Prepared> {
        let ctx = |e: Error| Error::config(format!("regime {}: {e}", self.name));
        if self.mean.len() != d {
            return Err(ctx(Error::config(format!("mean needs {d} entries"))));
        }
        per_channel("trend", &self.trend, d).map_err(ctx)?;
        per_channel("level_jitter", &self.level_jitter, d).map_err(ctx)?;
        let [lo, hi] = self.duration_s;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(ctx(Error::config("duration range must be positive and ordered")));
        }
        let ar = square("ar", &self.ar, d).map_err(ctx)?;
        let rho = spectral_radius(&ar);
        if rho >= 1.0 {
            return Err(ctx(Error::config(format!("unstable VAR: spectral radius {rho}"))));
        }
        let cov = square("noise_cov", &self.noise_cov, d).map_err(ctx)?;
        if (&cov - cov.transpose()).abs().max() > 1e-12 {
            return Err(ctx(Error::config("noise covariance is not symmetric")));
        }
        // PSD check through an eigendecomposition; a tiny ridge allows singular covariances
        let eig = cov.clone().symmetric_eigen();
        if eig.eigenvalues.min() < -1e-12 {
            return Err(ctx(Error::config("noise covariance is not positive semi-definite")));
        }
        let noise_chol = (cov + DMatrix::identity(d, d) * 1e-14)
            .cholesky()
            .ok_or_else(|| ctx(Error::config("noise covariance is not positive semi-definite")))?
            .l();
        Ok(Prepared { ar, noise_chol })
    }

    /// Stationary covariance of the deviation process, `Σ = A Σ Aᵀ + Q`.
    pub fn stationary_cov(&self) -> Result<DMatrix<f64>> {
        let d = self.mean.len();
        let a = square("ar", &self.ar, d)?;
        let q = square("noise_cov", &self.noise_cov, d)?;
        let mut sigma = q.clone();
        for _ in 0..10_000 {
            let next = &a * &sigma * a.transpose() + &q;
            let delta = (&next - &sigma).abs().max();
            sigma = next;
            if delta < 1e-14 {
                break;
            }
        }
        Ok(sigma)
    }

    /// Long-run covariance of the deviation process, `(I - A)⁻¹ Q (I - A)⁻ᵀ`.
    pub fn long_run_cov(&self) -> Result<DMatrix<f64>> {
        let d = self.mean.len();
        let a = square("ar", &self.ar, d)?;
        let q = square("noise_cov", &self.noise_cov, d)?;
        let inv = (DMatrix::identity(d, d) - a)
            .try_inverse()
            .ok_or_else(|| Error::config("I - A is singular"))?;
        Ok(&inv * q * inv.transpose())
    }
}

impl BenchmarkConfig {
    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::config("benchmark needs at least one channel"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::config("sample rate must be positive"));
        }
        if self.regimes.is_empty() {
            return Err(Error::config("benchmark needs at least one regime"));
        }
        let r = self.regimes.len();
        if self.transitions.len() != r || self.transitions.iter().any(|row| row.len() != r) {
            return Err(Error::config(format!("transition matrix must be {r} × {r}")));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("transition row {i} is not a probability vector")));
            }
            if r > 1 && row[i] != 0.0 {
                return Err(Error::config(format!("regime {i} may not follow itself")));
            }
        }
        for reg in &self.regimes {
            reg.prepare(d)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config by benchmark name or from a JSON file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if name_or_path == DRIVELIKE5 {
            Ok(drivelike5())
        } else {
            Self::load(Path::new(name_or_path))
        }
    }
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut r = rng.random_range(0.0..1.0);
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i;
        }
        r -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws one labelled session of `length_s` seconds.
pub fn generate_session(config: &BenchmarkConfig, length_s: f64, seed: u64) -> Result<MultivariateTimeSeries> {
    config.validate()?;
    let d = config.dim();
    let hz = config.sample_rate_hz;
    let n = (length_s * hz).round() as usize;
    if n == 0 {
        return Err(Error::config("session length must cover at least one sample"));
    }
    let prepared: Vec<Prepared> = config.regimes.iter().map(|r| r.prepare(d)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = config.regimes.len();
    let mut rows = vec![Vec::with_capacity(n); d];
    let mut labels = Vec::with_capacity(n);
    let mut state = rng.random_range(0..r);
    let mut y = nalgebra::DVector::zeros(d);
    while labels.len() < n {
        let spec = &config.regimes[state];
        let prep = &prepared[state];
        let [lo, hi] = spec.duration_s;
        let secs = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let visit = ((secs * hz).round() as usize).max(1);
        let trend = per_channel("trend", &spec.trend, d)?;
        let jitter_sd = per_channel("level_jitter", &spec.level_jitter, d)?;
        let jitter: Vec<f64> = jitter_sd.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let steps = visit.min(n - labels.len());
        let centre = (steps - 1) as f64 / 2.0;
        for tau in 0..steps {
            let eps = nalgebra::DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            y = &prep.ar * &y + &prep.noise_chol * eps;
            let ramp = (tau as f64 - centre) / hz;
            for c in 0..d {
                rows[c].push(spec.mean[c] + trend[c] * ramp + jitter[c] + y[c]);
            }
            labels.push(Some(spec.label));
        }
        if r > 1 {
            state = sample_index(&config.transitions[state], &mut rng);
        }
    }
    MultivariateTimeSeries::new(config.channels.clone(), rows, hz)?.with_labels(labels)
}

/// `count` sessions with seeds derived from `seed`.
pub fn generate_sessions(
    config: &BenchmarkConfig,
    count: usize,
    length_s: f64,
    seed: u64,
) -> Result<Vec<MultivariateTimeSeries>> {
    (0..count)
        .map(|i| generate_session(config, length_s, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect()
}
