use crate::error::{Error, Result};

use super::series::{Label, MultivariateTimeSeries};

/// Standard deviations below this are treated as zero.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Block-mean decimation to `target_hz`.
///
/// The source rate must be an integer multiple `r` of the target. Each output
/// sample is the mean of `r` consecutive inputs; the trailing `N mod r`
/// samples are dropped. Labels take the block majority (ties go to the label
/// that occurs first in the block).
pub fn resample(series: &MultivariateTimeSeries, target_hz: f64) -> Result<MultivariateTimeSeries> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(Error::config(format!("target rate must be positive, got {target_hz}")));
    }
    let ratio = series.sample_rate_hz() / target_hz;
    let r = ratio.round();
    if r < 1.0 || (ratio - r).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::config(format!(
            "cannot decimate {} Hz to {target_hz} Hz: ratio {ratio} is not a positive integer",
            series.sample_rate_hz()
        )));
    }
    let r = r as usize;
    let out_len = series.len() / r;
    if out_len == 0 {
        return Err(Error::data(format!(
            "series of {} samples is shorter than one decimation block of {r}",
            series.len()
        )));
    }
    let mut data = Vec::with_capacity(series.dim() * out_len);
    for c in 0..series.dim() {
        let ch = series.channel(c);
        data.extend(
            ch.chunks_exact(r)
                .map(|block| block.iter().sum::<f64>() / r as f64),
        );
    }
    let labels = series.labels().map(|l| {
        l.chunks_exact(r)
            .map(majority_label)
            .collect::<Vec<_>>()
    });
    let coords = series.coords().map(|c| {
        c.chunks_exact(r)
            .map(|b| {
                let (la, lo) = b.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
                (la / r as f64, lo / r as f64)
            })
            .collect::<Vec<_>>()
    });
    Ok(MultivariateTimeSeries::from_parts(
        series.channels().to_vec(),
        data,
        out_len,
        target_hz,
        labels,
        coords,
    ))
}

fn majority_label(block: &[Option<Label>]) -> Option<Label> {
    // (label, count, first position); small blocks, linear scan is fine
    let mut counts: Vec<(Label, usize)> = Vec::new();
    for l in block.iter().flatten() {
        match counts.iter_mut().find(|(x, _)| x == l) {
            Some(entry) => entry.1 += 1,
            None => counts.push((*l, 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max()?;
    counts.into_iter().find(|(_, n)| *n == best).map(|(l, _)| l)
}

/// Per-channel normalization statistics (population std).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose std fell below [`DEGENERATE_STD`]; they map to zeros.
    pub degenerate: Vec<bool>,
}

impl NormStats {
    /// Pools statistics over every timestep of every series.
    pub fn fit(collection: &[&MultivariateTimeSeries]) -> Result<Self> {
        let first = collection
            .first()
            .ok_or_else(|| Error::data("cannot fit normalization on an empty collection"))?;
        let d = first.dim();
        if let Some(s) = collection.iter().find(|s| s.channels() != first.channels()) {
            return Err(Error::data(format!(
                "channel mismatch: {:?} vs {:?}",
                s.channels(),
                first.channels()
            )));
        }
        let n: usize = collection.iter().map(|s| s.len()).sum();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for c in 0..d {
            let m = collection
                .iter()
                .flat_map(|s| s.channel(c))
                .sum::<f64>()
                / n as f64;
            let var = collection
                .iter()
                .flat_map(|s| s.channel(c))
                .map(|x| (x - m) * (x - m))
                .sum::<f64>()
                / n as f64;
            mean[c] = m;
            std[c] = var.sqrt();
        }
        let degenerate = std.iter().map(|s| *s < DEGENERATE_STD).collect();
        Ok(Self {
            mean,
            std,
            degenerate,
        })
    }

    pub fn apply(&self, series: &MultivariateTimeSeries) -> Result<MultivariateTimeSeries> {
        if series.dim() != self.mean.len() {
            return Err(Error::data(format!(
                "normalization fitted on {} channels, series has {}",
                self.mean.len(),
                series.dim()
            )));
        }
        let mut data = Vec::with_capacity(series.dim() * series.len());
        for c in 0..series.dim() {
            let (m, s, deg) = (self.mean[c], self.std[c], self.degenerate[c]);
            data.extend(series.channel(c).iter().map(|x| if deg { 0.0 } else { (x - m) / s }));
        }
        Ok(MultivariateTimeSeries::from_parts(
            series.channels().to_vec(),
            data,
            series.len(),
            series.sample_rate_hz(),
            series.labels().map(<[_]>::to_vec),
            series.coords().map(<[_]>::to_vec),
        ))
    }

    /// Maps normalized values back to the original scale. Degenerate
    /// channels come back as their constant mean.
    pub fn invert(&self, series: &MultivariateTimeSeries) -> Result<MultivariateTimeSeries> {
        if series.dim() != self.mean.len() {
            return Err(Error::data("channel count mismatch in inverse normalization"));
        }
        let mut data = Vec::with_capacity(series.dim() * series.len());
        for c in 0..series.dim() {
            let (m, s, deg) = (self.mean[c], self.std[c], self.degenerate[c]);
            data.extend(series.channel(c).iter().map(|x| if deg { m } else { x * s + m }));
        }
        Ok(MultivariateTimeSeries::from_parts(
            series.channels().to_vec(),
            data,
            series.len(),
            series.sample_rate_hz(),
            series.labels().map(<[_]>::to_vec),
            series.coords().map(<[_]>::to_vec),
        ))
    }
}

/// Z-normalizes each channel with its own mean and population std.
pub fn znormalize(series: &MultivariateTimeSeries) -> Result<(MultivariateTimeSeries, NormStats)> {
    let stats = NormStats::fit(&[series])?;
    Ok((stats.apply(series)?, stats))
}
