use std::collections::HashSet;

use crate::error::{Error, Result};

/// Integer class id attached to a timestep.
pub type Label = i64;

/// A `d`-channel, `N`-step series sampled at a fixed rate.
///
/// Values are stored channel-major: `data[c * len + t]`. Timesteps are
/// 0-based throughout the crate.
#[derive(Clone, Debug, PartialEq)]
pub struct MultivariateTimeSeries {
    channels: Vec<String>,
    data: Vec<f64>,
    len: usize,
    sample_rate_hz: f64,
    labels: Option<Vec<Option<Label>>>,
    coords: Option<Vec<(f64, f64)>>,
}

impl MultivariateTimeSeries {
    /// Builds a series from one vector per channel.
    pub fn new(channels: Vec<String>, rows: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::data("series needs at least one channel"));
        }
        if channels.len() != rows.len() {
            return Err(Error::data(format!(
                "{} channel names for {} data rows",
                channels.len(),
                rows.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &channels {
            if !seen.insert(name.as_str()) {
                return Err(Error::data(format!("duplicate channel name `{name}`")));
            }
        }
        let len = rows[0].len();
        if len == 0 {
            return Err(Error::data("series must have at least one timestep"));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != len) {
            return Err(Error::data(format!(
                "channel `{}` has {} samples, expected {len}",
                channels[i],
                r.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::data(format!("invalid sample rate {sample_rate_hz}")));
        }
        let data = rows.into_iter().flatten().collect();
        Ok(Self {
            channels,
            data,
            len,
            sample_rate_hz,
            labels: None,
            coords: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Option<Label>>) -> Result<Self> {
        if labels.len() != self.len {
            return Err(Error::data(format!(
                "label sequence has length {}, series has {}",
                labels.len(),
                self.len
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_coords(mut self, coords: Vec<(f64, f64)>) -> Result<Self> {
        if coords.len() != self.len {
            return Err(Error::data(format!(
                "coordinate sequence has length {}, series has {}",
                coords.len(),
                self.len
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn value(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.len + t]
    }

    pub fn labels(&self) -> Option<&[Option<Label>]> {
        self.labels.as_deref()
    }

    pub fn coords(&self) -> Option<&[(f64, f64)]> {
        self.coords.as_deref()
    }

    /// Column `t` as a `d`-vector.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.dim()).map(|c| self.value(c, t)).collect()
    }

    /// Copy of timesteps `start..end` (labels and coordinates included).
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len {
            return Err(Error::data(format!(
                "invalid slice {start}..{end} of series with {} steps",
                self.len
            )));
        }
        let rows = (0..self.dim())
            .map(|c| self.channel(c)[start..end].to_vec())
            .collect();
        let mut out = Self::new(self.channels.clone(), rows, self.sample_rate_hz)?;
        out.labels = self.labels.as_ref().map(|l| l[start..end].to_vec());
        out.coords = self.coords.as_ref().map(|c| c[start..end].to_vec());
        Ok(out)
    }

    /// Keeps only the named channels, in the given order.
    pub fn select_channels(&self, names: &[String]) -> Result<Self> {
        let rows = names
            .iter()
            .map(|n| {
                self.channels
                    .iter()
                    .position(|c| c == n)
                    .map(|i| self.channel(i).to_vec())
                    .ok_or_else(|| Error::data(format!("unknown channel `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(names.to_vec(), rows, self.sample_rate_hz)?;
        out.labels = self.labels.clone();
        out.coords = self.coords.clone();
        Ok(out)
    }

    pub(crate) fn from_parts(
        channels: Vec<String>,
        data: Vec<f64>,
        len: usize,
        sample_rate_hz: f64,
        labels: Option<Vec<Option<Label>>>,
        coords: Option<Vec<(f64, f64)>>,
    ) -> Self {
        debug_assert_eq!(data.len(), channels.len() * len);
        Self {
            channels,
            data,
            len,
            sample_rate_hz,
            labels,
            coords,
        }
    }
}

/// Sliding-window geometry: width `w` and hop `step`, both in timesteps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SlidingWindowSpec {
    pub width: usize,
    pub step: usize,
}

impl SlidingWindowSpec {
    pub fn new(width: usize, step: usize) -> Result<Self> {
        if width < 2 {
            return Err(Error::config(format!("window width must be >= 2, got {width}")));
        }
        if step < 1 {
            return Err(Error::config("window step must be >= 1"));
        }
        Ok(Self { width, step })
    }

    /// 0-based end indices of every window over a series of length `n`.
    pub fn end_indices(&self, n: usize) -> Result<Vec<usize>> {
        if n < self.width {
            return Err(Error::data(format!(
                "series of length {n} is shorter than window width {}",
                self.width
            )));
        }
        Ok((self.width - 1..n).step_by(self.step).collect())
    }
}

/// One window `S_{end-(w-1), end}`, stored `d × w` channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// 0-based index of the last timestep covered.
    pub end: usize,
    pub dim: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Window {
    pub fn start(&self) -> usize {
        self.end + 1 - self.width
    }

    pub fn get(&self, c: usize, j: usize) -> f64 {
        self.values[c * self.width + j]
    }

    /// Writes the window as `w × d` time-major values into `out`.
    pub fn write_time_major(&self, out: &mut [f64]) {
        for j in 0..self.width {
            for c in 0..self.dim {
                out[j * self.dim + c] = self.values[c * self.width + j];
            }
        }
    }
}

/// Extracts the window of width `width` ending at 0-based `end`.
pub fn window_at(series: &MultivariateTimeSeries, end: usize, width: usize) -> Result<Window> {
    if end >= series.len() || end + 1 < width {
        return Err(Error::data(format!(
            "window of width {width} ending at {end} does not fit series of length {}",
            series.len()
        )));
    }
    let start = end + 1 - width;
    let mut values = Vec::with_capacity(series.dim() * width);
    for c in 0..series.dim() {
        values.extend_from_slice(&series.channel(c)[start..=end]);
    }
    Ok(Window {
        end,
        dim: series.dim(),
        width,
        values,
    })
}

/// All sliding windows of `spec` over `series`, in temporal order.
pub fn windows(series: &MultivariateTimeSeries, spec: &SlidingWindowSpec) -> Result<Vec<Window>> {
    spec.end_indices(series.len())?
        .into_iter()
        .map(|end| window_at(series, end, spec.width))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> MultivariateTimeSeries {
        let a: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        MultivariateTimeSeries::new(vec!["a".into(), "b".into()], vec![a, b], 10.0).unwrap()
    }

    #[test]
    fn window_counts_and_ends() {
        let s = ramp(100);
        let w = windows(&s, &SlidingWindowSpec::new(10, 1).unwrap()).unwrap();
        assert_eq!(w.len(), 91);
        assert_eq!(w[0].end + 1, 10);
        assert_eq!(w.last().unwrap().end + 1, 100);

        let w = windows(&ramp(10), &SlidingWindowSpec::new(10, 1).unwrap()).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn strided_windows_match_index_enumeration() {
        // brute force: every t in [w, N] with (t - w) divisible by step
        let expected: Vec<usize> = (1..=100).filter(|t| *t >= 10 && (t - 10) % 3 == 0).collect();
        let got: Vec<usize> = windows(&ramp(100), &SlidingWindowSpec::new(10, 3).unwrap())
            .unwrap()
            .iter()
            .map(|w| w.end + 1)
            .collect();
        assert_eq!(got.len(), 31);
        assert_eq!(got, expected);
    }

    #[test]
    fn window_is_contiguous_slice() {
        let s = ramp(20);
        let w = window_at(&s, 7, 4).unwrap();
        assert_eq!(w.start(), 4);
        assert_eq!(&w.values[..4], &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(&w.values[4..], &[-4.0, -5.0, -6.0, -7.0]);
        let mut tm = vec![0.0; 8];
        w.write_time_major(&mut tm);
        assert_eq!(tm, vec![4.0, -4.0, 5.0, -5.0, 6.0, -6.0, 7.0, -7.0]);
    }

    #[test]
    fn short_series_is_an_error() {
        assert!(windows(&ramp(5), &SlidingWindowSpec::new(10, 1).unwrap()).is_err());
        assert!(SlidingWindowSpec::new(1, 1).is_err());
        assert!(SlidingWindowSpec::new(3, 0).is_err());
    }

    #[test]
    fn construction_invariants() {
        assert!(MultivariateTimeSeries::new(vec!["a".into(), "a".into()], vec![vec![1.0], vec![2.0]], 1.0).is_err());
        assert!(MultivariateTimeSeries::new(vec!["a".into(), "b".into()], vec![vec![1.0], vec![2.0, 3.0]], 1.0).is_err());
        assert!(MultivariateTimeSeries::new(vec!["a".into()], vec![vec![]], 1.0).is_err());
        assert!(MultivariateTimeSeries::new(vec![], vec![], 1.0).is_err());
        let s = ramp(3);
        assert!(s.clone().with_labels(vec![Some(1); 2]).is_err());
        assert!(s.with_labels(vec![Some(1); 3]).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn unit_step_count(n in 2usize..300, w in 2usize..40) {
            proptest::prop_assume!(n >= w);
            let spec = SlidingWindowSpec::new(w, 1).unwrap();
            proptest::prop_assert_eq!(spec.end_indices(n).unwrap().len(), n - (w - 1));
        }
    }
}
