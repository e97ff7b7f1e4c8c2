//! Run-length segmentation of cluster assignments and per-cluster summaries.

mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::Assignment;
use crate::error::{Error, Result};
use crate::timeseries::MultivariateTimeSeries;

pub use plot::summary_svg;

/// Maximal run of one cluster; `start` and `end` are inclusive timesteps of
/// the original series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub session: String,
    pub start: usize,
    pub end: usize,
    pub cluster: usize,
    pub seconds: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Segments of every session, in session then time order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn by_cluster(&self) -> BTreeMap<usize, Vec<&Segment>> {
        let mut map: BTreeMap<usize, Vec<&Segment>> = BTreeMap::new();
        for s in &self.segments {
            map.entry(s.cluster).or_default().push(s);
        }
        map
    }

    pub fn session<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Segment> + 'a {
        self.segments.iter().filter(move |s| s.session == name)
    }

    /// Repeats each segment's cluster for its length.
    pub fn flatten(&self, session: &str) -> Vec<usize> {
        self.session(session)
            .flat_map(|s| std::iter::repeat_n(s.cluster, s.len()))
            .collect()
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        for s in &self.segments {
            serde_json::to_writer(&mut *out, s)?;
            out.write_all(b"\n").map_err(|e| Error::io("<segments>", e))?;
        }
        Ok(())
    }

    pub fn export_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn import_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let segments = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<Segment>, _>>()?;
        Ok(SegmentSet { segments })
    }
}

/// Splits one assignment sequence at its changepoints.
pub fn segment(assignment: &Assignment, sample_rate_hz: f64) -> Result<Vec<Segment>> {
    if assignment.clusters.is_empty() {
        return Err(Error::data(format!("session {} has an empty assignment sequence", assignment.session)));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::config("sample rate must be positive"));
    }
    let mut out = Vec::new();
    let mut run_start = 0;
    let c = &assignment.clusters;
    for i in 1..=c.len() {
        if i == c.len() || c[i] != c[run_start] {
            let len = i - run_start;
            out.push(Segment {
                session: assignment.session.clone(),
                start: assignment.offset + run_start,
                end: assignment.offset + i - 1,
                cluster: c[run_start],
                seconds: len as f64 / sample_rate_hz,
            });
            run_start = i;
        }
    }
    Ok(out)
}

pub fn segment_all(assignments: &[Assignment], sample_rate_hz: f64) -> Result<SegmentSet> {
    let mut segments = Vec::new();
    for a in assignments {
        segments.extend(segment(a, sample_rate_hz)?);
    }
    Ok(SegmentSet { segments })
}

/// Segments lasting strictly longer than `min_seconds`.
pub fn filter_min_duration(set: &SegmentSet, min_seconds: f64) -> Result<SegmentSet> {
    if !(min_seconds >= 0.0) {
        return Err(Error::config(format!("minimum duration must be >= 0, got {min_seconds}")));
    }
    let segments: Vec<Segment> = set
        .segments
        .iter()
        .filter(|s| min_seconds == 0.0 || s.seconds > min_seconds)
        .cloned()
        .collect();
    if segments.is_empty() && !set.is_empty() {
        log::warn!("no segment lasts longer than {min_seconds} s");
    }
    Ok(SegmentSet { segments })
}

/// Raw channel traces of one cluster's segments, stretched to a common length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub channels: Vec<String>,
    pub length: usize,
    pub segments: Vec<SegmentTrace>,
    /// Pointwise mean trace per channel.
    pub mean: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrace {
    pub session: String,
    pub start: usize,
    pub end: usize,
    /// Per channel, `length` values.
    pub values: Vec<Vec<f64>>,
}

/// Linear resampling of `xs` onto `len` evenly spaced points.
pub fn stretch(xs: &[f64], len: usize) -> Vec<f64> {
    if xs.len() == 1 || len == 1 {
        return vec![xs[0]; len];
    }
    let scale = (xs.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|j| {
            let p = j as f64 * scale;
            let i = (p.floor() as usize).min(xs.len() - 2);
            let frac = p - i as f64;
            xs[i] * (1.0 - frac) + xs[i + 1] * frac
        })
        .collect()
}

/// Averages the raw traces of `cluster`'s segments. `series` maps session
/// names to the series the segments index into.
pub fn summarize_cluster(
    set: &SegmentSet,
    cluster: usize,
    series: &BTreeMap<String, &MultivariateTimeSeries>,
) -> Result<ClusterSummary> {
    let members: Vec<&Segment> = set.segments.iter().filter(|s| s.cluster == cluster).collect();
    if members.is_empty() {
        return Err(Error::data(format!("cluster {cluster} has no segments")));
    }
    let mut channels: Option<Vec<String>> = None;
    let length = members.iter().map(|s| s.len()).max().expect("non-empty");
    let mut traces = Vec::with_capacity(members.len());
    for s in &members {
        let mts = series
            .get(&s.session)
            .ok_or_else(|| Error::data(format!("no series for session {}", s.session)))?;
        if s.end >= mts.len() {
            return Err(Error::data(format!(
                "segment {}..={} exceeds session {} of length {}",
                s.start,
                s.end,
                s.session,
                mts.len()
            )));
        }
        match &channels {
            None => channels = Some(mts.channels().to_vec()),
            Some(c) if c != mts.channels() => {
                return Err(Error::data(format!("session {} has different channels", s.session)))
            }
            Some(_) => {}
        }
        let values = (0..mts.dim())
            .map(|c| stretch(&mts.channel(c)[s.start..=s.end], length))
            .collect();
        traces.push(SegmentTrace {
            session: s.session.clone(),
            start: s.start,
            end: s.end,
            values,
        });
    }
    let channels = channels.expect("at least one member");
    let m = traces.len() as f64;
    let mean = (0..channels.len())
        .map(|c| (0..length).map(|j| traces.iter().map(|t| t.values[c][j]).sum::<f64>() / m).collect())
        .collect();
    Ok(ClusterSummary {
        cluster,
        channels,
        length,
        segments: traces,
        mean,
    })
}

impl ClusterSummary {
    /// Rows `channel,trace,v0..v{length-1}`; the mean trace is named `mean`.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Csv {
            path: "<summary>".into(),
            message: e.to_string(),
        };
        let mut header = vec!["channel".to_string(), "trace".to_string()];
        header.extend((0..self.length).map(|j| format!("v{j}")));
        w.write_record(&header).map_err(err)?;
        for (c, name) in self.channels.iter().enumerate() {
            for t in &self.segments {
                let mut row = vec![name.clone(), format!("{}:{}-{}", t.session, t.start, t.end)];
                row.extend(t.values[c].iter().map(f64::to_string));
                w.write_record(&row).map_err(err)?;
            }
            let mut row = vec![name.clone(), "mean".to_string()];
            row.extend(self.mean[c].iter().map(f64::to_string));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assignment(clusters: Vec<usize>) -> Assignment {
        Assignment {
            session: "s".into(),
            offset: 0,
            k: 10,
            clusters,
        }
    }

    fn spans(segs: &[Segment]) -> Vec<(usize, usize, usize)> {
        segs.iter().map(|s| (s.start, s.end, s.cluster)).collect()
    }

    #[test]
    fn run_lengths() {
        let segs = segment(&assignment(vec![1, 1, 2, 2, 2, 1]), 10.0).unwrap();
        assert_eq!(spans(&segs), vec![(0, 1, 1), (2, 4, 2), (5, 5, 1)]);
        assert!((segs[1].seconds - 0.3).abs() < 1e-12);
        assert_eq!(spans(&segment(&assignment(vec![7]), 10.0).unwrap()), vec![(0, 0, 7)]);
        let flat = segment(&assignment(vec![3; 100]), 10.0).unwrap();
        assert_eq!(flat.len(), 1);
        assert_eq!(flat[0].len(), 100);
        assert!(segment(&assignment(vec![]), 10.0).is_err());
    }

    #[test]
    fn offsets_are_applied() {
        let a = Assignment {
            offset: 9,
            ..assignment(vec![0, 0, 1])
        };
        assert_eq!(spans(&segment(&a, 1.0).unwrap()), vec![(9, 10, 0), (11, 11, 1)]);
    }

    #[test]
    fn duration_filter() {
        let mut seq = vec![0; 30];
        seq.extend(vec![1; 31]);
        seq.extend(vec![2; 5]);
        let set = segment_all(&[assignment(seq)], 10.0).unwrap();
        let kept = filter_min_duration(&set, 3.0).unwrap();
        assert_eq!(spans(&kept.segments), vec![(30, 60, 1)]);
        assert_eq!(filter_min_duration(&set, 0.0).unwrap(), set);
        assert!(filter_min_duration(&set, 100.0).unwrap().is_empty());
        assert!(filter_min_duration(&set, -1.0).is_err());
    }

    #[test]
    fn stretch_rule() {
        assert_eq!(stretch(&[1.0, 3.0], 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(stretch(&[4.0], 3), vec![4.0; 3]);
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let s = stretch(&xs, 20);
        assert_eq!(s.len(), 20);
        assert_eq!((s[0], s[19]), (0.0, 9.0));
        assert!((s[1] - 9.0 / 19.0).abs() < 1e-12);
    }

    fn series(n: usize) -> MultivariateTimeSeries {
        let a: Vec<f64> = (0..n).map(|t| t as f64).collect();
        let b: Vec<f64> = (0..n).map(|t| (t % 7) as f64).collect();
        MultivariateTimeSeries::new(vec!["a".into(), "b".into()], vec![a, b], 10.0).unwrap()
    }

    #[test]
    fn summaries() {
        let mts = series(60);
        let map: BTreeMap<String, &MultivariateTimeSeries> = [("s".to_string(), &mts)].into();
        let mut seq = vec![0; 10];
        seq.extend(vec![1; 20]);
        seq.extend(vec![0; 20]);
        seq.extend(vec![1; 10]);
        let set = segment_all(&[assignment(seq)], 10.0).unwrap();
        let sum = summarize_cluster(&set, 0, &map).unwrap();
        assert_eq!(sum.length, 20);
        assert_eq!(sum.segments.len(), 2);
        assert_eq!(sum.segments[1].values[0], mts.channel(0)[30..50].to_vec());
        assert_eq!(sum.segments[0].values[0].len(), 20);
        assert!(summarize_cluster(&set, 5, &map).is_err());

        let single = SegmentSet {
            segments: vec![set.segments[1].clone()],
        };
        let one = summarize_cluster(&single, 1, &map).unwrap();
        assert_eq!(one.mean, one.segments[0].values);

        let twice = SegmentSet {
            segments: vec![set.segments[1].clone(), set.segments[1].clone()],
        };
        let two = summarize_cluster(&twice, 1, &map).unwrap();
        assert_eq!(two.mean, two.segments[0].values);

        let mut csv = Vec::new();
        sum.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        assert!(text.lines().nth(3).unwrap().starts_with("a,mean,"));
    }

    #[test]
    fn jsonl_round_trip() {
        let set = segment_all(&[assignment(vec![0, 0, 1, 2, 2])], 10.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("segments.jsonl");
        set.export_jsonl(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"session":"s","start":0,"end":1,"cluster":0,"seconds":0.2}"#);
        assert_eq!(SegmentSet::import_jsonl(&p).unwrap(), set);
    }

    proptest! {
        #[test]
        fn flatten_reconstructs(seq in prop::collection::vec(0usize..4, 1..200)) {
            let set = segment_all(&[assignment(seq.clone())], 10.0).unwrap();
            prop_assert_eq!(set.flatten("s"), seq.clone());
            let changes = seq.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert_eq!(set.len(), 1 + changes);
            for pair in set.segments.windows(2) {
                prop_assert_eq!(pair[0].end + 1, pair[1].start);
                prop_assert_ne!(pair[0].cluster, pair[1].cluster);
            }
        }

        #[test]
        fn filter_keeps_boundaries(seq in prop::collection::vec(0usize..3, 1..200), min in 0.0f64..2.0) {
            let set = segment_all(&[assignment(seq)], 10.0).unwrap();
            let kept = filter_min_duration(&set, min).unwrap();
            for s in &kept.segments {
                prop_assert!(set.segments.contains(s));
                prop_assert!(min == 0.0 || s.seconds > min);
            }
        }
    }
}
