use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::Label;

/// Drops the first `offset` labels so that label `i` lines up with
/// representation row `i`.
pub fn align_truth(labels: &[Option<Label>], offset: usize, len: usize) -> Result<&[Option<Label>]> {
    if labels.len() != offset + len {
        return Err(Error::data(format!(
            "{} labels cannot align with {len} rows starting at timestep {offset}",
            labels.len()
        )));
    }
    Ok(&labels[offset..])
}

/// Cluster to label assignment by maximal overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMapping {
    /// `None` for clusters that never overlap a labelled timestep.
    pub mapping: BTreeMap<usize, Option<Label>>,
}

impl ClusterMapping {
    pub fn get(&self, cluster: usize) -> Option<Label> {
        self.mapping.get(&cluster).copied().flatten()
    }

    pub fn apply(&self, pred: &[usize]) -> Vec<Option<Label>> {
        pred.iter().map(|&c| self.get(c)).collect()
    }
}

/// Overlap counts, clusters `0..k` by the sorted labels present in `truth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<Label>,
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new(pred: &[usize], truth: &[Option<Label>], k: usize) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::data(format!(
                "{} predictions but {} labels",
                pred.len(),
                truth.len()
            )));
        }
        let labels: Vec<Label> = {
            let mut l: Vec<Label> = truth.iter().flatten().copied().collect();
            l.sort_unstable();
            l.dedup();
            l
        };
        let k = k.max(pred.iter().max().map_or(0, |m| m + 1));
        let mut counts = vec![vec![0; labels.len()]; k];
        for (&c, t) in pred.iter().zip(truth) {
            if let Some(t) = t {
                let j = labels.binary_search(t).expect("label collected above");
                counts[c][j] += 1;
            }
        }
        Ok(Confusion { labels, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cluster");
        for l in &self.labels {
            s.push_str(&format!(",{l}"));
        }
        s.push('\n');
        for (c, row) in self.counts.iter().enumerate() {
            s.push_str(&c.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Maps each cluster to the label it overlaps most; ties go to the lower label.
pub fn map_clusters(pred: &[usize], truth: &[Option<Label>]) -> Result<ClusterMapping> {
    let confusion = Confusion::new(pred, truth, 0)?;
    Ok(mapping_from(&confusion))
}

pub fn mapping_from(confusion: &Confusion) -> ClusterMapping {
    let mut mapping = BTreeMap::new();
    for (c, row) in confusion.counts.iter().enumerate() {
        let mut best: Option<(usize, usize)> = None;
        for (j, &n) in row.iter().enumerate() {
            if n > 0 && best.is_none_or(|(_, b)| n > b) {
                best = Some((j, n));
            }
        }
        mapping.insert(c, best.map(|(j, _)| confusion.labels[j]));
    }
    ClusterMapping { mapping }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: BTreeMap<Label, ClassScore>,
    pub macro_f1: f64,
}

/// Timestep-level scores over every class present in `truth`.
///
/// Unlabelled timesteps are skipped; a prediction of `None` counts as a
/// miss. Classes that are never predicted score 0.
pub fn macro_f1(pred: &[Option<Label>], truth: &[Option<Label>]) -> Result<F1Report> {
    if pred.len() != truth.len() {
        return Err(Error::data(format!(
            "{} predictions but {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut tp: BTreeMap<Label, usize> = BTreeMap::new();
    let mut fp: BTreeMap<Label, usize> = BTreeMap::new();
    let mut support: BTreeMap<Label, usize> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let Some(t) = t else { continue };
        *support.entry(*t).or_default() += 1;
        match p {
            Some(p) if p == t => *tp.entry(*t).or_default() += 1,
            Some(p) => *fp.entry(*p).or_default() += 1,
            None => {}
        }
    }
    let per_class: BTreeMap<Label, ClassScore> = support
        .iter()
        .map(|(&label, &n)| {
            let tp = tp.get(&label).copied().unwrap_or(0) as f64;
            let fp = fp.get(&label).copied().unwrap_or(0) as f64;
            let fn_ = n as f64 - tp;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = tp / n as f64;
            let f1 = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
            (
                label,
                ClassScore {
                    precision,
                    recall,
                    f1,
                    support: n,
                },
            )
        })
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|s| s.f1).sum::<f64>() / per_class.len() as f64
    };
    Ok(F1Report { per_class, macro_f1 })
}

/// Maps clusters to labels and scores the mapped prediction.
pub fn mapped_macro_f1(pred: &[usize], truth: &[Option<Label>]) -> Result<(ClusterMapping, F1Report)> {
    let mapping = map_clusters(pred, truth)?;
    let report = macro_f1(&mapping.apply(pred), truth)?;
    Ok((mapping, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: Option<Label> = Some(0);
    const B: Option<Label> = Some(1);

    #[test]
    fn mapping_examples() {
        let m = map_clusters(&[0, 0, 1, 1], &[A, A, B, B]).unwrap();
        assert_eq!(m.mapping, [(0, A), (1, B)].into());
        let m = map_clusters(&[0, 0, 0, 0], &[A, A, B, B]).unwrap();
        assert_eq!(m.mapping, [(0, A)].into());
        let m = map_clusters(&[0, 1, 2, 2], &[A, A, B, B]).unwrap();
        assert_eq!(m.mapping, [(0, A), (1, A), (2, B)].into());
        let m = map_clusters(&[0, 1, 1], &[None, A, A]).unwrap();
        assert_eq!(m.get(0), None);
        assert!(map_clusters(&[0], &[A, A]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[A, B, B], &[A, B, B]).unwrap().macro_f1, 1.0);
        // A: tp 1, fp 1, fn 0; B: tp 2, fp 0, fn 1
        let r = macro_f1(&[A, A, B, B], &[A, B, B, B]).unwrap();
        assert!((r.per_class[&0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class[&1].f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        let missing = macro_f1(&[A, A, A, A], &[A, A, B, B]).unwrap();
        assert_eq!(missing.per_class[&1].f1, 0.0);
        assert!((missing.macro_f1 - (2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_and_confusion() {
        let labels = [A, A, A, B, B];
        assert_eq!(align_truth(&labels, 2, 3).unwrap(), &[A, B, B]);
        assert!(align_truth(&labels, 2, 2).is_err());
        let c = Confusion::new(&[0, 1, 1, 2], &[A, A, None, B], 4).unwrap();
        assert_eq!(c.counts, vec![vec![1, 0], vec![1, 0], vec![0, 1], vec![0, 0]]);
        assert_eq!(c.total(), 3);
        assert_eq!(c.to_csv().lines().next().unwrap(), "cluster,0,1");
        // zero-overlap cluster stays unmatched
        assert_eq!(mapping_from(&c).get(3), None);
    }

    fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<Option<Label>>)> {
        (1usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..5, n),
                prop::collection::vec(prop::option::weighted(0.9, 0i64..4), n),
            )
        })
    }

    proptest! {
        #[test]
        fn identity_scores_one(truth in prop::collection::vec(0i64..6, 1..80)) {
            let pred: Vec<usize> = truth.iter().map(|&t| t as usize).collect();
            let truth: Vec<Option<Label>> = truth.into_iter().map(Some).collect();
            prop_assert_eq!(mapped_macro_f1(&pred, &truth).unwrap().1.macro_f1, 1.0);
        }

        #[test]
        fn relabeling_and_order_invariant((pred, truth) in labels_strategy(), seed in 0u64..1000) {
            let (_, base) = mapped_macro_f1(&pred, &truth).unwrap();
            prop_assert!((0.0..=1.0).contains(&base.macro_f1));
            // cluster relabeling via a rotation preserves everything
            let rotated: Vec<usize> = pred.iter().map(|&c| (c + 1 + seed as usize % 4) % 5).collect();
            let (_, rot) = mapped_macro_f1(&rotated, &truth).unwrap();
            prop_assert!((rot.macro_f1 - base.macro_f1).abs() < 1e-12);
            let mut order: Vec<usize> = (0..pred.len()).collect();
            order.reverse();
            order.rotate_left(seed as usize % pred.len());
            let p2: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
            let t2: Vec<Option<Label>> = order.iter().map(|&i| truth[i]).collect();
            let (_, perm) = mapped_macro_f1(&p2, &t2).unwrap();
            prop_assert!((perm.macro_f1 - base.macro_f1).abs() < 1e-12);
        }
    }
}
