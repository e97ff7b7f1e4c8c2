//! Scoring discovered clusters against ground-truth labels.

mod export;
mod probe;
mod scores;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use export::{export_embeddings, export_trajectory, import_embeddings, EmbeddingTable};
pub use probe::{linear_probe, ProbeReport, DEFAULT_FOLDS};
pub use scores::{
    align_truth, macro_f1, map_clusters, mapped_macro_f1, mapping_from, ClassScore, ClusterMapping, Confusion,
    F1Report,
};

use crate::clustering::Assignment;
use crate::error::{Error, Result};
use crate::representation::Representation;
use crate::timeseries::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub sessions: Vec<String>,
    pub labelled_timesteps: usize,
    pub mapping: ClusterMapping,
    pub per_class: BTreeMap<Label, ClassScore>,
    pub macro_f1: f64,
    pub confusion: Confusion,
    pub probe: Option<ProbeReport>,
    pub config: serde_json::Value,
}

/// Labels of one session, full length, next to its assignment.
pub struct LabelledSession<'a> {
    pub assignment: &'a Assignment,
    pub labels: &'a [Option<Label>],
}

/// Mapped macro F1 over the concatenation of all given sessions, with an
/// optional linear probe on the matching representations.
pub fn evaluate(
    sessions: &[LabelledSession<'_>],
    probe: Option<(&[&Representation], u64)>,
    config: serde_json::Value,
) -> Result<EvaluationReport> {
    if sessions.is_empty() {
        return Err(Error::data("nothing to evaluate"));
    }
    let k = sessions[0].assignment.k;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for s in sessions {
        let a = s.assignment;
        truth.extend_from_slice(align_truth(s.labels, a.offset, a.len())?);
        pred.extend_from_slice(&a.clusters);
    }
    let confusion = Confusion::new(&pred, &truth, k)?;
    let mapping = mapping_from(&confusion);
    let f1 = macro_f1(&mapping.apply(&pred), &truth)?;
    let probe = match probe {
        Some((reps, seed)) => {
            if reps.len() != sessions.len() {
                return Err(Error::data("probe needs one representation per evaluated session"));
            }
            let dim = reps[0].dim;
            let x: Vec<f64> = reps.iter().flat_map(|r| r.values.iter().copied()).collect();
            if x.len() != truth.len() * dim {
                return Err(Error::data("representations do not match the evaluated assignments"));
            }
            Some(linear_probe(&x, dim, &truth, DEFAULT_FOLDS, seed)?)
        }
        None => None,
    };
    Ok(EvaluationReport {
        sessions: sessions.iter().map(|s| s.assignment.session.clone()).collect(),
        labelled_timesteps: confusion.total(),
        mapping,
        per_class: f1.per_class,
        macro_f1: f1.macro_f1,
        confusion,
        probe,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_over_sessions() {
        let a = Assignment {
            session: "a".into(),
            offset: 1,
            k: 3,
            clusters: vec![0, 0, 1],
        };
        let b = Assignment {
            session: "b".into(),
            offset: 1,
            k: 3,
            clusters: vec![1, 1, 1],
        };
        let la = [Some(5), Some(5), Some(5), Some(6)];
        let lb = [None, Some(6), Some(6), None];
        let report = evaluate(
            &[
                LabelledSession {
                    assignment: &a,
                    labels: &la,
                },
                LabelledSession {
                    assignment: &b,
                    labels: &lb,
                },
            ],
            None,
            serde_json::json!({}),
        )
        .unwrap();
        assert_eq!(report.labelled_timesteps, 5);
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.mapping.get(2), None);
        assert_eq!(report.confusion.counts.len(), 3);
        let json = serde_json::to_string(&report).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
