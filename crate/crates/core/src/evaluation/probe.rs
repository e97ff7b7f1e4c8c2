use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scores::macro_f1;
use crate::error::{Error, Result};
use crate::timeseries::Label;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_C: f64 = 1.0;
const EPOCHS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub folds: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Mean test-fold F1 per class.
    pub per_class_f1: BTreeMap<Label, f64>,
    /// Classes with fewer samples than folds.
    pub excluded: Vec<Label>,
}

/// One-vs-rest linear SVM trained by Pegasos on standardized features.
struct LinearSvm {
    mean: Vec<f64>,
    scale: Vec<f64>,
    classes: Vec<Label>,
    /// Per class, `dim` weights then the bias.
    weights: Vec<Vec<f64>>,
}

impl LinearSvm {
    fn fit(x: &[f64], dim: usize, y: &[Label], rows: &[usize], c: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for &i in rows {
            for d in 0..dim {
                mean[d] += x[i * dim + d] / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for &i in rows {
            for d in 0..dim {
                scale[d] += (x[i * dim + d] - mean[d]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { 1.0 / s.sqrt() } else { 0.0 };
        }
        let feats: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| {
                let mut f: Vec<f64> = (0..dim).map(|d| (x[i * dim + d] - mean[d]) * scale[d]).collect();
                f.push(1.0);
                f
            })
            .collect();
        let mut classes: Vec<Label> = rows.iter().map(|&i| y[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        let lambda = 1.0 / (c * n);
        let radius = 1.0 / lambda.sqrt();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let weights = classes
            .iter()
            .map(|&class| {
                let mut w = vec![0.0; dim + 1];
                let mut t = 0usize;
                for _ in 0..EPOCHS {
                    order.shuffle(rng);
                    for &j in &order {
                        t += 1;
                        let eta = 1.0 / (lambda * t as f64);
                        let target = if y[rows[j]] == class { 1.0 } else { -1.0 };
                        let margin = target * dot(&w, &feats[j]);
                        let shrink = 1.0 - eta * lambda;
                        w.iter_mut().for_each(|v| *v *= shrink);
                        if margin < 1.0 {
                            for (v, f) in w.iter_mut().zip(&feats[j]) {
                                *v += eta * target * f;
                            }
                        }
                        let norm = dot(&w, &w).sqrt();
                        if norm > radius {
                            w.iter_mut().for_each(|v| *v *= radius / norm);
                        }
                    }
                }
                w
            })
            .collect();
        LinearSvm {
            mean,
            scale,
            classes,
            weights,
        }
    }

    fn predict(&self, row: &[f64]) -> Label {
        let mut f: Vec<f64> = row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect();
        f.push(1.0);
        let mut best = (self.classes[0], f64::NEG_INFINITY);
        for (class, w) in self.classes.iter().zip(&self.weights) {
            let score = dot(w, &f);
            if score > best.1 {
                best = (*class, score);
            }
        }
        best.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stratified k-fold cross-validation of a linear SVM (hinge loss, L2, `C = 1`).
///
/// `x` holds `dim`-rows; rows without a label are ignored.
pub fn linear_probe(x: &[f64], dim: usize, labels: &[Option<Label>], folds: usize, seed: u64) -> Result<ProbeReport> {
    if dim == 0 || x.len() != labels.len() * dim {
        return Err(Error::Shape {
            op: "linear_probe",
            left: vec![labels.len(), dim],
            right: vec![x.len()],
        });
    }
    if folds < 2 {
        return Err(Error::config("the probe needs at least 2 folds"));
    }
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            by_class.entry(*l).or_default().push(i);
        }
    }
    let mut excluded = Vec::new();
    by_class.retain(|&l, rows| {
        let keep = rows.len() >= folds;
        if !keep {
            log::warn!("probe excludes class {l}: {} samples for {folds} folds", rows.len());
            excluded.push(l);
        }
        keep
    });
    if by_class.len() < 2 {
        return Err(Error::data("the probe needs at least two classes with enough samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of: Vec<Option<usize>> = vec![None; labels.len()];
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        for (j, &i) in rows.iter().enumerate() {
            fold_of[i] = Some(j % folds);
        }
    }
    let y: Vec<Label> = labels.iter().map(|l| l.unwrap_or(Label::MIN)).collect();
    let mut accuracy = 0.0;
    let mut f1_sum = 0.0;
    let mut per_class: BTreeMap<Label, f64> = by_class.keys().map(|&l| (l, 0.0)).collect();
    for f in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i].is_some_and(|g| g != f)).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == Some(f)).collect();
        let svm = LinearSvm::fit(x, dim, &y, &train, DEFAULT_C, &mut rng);
        let pred: Vec<Option<Label>> = test.iter().map(|&i| Some(svm.predict(&x[i * dim..(i + 1) * dim]))).collect();
        let truth: Vec<Option<Label>> = test.iter().map(|&i| labels[i]).collect();
        let correct = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
        accuracy += correct as f64 / test.len() as f64;
        let scores = macro_f1(&pred, &truth)?;
        f1_sum += scores.macro_f1;
        for (l, s) in scores.per_class {
            *per_class.get_mut(&l).expect("fold classes are kept classes") += s.f1;
        }
    }
    let k = folds as f64;
    per_class.values_mut().for_each(|v| *v /= k);
    Ok(ProbeReport {
        folds,
        accuracy: accuracy / k,
        macro_f1: f1_sum / k,
        per_class_f1: per_class,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, gap: f64, seed: u64) -> (Vec<f64>, Vec<Option<Label>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let class = (i % 2) as i64;
            let shift = if class == 0 { -gap } else { gap };
            x.push(shift + rng.sample::<f64, _>(StandardNormal));
            x.push(rng.sample::<f64, _>(StandardNormal));
            y.push(Some(class));
        }
        (x, y)
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs(400, 5.0, 1);
        let r = linear_probe(&x, 2, &y, DEFAULT_FOLDS, 0).unwrap();
        assert!(r.accuracy >= 0.99, "{}", r.accuracy);
    }

    #[test]
    fn shuffled_labels_are_chance() {
        let (x, mut y) = blobs(400, 5.0, 2);
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let r = linear_probe(&x, 2, &y, DEFAULT_FOLDS, 0).unwrap();
        assert!((r.accuracy - 0.5).abs() <= 0.1, "{}", r.accuracy);
    }

    #[test]
    fn degenerate_classes() {
        let (x, _) = blobs(40, 1.0, 4);
        let one = vec![Some(0); 40];
        assert!(linear_probe(&x, 2, &one, DEFAULT_FOLDS, 0).is_err());
        let mut few: Vec<Option<Label>> = (0..40).map(|i| Some((i % 2) as i64)).collect();
        few[0] = Some(7);
        let r = linear_probe(&x, 2, &few, DEFAULT_FOLDS, 0).unwrap();
        assert_eq!(r.excluded, vec![7]);
    }
}
