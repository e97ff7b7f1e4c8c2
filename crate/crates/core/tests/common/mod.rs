#![allow(dead_code)]

use canseg::encoders::{EncoderModel, TrainingBatch, TrainingConfig, Variant};
use canseg::nn::{ParameterSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const D: usize = 2;
pub const W: usize = 4;
pub const E: usize = 3;

pub fn tiny_model(variant: Variant, seed: u64) -> EncoderModel {
    let config = TrainingConfig {
        hidden: 5,
        seed,
        ..TrainingConfig::default()
    };
    EncoderModel::new(variant, D, W, E, config).unwrap()
}

fn windows(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::new(vec![n, W, D], (0..n * W * D).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// A random minibatch of the kind `variant` trains on.
pub fn tiny_batch(variant: Variant, seed: u64) -> TrainingBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBA7C);
    let n = 3;
    match variant {
        Variant::Ae => TrainingBatch::Reconstruct {
            current: windows(&mut rng, n),
        },
        Variant::Drive2Vec => TrainingBatch::Predict {
            current: windows(&mut rng, n),
            next: windows(&mut rng, n),
        },
        Variant::Vame | Variant::VameStar => TrainingBatch::Variational {
            past: (variant == Variant::VameStar).then(|| windows(&mut rng, n)),
            current: windows(&mut rng, n),
            future: windows(&mut rng, n),
            noise: (0..n * E).map(|_| rng.random_range(-1.5..1.5)).collect(),
            kl_weight: 0.7,
        },
        Variant::TLoss => TrainingBatch::Triplet {
            reference: windows(&mut rng, n),
            positive: windows(&mut rng, n),
            negatives: (0..2).map(|_| windows(&mut rng, n)).collect(),
        },
        Variant::Tnc => TrainingBatch::Neighborhood {
            anchor: windows(&mut rng, n),
            neighbor: windows(&mut rng, n),
            distant: windows(&mut rng, n),
        },
    }
}

/// Central differences of the loss w.r.t. every parameter entry.
pub fn finite_difference(model: &EncoderModel, batch: &TrainingBatch, h: f64) -> Vec<Vec<f64>> {
    let mut p: ParameterSet = model.params().clone();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let mut gi = Vec::with_capacity(p.get(i).len());
        for j in 0..p.get(i).len() {
            let orig = p.get(i).data[j];
            p.get_mut(i).data[j] = orig + h;
            let up = model.loss_value(&p, batch).unwrap();
            p.get_mut(i).data[j] = orig - h;
            let down = model.loss_value(&p, batch).unwrap();
            p.get_mut(i).data[j] = orig;
            gi.push((up - down) / (2.0 * h));
        }
        out.push(gi);
    }
    out
}

/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over all parameters.
pub fn gradient_error(model: &EncoderModel, batch: &TrainingBatch) -> f64 {
    let (_, grads) = model.loss_and_grad(model.params(), batch).unwrap();
    let numeric = finite_difference(model, batch, 1e-6);
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in grads.0.iter().zip(&numeric) {
        for (x, y) in a.data.iter().zip(b) {
            diff += (x - y).powi(2);
            na += x * x;
            nb += y * y;
        }
    }
    diff.sqrt() / f64::max(na, nb).sqrt().max(1e-12)
}
