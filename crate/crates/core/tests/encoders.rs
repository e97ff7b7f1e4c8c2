mod common;

use std::f64::consts::LN_2;

use canseg::encoders::{
    gaussian_kl, prediction_pairs, train, window_triples, EncoderModel, TrainingBatch, TrainingConfig, Variant,
};
use canseg::nn::{Graph, Tensor};
use canseg::synthgen::{drivelike5, generate_session};
use canseg::timeseries::{window_at, MultivariateTimeSeries};
use common::{gradient_error, tiny_batch, tiny_model};

fn series(n: usize, d: usize, f: impl Fn(usize, usize) -> f64) -> MultivariateTimeSeries {
    let names = (0..d).map(|c| format!("c{c}")).collect();
    let rows = (0..d).map(|c| (0..n).map(|t| f(c, t)).collect()).collect();
    MultivariateTimeSeries::new(names, rows, 10.0).unwrap()
}

fn zero_param(model: &mut EncoderModel, name: &str) {
    let i = model.params().index(name).unwrap();
    model.params_mut().get_mut(i).data.fill(0.0);
}

#[test]
fn gradients_match_finite_differences() {
    for v in Variant::ALL {
        for seed in 0..3 {
            let err = gradient_error(&tiny_model(v, seed), &tiny_batch(v, seed));
            assert!(err < 1e-4, "{v} seed {seed}: {err}");
        }
    }
}

#[test]
fn zero_output_layer_gives_zero_embedding() {
    for v in Variant::ALL {
        let mut m = tiny_model(v, 1);
        zero_param(&mut m, "enc.out.w");
        zero_param(&mut m, "enc.out.b");
        let s = series(12, 2, |c, t| (c as f64 + 1.0) * (t as f64).sin());
        let rep = m.encode_series(&s, "s").unwrap();
        assert!(rep.values.iter().all(|&x| x == 0.0), "{v}");
    }
}

#[test]
fn identical_windows_identical_embeddings() {
    let m = tiny_model(Variant::Vame, 3);
    let s = series(20, 2, |c, t| ((t % 5) as f64) - c as f64);
    let rep = m.encode_series(&s, "s").unwrap();
    assert_eq!(rep.row(1), rep.row(6));
    assert_eq!(m.encode(&window_at(&s, 8, 4).unwrap()).unwrap(), rep.row(5));
    assert_eq!(tiny_model(Variant::Vame, 3).params(), m.params());
}

#[test]
fn encode_series_lengths_and_rows() {
    let s = series(100, 3, |c, t| ((t * (c + 2)) as f64 * 0.1).cos());
    for v in Variant::ALL {
        for w in [5, 10, 15, 20] {
            let cfg = TrainingConfig {
                hidden: 6,
                ..TrainingConfig::default()
            };
            let m = EncoderModel::new(v, 3, w, 4, cfg).unwrap();
            let rep = m.encode_series(&s, "s").unwrap();
            assert_eq!(rep.len(), 100 - (w - 1));
            assert_eq!(rep.offset, w - 1);
            for (i, end) in [(0, w - 1), (rep.len() - 1, 99)] {
                assert_eq!(rep.row(i), m.encode(&window_at(&s, end, w).unwrap()).unwrap().as_slice());
            }
        }
    }
    let m = EncoderModel::new(Variant::Ae, 3, 10, 4, TrainingConfig::default()).unwrap();
    assert_eq!(m.encode_series(&s.slice(0, 10).unwrap(), "s").unwrap().len(), 1);
    assert!(m.encode_series(&s.slice(0, 9).unwrap(), "s").is_err());
    assert!(m.encode_series(&series(20, 2, |_, _| 0.0), "s").is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for v in Variant::ALL {
        let m = tiny_model(v, 9);
        m.save(dir.path(), "m", 0).unwrap();
        let back = EncoderModel::load(dir.path(), "m").unwrap();
        assert_eq!(back.params(), m.params(), "{v}");
        assert_eq!(back.sidecar(), m.sidecar());
    }
    let mut frozen = tiny_model(Variant::Tnc, 2);
    frozen.freeze();
    assert!(frozen.params().iter().all(|(n, _)| n.starts_with("enc.")));
    frozen.save(dir.path(), "f", 0).unwrap();
    let back = EncoderModel::load(dir.path(), "f").unwrap();
    assert!(back.is_frozen());
    assert_eq!(back.params(), frozen.params());
}

#[test]
fn ae_fits_constant_windows() {
    let s = series(120, 2, |c, _| 0.5 - c as f64);
    let cfg = TrainingConfig {
        epochs: 200,
        learning_rate: 1e-3,
        hidden: 16,
        batch_size: 16,
        ..TrainingConfig::default()
    };
    let mut m = EncoderModel::new(Variant::Ae, 2, 5, 3, cfg).unwrap();
    let report = train(&mut m, &[&s]).unwrap();
    assert!(report.final_loss().unwrap() < 1e-3, "{:?}", report.final_loss());
    assert!(report.loss_history[0] > report.final_loss().unwrap());
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let s = series(60, 2, |c, t| (t + c) as f64 * 0.01);
    for v in [Variant::Ae, Variant::Drive2Vec, Variant::VameStar] {
        let cfg = TrainingConfig {
            epochs: 0,
            hidden: 4,
            ..TrainingConfig::default()
        };
        let mut m = EncoderModel::new(v, 2, 5, 3, cfg).unwrap();
        let before = m.params().clone();
        let report = train(&mut m, &[&s]).unwrap();
        assert!(report.loss_history.is_empty());
        assert_eq!(m.params(), &before);
    }
}

#[test]
fn training_is_deterministic() {
    let s = generate_session(&drivelike5(), 30.0, 5).unwrap();
    let run = |v| {
        let cfg = TrainingConfig {
            epochs: 2,
            tloss_steps: 3,
            hidden: 8,
            seed: 11,
            ..TrainingConfig::default()
        };
        let mut m = EncoderModel::new(v, 9, 5, 3, cfg).unwrap();
        train(&mut m, &[&s]).unwrap();
        m
    };
    for v in Variant::ALL {
        assert_eq!(run(v).params(), run(v).params(), "{v}");
    }
}

#[test]
fn drive2vec_pairs_need_room_for_the_next_window() {
    let s = series(50, 1, |_, t| t as f64);
    let pairs = prediction_pairs(&[&s], 10, 3).unwrap();
    let ends: Vec<usize> = pairs.iter().map(|(c, _)| c.end).collect();
    assert_eq!(ends, (9..=39).step_by(3).collect::<Vec<_>>());
    assert!(pairs.iter().all(|(c, n)| n.end == c.end + 10));
    assert!(prediction_pairs(&[&series(15, 1, |_, t| t as f64)], 10, 3).is_err());
}

#[test]
fn vame_triples() {
    let s = series(50, 1, |_, t| t as f64);
    let plain = window_triples(&[&s], 5, 2, false).unwrap();
    assert!(plain.iter().all(|t| t.past.is_none() && t.future.end == t.current.end + 5 && t.future.end < 50));
    let star = window_triples(&[&s], 5, 2, true).unwrap();
    assert!(star.iter().all(|t| t.past.as_ref().unwrap().end + 5 == t.current.end));
    assert!(star.len() < plain.len());
}

#[test]
fn kl_closed_form() {
    let kl = |m: Vec<f64>, lv: Vec<f64>| {
        let mut g = Graph::new();
        let n = m.len();
        let mean = g.input(Tensor::new(vec![1, n], m).unwrap());
        let logvar = g.input(Tensor::new(vec![1, n], lv).unwrap());
        let k = gaussian_kl(&mut g, mean, logvar).unwrap();
        g.value(k).item()
    };
    assert_eq!(kl(vec![0.0; 3], vec![0.0; 3]), 0.0);
    assert!((kl(vec![1.0], vec![0.0]) - 0.5).abs() < 1e-15);
    let (mu, lv) = (0.3f64, -0.8f64);
    assert!((kl(vec![mu], vec![lv]) - 0.5 * (mu * mu + lv.exp() - 1.0 - lv)).abs() < 1e-15);
}

#[test]
fn vame_term_counts() {
    let count = |v| {
        let m = tiny_model(v, 0);
        let names: Vec<&str> = m.loss_terms(&tiny_batch(v, 0)).unwrap().into_iter().map(|t| t.0).collect();
        names
    };
    assert_eq!(count(Variant::Vame), ["reconstruction", "future", "kl"]);
    assert_eq!(count(Variant::VameStar), ["past", "reconstruction", "future", "kl"]);
    let m = tiny_model(Variant::Vame, 0);
    assert!(m.loss_terms(&tiny_batch(Variant::VameStar, 0)).is_err());
    assert!(m.loss_terms(&tiny_batch(Variant::Ae, 0)).is_err());
}

#[test]
fn tloss_of_a_constant_map() {
    let mut m = tiny_model(Variant::TLoss, 4);
    zero_param(&mut m, "enc.out.w");
    zero_param(&mut m, "enc.out.b");
    let batch = tiny_batch(Variant::TLoss, 4);
    let k = 2.0;
    assert!((m.loss_value(m.params(), &batch).unwrap() - (1.0 + k) * LN_2).abs() < 1e-12);
    // every window maps to b, so every dot product is |b|^2
    let i = m.params().index("enc.out.b").unwrap();
    m.params_mut().get_mut(i).data.copy_from_slice(&[1.0, 2.0, 0.5]);
    let s: f64 = 1.0 + 4.0 + 0.25;
    let expected = (1.0 + (-s).exp()).ln() + k * (1.0 + s.exp()).ln();
    assert!((m.loss_value(m.params(), &batch).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn tnc_loss_of_a_constant_discriminator() {
    let mut m = tiny_model(Variant::Tnc, 6);
    zero_param(&mut m, "disc.2.w");
    zero_param(&mut m, "disc.2.b");
    let batch = tiny_batch(Variant::Tnc, 6);
    assert!((m.loss_value(m.params(), &batch).unwrap() - LN_2).abs() < 1e-12);

    let c = 1.3f64;
    let sp = |x: f64| (1.0 + x.exp()).ln();
    for w_pu in [0.0, 0.05, 0.4] {
        let cfg = TrainingConfig {
            hidden: 5,
            seed: 6,
            tnc_w_pu: w_pu,
            ..TrainingConfig::default()
        };
        let mut m = EncoderModel::new(Variant::Tnc, 2, 4, 3, cfg).unwrap();
        zero_param(&mut m, "disc.2.w");
        let i = m.params().index("disc.2.b").unwrap();
        m.params_mut().get_mut(i).data[0] = c;
        let bce0 = sp(c);
        let bce1 = sp(-c);
        let distant = (1.0 - w_pu) * bce0 + w_pu * bce1;
        let expected = 0.5 * (bce1 + distant);
        assert!((m.loss_value(m.params(), &batch).unwrap() - expected).abs() < 1e-12, "w_pu {w_pu}");
    }
}

#[test]
fn batch_kind_must_match_variant() {
    let m = tiny_model(Variant::Ae, 0);
    let wrong = tiny_batch(Variant::Drive2Vec, 0);
    assert_eq!(m.loss_value(m.params(), &wrong).unwrap_err().exit_code(), 1);
    assert!(matches!(tiny_batch(Variant::Ae, 0), TrainingBatch::Reconstruct { .. }));
}

#[test]
fn training_rejects_mismatched_sessions() {
    let mut m = tiny_model(Variant::Ae, 0);
    let s = series(40, 3, |_, _| 0.0);
    assert_eq!(train(&mut m, &[&s]).unwrap_err().exit_code(), 2);
    let short = series(3, 2, |_, _| 0.0);
    assert!(train(&mut m, &[&short]).is_err());
}
