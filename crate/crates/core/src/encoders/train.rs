//! Window sampling and the epoch/step training loops for every variant.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState};
use crate::timeseries::{window_at, MultivariateTimeSeries, Window};

use super::config::Variant;
use super::losses::TrainingBatch;
use super::model::EncoderModel;
use super::stationarity::estimate_neighborhood;

const TRAIN_SEED_SALT: u64 = 0x7261_696e;

/// Loss trace of one training run.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingReport {
    pub variant: Variant,
    /// Mean loss per epoch (per step for T-Loss).
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

impl TrainingReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }
}

/// Present window plus its non-overlapping neighbors `±w` steps away.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowTriple {
    pub past: Option<Window>,
    pub current: Window,
    pub future: Window,
}

fn grid(series: &MultivariateTimeSeries, w: usize, step: usize) -> Vec<usize> {
    if series.len() < w {
        return Vec::new();
    }
    (w - 1..series.len()).step_by(step).collect()
}

/// Windows on the training grid (ends `w-1, w-1+step, ...`) of every session.
pub fn training_windows(sessions: &[&MultivariateTimeSeries], w: usize, step: usize) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for s in sessions {
        for end in grid(s, w, step) {
            out.push(window_at(s, end, w)?);
        }
    }
    if out.is_empty() {
        return Err(Error::data(format!("no session is long enough for windows of width {w}")));
    }
    Ok(out)
}

/// `(current, next)` pairs where the next window ends `w` steps later.
pub fn prediction_pairs(
    sessions: &[&MultivariateTimeSeries],
    w: usize,
    step: usize,
) -> Result<Vec<(Window, Window)>> {
    let mut out = Vec::new();
    for s in sessions {
        for end in grid(s, w, step).into_iter().filter(|e| e + w < s.len()) {
            out.push((window_at(s, end, w)?, window_at(s, end + w, w)?));
        }
    }
    if out.is_empty() {
        return Err(Error::data(format!("no session fits two adjacent windows of width {w}")));
    }
    Ok(out)
}

/// Triples for VAME (`with_past = false`) or VAME* (`true`).
pub fn window_triples(
    sessions: &[&MultivariateTimeSeries],
    w: usize,
    step: usize,
    with_past: bool,
) -> Result<Vec<WindowTriple>> {
    let mut out = Vec::new();
    for s in sessions {
        for end in grid(s, w, step) {
            if end + w >= s.len() || (with_past && end < 2 * w - 1) {
                continue;
            }
            out.push(WindowTriple {
                past: if with_past {
                    Some(window_at(s, end - w, w)?)
                } else {
                    None
                },
                current: window_at(s, end, w)?,
                future: window_at(s, end + w, w)?,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::data(format!("no session fits a window triple of width {w}")));
    }
    Ok(out)
}

/// Shared Adam loop. `make_batch(model, sample_ids, epoch, rng)` draws the
/// minibatch. On a non-finite loss or gradient the parameters from the start
/// of the failing epoch are restored and the error is returned.
fn run_epochs<F>(model: &mut EncoderModel, n_samples: usize, mut make_batch: F) -> Result<TrainingReport>
where
    F: FnMut(&EncoderModel, &[usize], usize, &mut ChaCha8Rng) -> Result<TrainingBatch>,
{
    let cfg = model.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_SEED_SALT);
    let mut state = AdamState::new(model.params());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n_samples).collect();
    for epoch in 0..cfg.epochs {
        let snapshot = model.params().clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for ids in order.chunks(cfg.batch_size) {
            let batch = make_batch(model, ids, epoch, &mut rng)?;
            let step = optimize(model, &batch, &mut state, cfg.learning_rate);
            match step {
                Ok(loss) => {
                    total += loss * ids.len() as f64;
                    count += ids.len();
                }
                Err(e) => {
                    model.params = snapshot;
                    return Err(e);
                }
            }
        }
        history.push(total / count.max(1) as f64);
    }
    model.final_loss = history.last().copied();
    Ok(TrainingReport {
        variant: model.variant(),
        loss_history: history,
        steps: state.step,
    })
}

fn optimize(model: &mut EncoderModel, batch: &TrainingBatch, state: &mut AdamState, lr: f64) -> Result<f64> {
    let (loss, grads) = model.loss_and_grad(model.params(), batch)?;
    if !loss.is_finite() {
        return Err(Error::numerical(format!(
            "{} loss became {loss} at step {}",
            model.variant(),
            state.step + 1
        )));
    }
    adam_step(model.params_mut(), &grads, lr, state)?;
    Ok(loss)
}

fn check_variant(model: &EncoderModel, allowed: &[Variant]) -> Result<()> {
    if !allowed.contains(&model.variant()) {
        return Err(Error::config(format!(
            "cannot train a {} model with this objective",
            model.variant()
        )));
    }
    if model.is_frozen() {
        return Err(Error::config("model is frozen"));
    }
    Ok(())
}

fn pick<'a>(items: &'a [Window], ids: &[usize]) -> Vec<&'a Window> {
    ids.iter().map(|&i| &items[i]).collect()
}

pub fn train_ae(model: &mut EncoderModel, windows: &[Window]) -> Result<TrainingReport> {
    check_variant(model, &[Variant::Ae])?;
    run_epochs(model, windows.len(), |m, ids, _, _| {
        Ok(TrainingBatch::Reconstruct {
            current: m.batch_tensor(&pick(windows, ids))?,
        })
    })
}

pub fn train_drive2vec(model: &mut EncoderModel, pairs: &[(Window, Window)]) -> Result<TrainingReport> {
    check_variant(model, &[Variant::Drive2Vec])?;
    run_epochs(model, pairs.len(), |m, ids, _, _| {
        let cur: Vec<&Window> = ids.iter().map(|&i| &pairs[i].0).collect();
        let next: Vec<&Window> = ids.iter().map(|&i| &pairs[i].1).collect();
        Ok(TrainingBatch::Predict {
            current: m.batch_tensor(&cur)?,
            next: m.batch_tensor(&next)?,
        })
    })
}

pub fn train_vame(model: &mut EncoderModel, triples: &[WindowTriple]) -> Result<TrainingReport> {
    check_variant(model, &[Variant::Vame, Variant::VameStar])?;
    let star = model.variant() == Variant::VameStar;
    if triples.iter().any(|t| t.past.is_some() != star) {
        return Err(Error::config(format!(
            "{} requires triples {} past windows",
            model.variant(),
            if star { "with" } else { "without" }
        )));
    }
    let e = model.embed();
    run_epochs(model, triples.len(), |m, ids, epoch, rng| {
        let cur: Vec<&Window> = ids.iter().map(|&i| &triples[i].current).collect();
        let fut: Vec<&Window> = ids.iter().map(|&i| &triples[i].future).collect();
        let past = if star {
            let p: Vec<&Window> = ids.iter().filter_map(|&i| triples[i].past.as_ref()).collect();
            Some(m.batch_tensor(&p)?)
        } else {
            None
        };
        let noise = (0..ids.len() * e).map(|_| StandardNormal.sample(rng)).collect();
        Ok(TrainingBatch::Variational {
            past,
            current: m.batch_tensor(&cur)?,
            future: m.batch_tensor(&fut)?,
            noise,
            kl_weight: m.config().kl_weight(epoch),
        })
    })
}

/// Draws an index with probability proportional to `weights`.
fn weighted_index(weights: &[usize], rng: &mut ChaCha8Rng) -> usize {
    let total: usize = weights.iter().sum();
    let mut r = rng.random_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

/// Samples one T-Loss minibatch of `batch` references.
pub fn sample_triplet_batch(
    model: &EncoderModel,
    sessions: &[&MultivariateTimeSeries],
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingBatch> {
    let w = model.width();
    let ref_len = model.config().reference_multiplier * w;
    let ref_starts: Vec<usize> = sessions
        .iter()
        .map(|s| (s.len() + 1).saturating_sub(ref_len))
        .collect();
    if ref_starts.iter().all(|&n| n == 0) {
        return Err(Error::data(format!(
            "no session is at least {ref_len} steps long for T-Loss references"
        )));
    }
    let neg_ends: Vec<usize> = sessions.iter().map(|s| (s.len() + 1).saturating_sub(w)).collect();
    let k = model.config().negatives;
    let mut refs = Vec::with_capacity(batch);
    let mut pos = Vec::with_capacity(batch);
    let mut negs: Vec<Vec<Window>> = vec![Vec::with_capacity(batch); k];
    for _ in 0..batch {
        let si = weighted_index(&ref_starts, rng);
        let s = sessions[si];
        let start = rng.random_range(0..ref_starts[si]);
        // central w-length window of the reference segment
        let centre_start = start + (ref_len - w) / 2;
        refs.push(window_at(s, centre_start + w - 1, w)?);
        let p = rng.random_range(start..=start + ref_len - w);
        pos.push(window_at(s, p + w - 1, w)?);
        for neg in negs.iter_mut() {
            let ni = weighted_index(&neg_ends, rng);
            let ns = rng.random_range(0..neg_ends[ni]);
            neg.push(window_at(sessions[ni], ns + w - 1, w)?);
        }
    }
    let r: Vec<&Window> = refs.iter().collect();
    let p: Vec<&Window> = pos.iter().collect();
    Ok(TrainingBatch::Triplet {
        reference: model.batch_tensor(&r)?,
        positive: model.batch_tensor(&p)?,
        negatives: negs
            .iter()
            .map(|n| model.batch_tensor(&n.iter().collect::<Vec<_>>()))
            .collect::<Result<_>>()?,
    })
}

pub fn train_tloss(model: &mut EncoderModel, sessions: &[&MultivariateTimeSeries]) -> Result<TrainingReport> {
    check_variant(model, &[Variant::TLoss])?;
    let cfg = model.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_SEED_SALT);
    let mut state = AdamState::new(model.params());
    let mut history = Vec::with_capacity(cfg.tloss_steps);
    let mut snapshot = model.params().clone();
    for step in 0..cfg.tloss_steps {
        if step % 50 == 0 {
            snapshot = model.params().clone();
        }
        let batch = sample_triplet_batch(model, sessions, cfg.batch_size, &mut rng)?;
        match optimize(model, &batch, &mut state, cfg.learning_rate) {
            Ok(l) => history.push(l),
            Err(e) => {
                model.params = snapshot;
                return Err(e);
            }
        }
    }
    model.final_loss = history.last().copied();
    Ok(TrainingReport {
        variant: model.variant(),
        loss_history: history,
        steps: state.step,
    })
}

/// An anchor window with its estimated stationary radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Anchor {
    pub session: usize,
    pub end: usize,
    pub radius: usize,
}

/// Anchors on the training grid with their neighborhood radius.
pub fn tnc_anchors(model: &EncoderModel, sessions: &[&MultivariateTimeSeries]) -> Vec<Anchor> {
    let cfg = model.config();
    let w = model.width();
    let mut out = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        for end in grid(s, w, cfg.train_step) {
            let radius = estimate_neighborhood(s, end, w, cfg.tnc_alpha, cfg.tnc_max_radius);
            out.push(Anchor {
                session: si,
                end,
                radius,
            });
        }
    }
    out
}

/// Neighbor and distant window ends for `anchor`.
fn tnc_pair(
    anchor: &Anchor,
    sessions: &[&MultivariateTimeSeries],
    w: usize,
    rng: &mut ChaCha8Rng,
) -> Result<((usize, usize), (usize, usize))> {
    let s = sessions[anchor.session];
    let n = s.len();
    let reach = anchor.radius * w;
    let lo = anchor.end.saturating_sub(reach).max(w - 1);
    let hi = (anchor.end + reach).min(n - 1);
    let neighbor = if hi > lo {
        // uniform over the span excluding the anchor itself
        let mut e = rng.random_range(lo..hi);
        if e >= anchor.end {
            e += 1;
        }
        e
    } else {
        anchor.end
    };
    // distant ends: |e - anchor| > reach within the same session
    // left range is w-1 ..= end-reach-1
    let left = (anchor.end + 1).saturating_sub(reach + w);
    let right_start = anchor.end + reach + 1;
    let right = n.saturating_sub(right_start);
    let distant = if left + right > 0 {
        let r = rng.random_range(0..left + right);
        (anchor.session, if r < left { w - 1 + r } else { right_start + (r - left) })
    } else {
        let others: Vec<usize> = (0..sessions.len())
            .filter(|&i| i != anchor.session && sessions[i].len() >= w)
            .collect();
        let &si = others
            .get(rng.random_range(0..others.len().max(1)))
            .ok_or_else(|| Error::data("TNC found no window outside an anchor neighborhood"))?;
        (si, rng.random_range(w - 1..sessions[si].len()))
    };
    Ok(((anchor.session, neighbor), distant))
}

/// Samples one TNC minibatch for the given anchors.
pub fn sample_neighborhood_batch(
    model: &EncoderModel,
    sessions: &[&MultivariateTimeSeries],
    anchors: &[Anchor],
    rng: &mut ChaCha8Rng,
) -> Result<TrainingBatch> {
    let w = model.width();
    let mut a = Vec::with_capacity(anchors.len());
    let mut nb = Vec::with_capacity(anchors.len());
    let mut di = Vec::with_capacity(anchors.len());
    for anc in anchors {
        let ((ns, ne), (ds, de)) = tnc_pair(anc, sessions, w, rng)?;
        a.push(window_at(sessions[anc.session], anc.end, w)?);
        nb.push(window_at(sessions[ns], ne, w)?);
        di.push(window_at(sessions[ds], de, w)?);
    }
    Ok(TrainingBatch::Neighborhood {
        anchor: model.batch_tensor(&a.iter().collect::<Vec<_>>())?,
        neighbor: model.batch_tensor(&nb.iter().collect::<Vec<_>>())?,
        distant: model.batch_tensor(&di.iter().collect::<Vec<_>>())?,
    })
}

pub fn train_tnc(model: &mut EncoderModel, sessions: &[&MultivariateTimeSeries]) -> Result<TrainingReport> {
    check_variant(model, &[Variant::Tnc])?;
    let anchors = tnc_anchors(model, sessions);
    if anchors.is_empty() {
        return Err(Error::data("no TNC anchors: sessions shorter than the window"));
    }
    run_epochs(model, anchors.len(), |m, ids, _, rng| {
        let chosen: Vec<Anchor> = ids.iter().map(|&i| anchors[i]).collect();
        sample_neighborhood_batch(m, sessions, &chosen, rng)
    })
}

/// Trains `model` on `sessions` with the objective its variant prescribes.
pub fn train(model: &mut EncoderModel, sessions: &[&MultivariateTimeSeries]) -> Result<TrainingReport> {
    let (w, step) = (model.width(), model.config().train_step);
    if let Some(s) = sessions.iter().find(|s| s.dim() != model.dim()) {
        return Err(Error::data(format!(
            "model expects {} channels, training session has {}",
            model.dim(),
            s.dim()
        )));
    }
    match model.variant() {
        Variant::Ae => train_ae(model, &training_windows(sessions, w, step)?),
        Variant::Drive2Vec => train_drive2vec(model, &prediction_pairs(sessions, w, step)?),
        Variant::Vame => train_vame(model, &window_triples(sessions, w, step, false)?),
        Variant::VameStar => train_vame(model, &window_triples(sessions, w, step, true)?),
        Variant::TLoss => train_tloss(model, sessions),
        Variant::Tnc => train_tnc(model, sessions),
    }
}
