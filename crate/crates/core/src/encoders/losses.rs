//! Training objectives. Every loss is a deterministic function of the
//! parameters once a [`TrainingBatch`] (windows and any noise) is drawn.

use crate::error::{Error, Result};
use crate::nn::{Graph, ParameterSet, Tensor, Var};

use super::config::Variant;
use super::model::EncoderModel;

/// One pre-sampled minibatch. Window tensors are `[batch, w, d]` time-major.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainingBatch {
    /// AE: reconstruct the window.
    Reconstruct { current: Tensor },
    /// Drive2Vec: reconstruct the window and predict the following one.
    Predict { current: Tensor, next: Tensor },
    /// VAME / VAME*: reparameterized latent with present, future and
    /// (VAME* only) past decoders.
    Variational {
        past: Option<Tensor>,
        current: Tensor,
        future: Tensor,
        /// Standard normal draws, `batch × e`.
        noise: Vec<f64>,
        kl_weight: f64,
    },
    /// T-Loss: centre of the reference segment, a subsequence of it, and
    /// `K` negative batches.
    Triplet {
        reference: Tensor,
        positive: Tensor,
        negatives: Vec<Tensor>,
    },
    /// TNC: anchor, a window from its stationary neighborhood, and a
    /// window from outside it.
    Neighborhood {
        anchor: Tensor,
        neighbor: Tensor,
        distant: Tensor,
    },
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        let t = match self {
            TrainingBatch::Reconstruct { current }
            | TrainingBatch::Predict { current, .. }
            | TrainingBatch::Variational { current, .. } => current,
            TrainingBatch::Triplet { reference, .. } => reference,
            TrainingBatch::Neighborhood { anchor, .. } => anchor,
        };
        t.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scalar loss and its named components.
pub struct LossTerms {
    pub total: Var,
    pub terms: Vec<(&'static str, Var)>,
}

/// `KL(N(mean, exp(logvar)) || N(0, I))` summed over latent dims, averaged
/// over the batch.
pub fn gaussian_kl(g: &mut Graph, mean: Var, logvar: Var) -> Result<Var> {
    let nb = g.shape(mean)[0] as f64;
    let m2 = g.mul(mean, mean)?;
    let ev = g.exp(logvar);
    let a = g.add(m2, ev)?;
    let b = g.sub(a, logvar)?;
    let b = g.offset(b, -1.0);
    let s = g.sum(b);
    Ok(g.scale(s, 0.5 / nb))
}

fn flat(g: &mut Graph, t: &Tensor) -> Result<Var> {
    let v = g.input(t.clone());
    let n = t.shape[0];
    g.reshape(v, &[n, t.len() / n.max(1)])
}

fn sum_terms(g: &mut Graph, terms: &[(&'static str, Var)]) -> Result<Var> {
    let mut total = terms[0].1;
    for (_, v) in &terms[1..] {
        total = g.add(total, *v)?;
    }
    Ok(total)
}

/// Squared error summed over each sample, averaged over the batch; keeps
/// reconstruction and KL on the same per-sample scale.
fn sum_sq(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let shape = g.shape(pred);
    let per_sample = shape[1..].iter().product::<usize>() as f64;
    let m = g.mse(pred, target)?;
    Ok(g.scale(m, per_sample))
}

/// Row-wise dot products of `[n, e]` inputs.
fn rowdot(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let p = g.mul(a, b)?;
    g.sum_last(p)
}

impl EncoderModel {
    /// Builds the variant's loss for `batch` using `params`.
    pub fn loss(&self, g: &mut Graph, params: &ParameterSet, batch: &TrainingBatch) -> Result<LossTerms> {
        let e = self.embed();
        match (self.variant(), batch) {
            (Variant::Ae, TrainingBatch::Reconstruct { current }) => {
                let x = g.input(current.clone());
                let z = self.encoder_graph(g, params, x)?;
                let rec = self.decoder_graph(g, params, "current", z)?;
                let target = flat(g, current)?;
                let l = g.mse(rec, target)?;
                Ok(LossTerms {
                    total: l,
                    terms: vec![("reconstruction", l)],
                })
            }
            (Variant::Drive2Vec, TrainingBatch::Predict { current, next }) => {
                let x = g.input(current.clone());
                let z = self.encoder_graph(g, params, x)?;
                let rec = self.decoder_graph(g, params, "current", z)?;
                let pred = self.decoder_graph(g, params, "next", z)?;
                let tc = flat(g, current)?;
                let tn = flat(g, next)?;
                let lr = g.mse(rec, tc)?;
                let lp = g.mse(pred, tn)?;
                let terms = vec![("reconstruction", lr), ("future", lp)];
                Ok(LossTerms {
                    total: sum_terms(g, &terms)?,
                    terms,
                })
            }
            (
                Variant::Vame | Variant::VameStar,
                TrainingBatch::Variational {
                    past,
                    current,
                    future,
                    noise,
                    kl_weight,
                },
            ) => {
                let star = self.variant() == Variant::VameStar;
                if star != past.is_some() {
                    return Err(Error::config(format!(
                        "{} batch {} a past window",
                        self.variant(),
                        if star { "requires" } else { "must not carry" }
                    )));
                }
                let x = g.input(current.clone());
                let out = self.encoder_graph(g, params, x)?;
                let mean = g.slice(out, 1, 0, e)?;
                let logvar = g.slice(out, 1, e, e)?;
                let z = g.gaussian_sample(mean, logvar, noise.clone())?;
                let mut terms = Vec::with_capacity(4);
                if let Some(past) = past {
                    let p = self.decoder_graph(g, params, "past", z)?;
                    let t = flat(g, past)?;
                    terms.push(("past", sum_sq(g, p, t)?));
                }
                let rec = self.decoder_graph(g, params, "current", z)?;
                let tc = flat(g, current)?;
                terms.push(("reconstruction", sum_sq(g, rec, tc)?));
                let fut = self.decoder_graph(g, params, "future", z)?;
                let tf = flat(g, future)?;
                terms.push(("future", sum_sq(g, fut, tf)?));
                let kl = gaussian_kl(g, mean, logvar)?;
                let weighted = g.scale(kl, *kl_weight);
                let mut total = sum_terms(g, &terms)?;
                total = g.add(total, weighted)?;
                terms.push(("kl", kl));
                Ok(LossTerms { total, terms })
            }
            (
                Variant::TLoss,
                TrainingBatch::Triplet {
                    reference,
                    positive,
                    negatives,
                },
            ) => {
                let nb = reference.shape[0];
                let mut inputs = vec![g.input(reference.clone()), g.input(positive.clone())];
                inputs.extend(negatives.iter().map(|n| g.input(n.clone())));
                let all = g.concat(&inputs, 0)?;
                let z = self.encoder_graph(g, params, all)?;
                let zr = g.slice(z, 0, 0, nb)?;
                let zp = g.slice(z, 0, nb, nb)?;
                let k = negatives.len();
                let pos = rowdot(g, zr, zp)?;
                let neg_pos = g.scale(pos, -1.0);
                let lpos = g.softplus(neg_pos);
                let mut per_ref = lpos;
                if k > 0 {
                    let zn = g.slice(z, 0, 2 * nb, k * nb)?;
                    let reps = vec![zr; k];
                    let zr_rep = g.concat(&reps, 0)?;
                    let dn = rowdot(g, zr_rep, zn)?;
                    let ln = g.softplus(dn);
                    let ln = g.reshape(ln, &[k, nb])?;
                    // sum over the K negatives for each reference
                    let mut acc = g.slice(ln, 0, 0, 1)?;
                    for j in 1..k {
                        let s = g.slice(ln, 0, j, 1)?;
                        acc = g.add(acc, s)?;
                    }
                    let acc = g.reshape(acc, &[nb])?;
                    per_ref = g.add(per_ref, acc)?;
                }
                let total = g.mean(per_ref);
                Ok(LossTerms {
                    total,
                    terms: vec![("triplet", total)],
                })
            }
            (
                Variant::Tnc,
                TrainingBatch::Neighborhood {
                    anchor,
                    neighbor,
                    distant,
                },
            ) => {
                let nb = anchor.shape[0];
                let inputs = [
                    g.input(anchor.clone()),
                    g.input(neighbor.clone()),
                    g.input(distant.clone()),
                ];
                let all = g.concat(&inputs, 0)?;
                let z = self.encoder_graph(g, params, all)?;
                let za = g.slice(z, 0, 0, nb)?;
                let zn = g.slice(z, 0, nb, nb)?;
                let zd = g.slice(z, 0, 2 * nb, nb)?;
                let ln = self.discriminator_graph(g, params, za, zn)?;
                let ld = self.discriminator_graph(g, params, za, zd)?;
                // BCE(sigmoid(l), y) = softplus(l) - y * l
                let sn = g.softplus(ln);
                let bn = g.sub(sn, ln)?;
                let neighbor_loss = g.mean(bn);
                let sd = g.softplus(ld);
                let wl = g.scale(ld, self.config().tnc_w_pu);
                let bd = g.sub(sd, wl)?;
                let distant_loss = g.mean(bd);
                let s = g.add(neighbor_loss, distant_loss)?;
                let total = g.scale(s, 0.5);
                Ok(LossTerms {
                    total,
                    terms: vec![("neighbor", neighbor_loss), ("distant", distant_loss)],
                })
            }
            (v, _) => Err(Error::config(format!("batch kind does not match variant {v}"))),
        }
    }

    /// Evaluates the loss and its gradient w.r.t. `params`.
    pub fn loss_and_grad(
        &self,
        params: &ParameterSet,
        batch: &TrainingBatch,
    ) -> Result<(f64, crate::nn::Gradients)> {
        let mut g = Graph::new();
        let terms = self.loss(&mut g, params, batch)?;
        let value = g.value(terms.total).item();
        let grads = g.backward(terms.total, params)?;
        Ok((value, grads))
    }

    /// Loss value only; used by finite-difference checks and evaluation.
    pub fn loss_value(&self, params: &ParameterSet, batch: &TrainingBatch) -> Result<f64> {
        let mut g = Graph::new();
        let terms = self.loss(&mut g, params, batch)?;
        Ok(g.value(terms.total).item())
    }

    /// Named loss components for `batch` under the current parameters.
    pub fn loss_terms(&self, batch: &TrainingBatch) -> Result<Vec<(&'static str, f64)>> {
        let mut g = Graph::new();
        let terms = self.loss(&mut g, &self.params, batch)?;
        Ok(terms.terms.iter().map(|(n, v)| (*n, g.value(*v).item())).collect())
    }
}
