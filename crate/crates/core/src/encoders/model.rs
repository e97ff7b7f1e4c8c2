use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Graph, ParameterSet, Tensor, Var};
use crate::representation::Representation;
use crate::timeseries::{window_at, MultivariateTimeSeries, Window};

use super::config::{TrainingConfig, Variant};

pub const KERNEL: usize = 3;
pub const DILATIONS: [usize; 3] = [1, 2, 4];
const ENCODE_CHUNK: usize = 512;

/// A window encoder `f: R^{d×w} -> R^e` plus its training-time heads.
///
/// Backbone: causal conv (dilation 1) → residual causal conv (dilation 2)
/// → residual causal conv (dilation 4) read out at the last timestep → dense
/// to `e` (or `2e` for the variational variants: mean then log-variance).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    variant: Variant,
    dim: usize,
    width: usize,
    embed: usize,
    config: TrainingConfig,
    pub(crate) params: ParameterSet,
    frozen: bool,
    pub(crate) final_loss: Option<f64>,
}

/// JSON sidecar written next to the parameter checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub variant: Variant,
    pub d: usize,
    pub w: usize,
    pub e: usize,
    pub frozen: bool,
    pub training: TrainingConfig,
    pub final_loss: Option<f64>,
}

impl EncoderModel {
    pub fn new(variant: Variant, dim: usize, width: usize, embed: usize, config: TrainingConfig) -> Result<Self> {
        if dim == 0 || embed == 0 {
            return Err(Error::config("encoder needs d >= 1 and e >= 1"));
        }
        if width < 2 {
            return Err(Error::config(format!("window width must be >= 2, got {width}")));
        }
        config.validate()?;
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParameterSet::new();
        let out = if variant.is_variational() { 2 * embed } else { embed };
        p.insert_uniform("enc.conv1.w", &[KERNEL, dim, h], KERNEL * dim, &mut rng)?;
        p.insert_uniform("enc.conv1.b", &[h], KERNEL * dim, &mut rng)?;
        p.insert_uniform("enc.conv2.w", &[KERNEL, h, h], KERNEL * h, &mut rng)?;
        p.insert_uniform("enc.conv2.b", &[h], KERNEL * h, &mut rng)?;
        p.insert_uniform("enc.conv3.w", &[KERNEL * h, h], KERNEL * h, &mut rng)?;
        p.insert_uniform("enc.conv3.b", &[h], KERNEL * h, &mut rng)?;
        p.insert_uniform("enc.out.w", &[h, out], h, &mut rng)?;
        p.insert_uniform("enc.out.b", &[out], h, &mut rng)?;
        for head in variant.decoders() {
            p.insert_uniform(format!("dec.{head}.1.w"), &[embed, h], embed, &mut rng)?;
            p.insert_uniform(format!("dec.{head}.1.b"), &[h], embed, &mut rng)?;
            p.insert_uniform(format!("dec.{head}.2.w"), &[h, width * dim], h, &mut rng)?;
            p.insert_uniform(format!("dec.{head}.2.b"), &[width * dim], h, &mut rng)?;
        }
        if variant == Variant::Tnc {
            p.insert_uniform("disc.1.w", &[2 * embed, 4 * embed], 2 * embed, &mut rng)?;
            p.insert_uniform("disc.1.b", &[4 * embed], 2 * embed, &mut rng)?;
            p.insert_uniform("disc.2.w", &[4 * embed, 1], 4 * embed, &mut rng)?;
            p.insert_uniform("disc.2.b", &[1], 4 * embed, &mut rng)?;
        }
        Ok(Self {
            variant,
            dim,
            width,
            embed,
            config,
            params: p,
            frozen: false,
            final_loss: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn embed(&self) -> usize {
        self.embed
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.final_loss
    }

    /// Drops decoders and discriminator; only the encoder remains.
    pub fn freeze(&mut self) {
        self.params.retain(|n| n.starts_with("enc."));
        self.frozen = true;
    }

    fn p(&self, g: &mut Graph, params: &ParameterSet, name: &str) -> Result<Var> {
        let i = params
            .index(name)
            .ok_or_else(|| Error::config(format!("parameter `{name}` missing from model")))?;
        Ok(g.param(params, i))
    }

    /// Packs windows into a `[batch, w, d]` time-major tensor.
    pub fn batch_tensor(&self, windows: &[&Window]) -> Result<Tensor> {
        let stride = self.width * self.dim;
        let mut data = vec![0.0; windows.len() * stride];
        for (w, out) in windows.iter().zip(data.chunks_mut(stride)) {
            if w.dim != self.dim || w.width != self.width {
                return Err(Error::Shape {
                    op: "encode window",
                    left: vec![self.dim, self.width],
                    right: vec![w.dim, w.width],
                });
            }
            w.write_time_major(out);
        }
        Tensor::new(vec![windows.len(), self.width, self.dim], data)
    }

    /// Flattened `[batch, w·d]` targets for the decoders.
    pub fn target_tensor(&self, windows: &[&Window]) -> Result<Tensor> {
        let mut t = self.batch_tensor(windows)?;
        t.shape = vec![windows.len(), self.width * self.dim];
        Ok(t)
    }

    /// Backbone output `[batch, e]` (or `[batch, 2e]` when variational).
    pub fn encoder_graph(&self, g: &mut Graph, params: &ParameterSet, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[1] != self.width || s[2] != self.dim {
            return Err(Error::Shape {
                op: "encoder input",
                left: vec![0, self.width, self.dim],
                right: s,
            });
        }
        let (nb, nt) = (s[0], s[1]);
        let h = self.config.hidden;
        let w1 = self.p(g, params, "enc.conv1.w")?;
        let b1 = self.p(g, params, "enc.conv1.b")?;
        let c1 = g.conv1d_causal(x, w1, b1, DILATIONS[0])?;
        let h1 = g.relu(c1);

        let w2 = self.p(g, params, "enc.conv2.w")?;
        let b2 = self.p(g, params, "enc.conv2.b")?;
        let c2 = g.conv1d_causal(h1, w2, b2, DILATIONS[1])?;
        let r2 = g.relu(c2);
        let h2 = g.add(h1, r2)?;

        // last block is only needed at the final timestep
        let mut taps = Vec::with_capacity(KERNEL);
        let mut zero = None;
        for k in 0..KERNEL {
            let back = (KERNEL - 1 - k) * DILATIONS[2];
            let tap = if back < nt {
                let s = g.slice(h2, 1, nt - 1 - back, 1)?;
                g.reshape(s, &[nb, h])?
            } else {
                *zero.get_or_insert_with(|| g.input(Tensor::zeros(&[nb, h])))
            };
            taps.push(tap);
        }
        let gathered = g.concat(&taps, 1)?;
        let w3 = self.p(g, params, "enc.conv3.w")?;
        let b3 = self.p(g, params, "enc.conv3.b")?;
        let c3 = g.dense(gathered, w3, b3)?;
        let r3 = g.relu(c3);
        let last = taps[KERNEL - 1];
        let h3 = g.add(last, r3)?;

        let wo = self.p(g, params, "enc.out.w")?;
        let bo = self.p(g, params, "enc.out.b")?;
        g.dense(h3, wo, bo)
    }

    /// Decoder head `head` applied to `z: [batch, e]`, giving `[batch, w·d]`.
    pub fn decoder_graph(&self, g: &mut Graph, params: &ParameterSet, head: &str, z: Var) -> Result<Var> {
        let w1 = self.p(g, params, &format!("dec.{head}.1.w"))?;
        let b1 = self.p(g, params, &format!("dec.{head}.1.b"))?;
        let w2 = self.p(g, params, &format!("dec.{head}.2.w"))?;
        let b2 = self.p(g, params, &format!("dec.{head}.2.b"))?;
        let a = g.dense(z, w1, b1)?;
        let a = g.relu(a);
        g.dense(a, w2, b2)
    }

    /// TNC discriminator logits `[batch]` for embedding pairs.
    pub fn discriminator_graph(&self, g: &mut Graph, params: &ParameterSet, z1: Var, z2: Var) -> Result<Var> {
        let nb = g.shape(z1)[0];
        let x = g.concat(&[z1, z2], 1)?;
        let w1 = self.p(g, params, "disc.1.w")?;
        let b1 = self.p(g, params, "disc.1.b")?;
        let w2 = self.p(g, params, "disc.2.w")?;
        let b2 = self.p(g, params, "disc.2.b")?;
        let a = g.dense(x, w1, b1)?;
        let a = g.relu(a);
        let l = g.dense(a, w2, b2)?;
        g.reshape(l, &[nb])
    }

    /// Embeds windows; returns `batch × e` row-major values. Variational
    /// variants return the posterior mean.
    pub fn encode_batch(&self, windows: &[&Window]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(windows.len() * self.embed);
        for chunk in windows.chunks(ENCODE_CHUNK) {
            let mut g = Graph::new();
            let x = g.input(self.batch_tensor(chunk)?);
            let y = self.encoder_graph(&mut g, &self.params, x)?;
            let v = g.value(y);
            let cols = v.shape[1];
            for row in v.data.chunks(cols) {
                out.extend_from_slice(&row[..self.embed]);
            }
        }
        Ok(out)
    }

    pub fn encode(&self, window: &Window) -> Result<Vec<f64>> {
        self.encode_batch(&[window])
    }

    /// Encodes every window (hop 1) of `series`; row `i` is the embedding of
    /// the window ending at timestep `w - 1 + i`.
    pub fn encode_series(&self, series: &MultivariateTimeSeries, session: &str) -> Result<Representation> {
        if series.dim() != self.dim {
            return Err(Error::data(format!(
                "model expects {} channels, series `{session}` has {}",
                self.dim,
                series.dim()
            )));
        }
        if series.len() < self.width {
            return Err(Error::data(format!(
                "series `{session}` has {} steps, shorter than window width {}",
                series.len(),
                self.width
            )));
        }
        let windows = (self.width - 1..series.len())
            .map(|end| window_at(series, end, self.width))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Window> = windows.iter().collect();
        let values = self.encode_batch(&refs)?;
        Representation::new(session, self.width - 1, self.embed, values)
    }

    pub fn sidecar(&self) -> ModelSidecar {
        ModelSidecar {
            variant: self.variant,
            d: self.dim,
            w: self.width,
            e: self.embed,
            frozen: self.frozen,
            training: self.config.clone(),
            final_loss: self.final_loss,
        }
    }

    /// Writes `<stem>.ckpt.json` (parameters) and `<stem>.json` (sidecar).
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str, step: u64) -> Result<()> {
        let dir = dir.as_ref();
        Checkpoint::from_params(&self.params, self.config.seed, step).save(dir.join(format!("{stem}.ckpt.json")))?;
        let side = serde_json::to_string_pretty(&self.sidecar())?;
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, side).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let side: ModelSidecar = serde_json::from_str(&text)?;
        let ck = Checkpoint::load(dir.join(format!("{stem}.ckpt.json")))?;
        let mut model = Self::new(side.variant, side.d, side.w, side.e, side.training)?;
        if side.frozen {
            model.freeze();
        }
        let loaded = ck.to_params()?;
        for (name, t) in model.params.clone().iter() {
            let got = loaded
                .by_name(name)
                .ok_or_else(|| Error::data(format!("checkpoint lacks parameter `{name}`")))?;
            if got.shape != t.shape {
                return Err(Error::Shape {
                    op: "checkpoint load",
                    left: t.shape.clone(),
                    right: got.shape.clone(),
                });
            }
        }
        model.params = loaded;
        model.final_loss = side.final_loss;
        Ok(model)
    }
}
