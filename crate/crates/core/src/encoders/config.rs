use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six self-supervised training objectives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "Drive2Vec")]
    Drive2Vec,
    #[serde(rename = "VAME")]
    Vame,
    #[serde(rename = "VAMEstar")]
    VameStar,
    #[serde(rename = "TLoss")]
    TLoss,
    #[serde(rename = "TNC")]
    Tnc,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ae,
        Variant::Drive2Vec,
        Variant::Vame,
        Variant::VameStar,
        Variant::TLoss,
        Variant::Tnc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ae => "AE",
            Variant::Drive2Vec => "Drive2Vec",
            Variant::Vame => "VAME",
            Variant::VameStar => "VAMEstar",
            Variant::TLoss => "TLoss",
            Variant::Tnc => "TNC",
        }
    }

    /// Encoder emits `(mean, logvar)` rather than a point embedding.
    pub fn is_variational(self) -> bool {
        matches!(self, Variant::Vame | Variant::VameStar)
    }

    /// Auxiliary decoder heads trained alongside the encoder.
    pub fn decoders(self) -> &'static [&'static str] {
        match self {
            Variant::Ae => &["current"],
            Variant::Drive2Vec => &["current", "next"],
            Variant::Vame => &["current", "future"],
            Variant::VameStar => &["past", "current", "future"],
            Variant::TLoss | Variant::Tnc => &[],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', '_', '*'], "");
        Ok(match norm.as_str() {
            "ae" => Variant::Ae,
            "drive2vec" => Variant::Drive2Vec,
            "vame" if s.ends_with('*') => Variant::VameStar,
            "vame" => Variant::Vame,
            "vamestar" => Variant::VameStar,
            "tloss" => Variant::TLoss,
            "tnc" => Variant::Tnc,
            _ => return Err(Error::config(format!("unknown encoder variant `{s}`"))),
        })
    }
}

/// Optimization and sampling settings shared by every variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Passes over the training windows (all variants except T-Loss).
    pub epochs: usize,
    /// Optimizer steps for T-Loss.
    pub tloss_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Hop between training windows.
    pub train_step: usize,
    /// Hop between windows at encoding time.
    pub inference_step: usize,
    /// T-Loss reference segment length, in multiples of `w`.
    pub reference_multiplier: usize,
    /// T-Loss negatives per reference.
    pub negatives: usize,
    /// Significance level of the TNC stationarity test.
    pub tnc_alpha: f64,
    /// Largest TNC neighborhood radius, in windows.
    pub tnc_max_radius: usize,
    /// Weight of the positive label for distant TNC samples.
    pub tnc_w_pu: f64,
    /// Fraction of epochs over which the VAME KL weight ramps from 0 to 1.
    pub kl_anneal_fraction: f64,
    /// Hidden width of the convolutional backbone and decoders.
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            tloss_steps: 800,
            learning_rate: 1e-4,
            batch_size: 64,
            train_step: 3,
            inference_step: 1,
            reference_multiplier: 3,
            negatives: 10,
            tnc_alpha: 0.01,
            tnc_max_radius: 5,
            tnc_w_pu: 0.05,
            kl_anneal_fraction: 0.25,
            hidden: 64,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tloss_steps", self.tloss_steps),
            ("batch_size", self.batch_size),
            ("train_step", self.train_step),
            ("inference_step", self.inference_step),
            ("reference_multiplier", self.reference_multiplier),
            ("negatives", self.negatives),
            ("tnc_max_radius", self.tnc_max_radius),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("training config `{name}` must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.tnc_w_pu) {
            return Err(Error::config("tnc_w_pu must lie in [0, 1]"));
        }
        if !(self.tnc_alpha > 0.0 && self.tnc_alpha < 1.0) {
            return Err(Error::config("tnc_alpha must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.kl_anneal_fraction) {
            return Err(Error::config("kl_anneal_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// KL weight at `epoch` (0-based): linear ramp from 0 to 1.
    pub fn kl_weight(&self, epoch: usize) -> f64 {
        let ramp = self.kl_anneal_fraction * self.epochs as f64;
        if ramp <= 0.0 {
            1.0
        } else {
            (epoch as f64 / ramp).min(1.0)
        }
    }
}
