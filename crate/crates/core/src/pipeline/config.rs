use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::ClusteringConfig;
use crate::encoders::{TrainingConfig, Variant};
use crate::error::{Error, Result};
use crate::synthgen::DRIVELIKE5;

/// Where sessions come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Generated sessions of a named benchmark (or a benchmark JSON path).
    Synth {
        benchmark: String,
        train_sessions: usize,
        eval_sessions: usize,
        length_s: f64,
    },
    /// CSV files; evaluation files are encoded and clustered with the rest.
    Files {
        train: Vec<PathBuf>,
        #[serde(default)]
        eval: Vec<PathBuf>,
        sample_rate_hz: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    /// Statistics pooled over the training sessions, applied to every session.
    Collection,
    /// Each session normalized with its own statistics.
    Session,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_hz: Option<f64>,
    pub normalization: NormScope,
    pub channels: Option<Vec<String>>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_hz: None,
            normalization: NormScope::Collection,
            channels: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub variant: Variant,
    pub w: usize,
    pub e: usize,
    pub training: TrainingConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            variant: Variant::Ae,
            w: 10,
            e: 10,
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub enabled: bool,
    pub probe: bool,
    /// Segments at most this long are left out of summaries.
    pub min_segment_s: f64,
    pub export_embeddings: bool,
    pub summaries: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            enabled: true,
            probe: true,
            min_segment_s: 3.0,
            export_embeddings: true,
            summaries: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub preprocess: PreprocessConfig,
    pub encoder: EncoderConfig,
    pub clustering: ClusteringConfig,
    pub evaluation: EvaluationConfig,
    pub output: PathBuf,
    /// Drives data generation, encoder training and clustering.
    pub seed: u64,
    /// Worker threads for sweeps.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: DataSource::Synth {
                benchmark: DRIVELIKE5.into(),
                train_sessions: 3,
                eval_sessions: 1,
                length_s: 600.0,
            },
            preprocess: PreprocessConfig::default(),
            encoder: EncoderConfig::default(),
            clustering: ClusteringConfig::default(),
            evaluation: EvaluationConfig::default(),
            output: PathBuf::from("out"),
            seed: 42,
            threads: 1,
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub w: Option<usize>,
    pub e: Option<usize>,
    pub variant: Option<Variant>,
    pub k: Option<usize>,
    pub algorithm: Option<crate::clustering::Algorithm>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(w) = o.w {
            self.encoder.w = w;
        }
        if let Some(e) = o.e {
            self.encoder.e = e;
        }
        if let Some(v) = o.variant {
            self.encoder.variant = v;
        }
        if let Some(k) = o.k {
            self.clustering.k = k;
        }
        if let Some(a) = o.algorithm {
            self.clustering.algorithm = a;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.output {
            self.output = p.clone();
        }
    }

    /// Copy with the global seed pushed into every component.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.encoder.training.seed = c.seed;
        c.clustering.seed = c.seed;
        c.clustering.ticc.seed = c.seed;
        c.clustering.ticc.k = c.clustering.k;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.w < 2 || self.encoder.e == 0 {
            return Err(Error::config("encoder needs w >= 2 and e >= 1"));
        }
        if self.clustering.k < 2 {
            return Err(Error::config("clustering needs k >= 2"));
        }
        self.encoder.training.validate()?;
        self.clustering.ticc.validate()?;
        match &self.data {
            DataSource::Synth {
                train_sessions,
                length_s,
                ..
            } => {
                if *train_sessions == 0 || !(*length_s > 0.0) {
                    return Err(Error::config("synthetic data needs at least one training session of positive length"));
                }
            }
            DataSource::Files { train, sample_rate_hz, .. } => {
                if train.is_empty() || !(*sample_rate_hz > 0.0) {
                    return Err(Error::config("file data needs training files and a positive sample rate"));
                }
            }
        }
        if let Some(hz) = self.preprocess.target_hz {
            if !(hz > 0.0) {
                return Err(Error::config("target rate must be positive"));
            }
        }
        if self.threads == 0 {
            return Err(Error::config("threads must be >= 1"));
        }
        if !(self.evaluation.min_segment_s >= 0.0) {
            return Err(Error::config("minimum segment duration must be >= 0"));
        }
        Ok(())
    }
}
