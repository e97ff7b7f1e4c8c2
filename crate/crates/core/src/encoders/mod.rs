//! Self-supervised window encoders (AE, Drive2Vec, VAME, VAME*, T-Loss, TNC)
//! sharing one dilated causal convolution backbone.

mod config;
mod losses;
mod model;
pub mod stationarity;
mod train;

pub use config::{TrainingConfig, Variant};
pub use losses::{gaussian_kl, LossTerms, TrainingBatch};
pub use model::{EncoderModel, ModelSidecar, DILATIONS, KERNEL};
pub use stationarity::estimate_neighborhood;
pub use train::{
    prediction_pairs, sample_neighborhood_batch, sample_triplet_batch, tnc_anchors, train, train_ae,
    train_drive2vec, train_tloss, train_tnc, train_vame, training_windows, window_triples, Anchor,
    TrainingReport, WindowTriple,
};
