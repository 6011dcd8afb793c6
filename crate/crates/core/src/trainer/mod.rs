//! Contrastive + classification training.

mod head;
mod loss;
mod optim;
mod pairs;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use head::{classification_loss, ClassifierHead, HeadGradients};
pub use loss::{contrastive_loss, contrastive_loss_with, triplet_terms, NegativeAggregation, TripletTerms};
pub use optim::Adam;
pub use pairs::{build_pairs, build_pairs_with, plan_pairs, EncodingKey, GroupPlan, TripletGroup, FIXED_PASS};
pub use train::{
    evaluate_records, loss_and_gradients, predict, predict_sequence, prepare_records, train, EpochRecord,
    Gradients, LossBreakdown, Prediction, PreparedRecord, TrainingOutcome,
};

use crate::encoder::{Checkpoint, EncoderConfig, EncoderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairingStrategy {
    #[serde(rename = "simcl")]
    SimCL,
    #[serde(rename = "simdfe")]
    SimDFE,
    #[serde(rename = "rdrop")]
    RDrop,
}

impl std::str::FromStr for PairingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "simcl" => Ok(Self::SimCL),
            "simdfe" => Ok(Self::SimDFE),
            "rdrop" | "r-drop" => Ok(Self::RDrop),
            other => Err(format!("unknown strategy {other:?} (expected simcl, simdfe or rdrop)")),
        }
    }
}

impl std::fmt::Display for PairingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SimCL => "simcl",
            Self::SimDFE => "simdfe",
            Self::RDrop => "rdrop",
        })
    }
}

/// How the margin objective and the classifier are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every step minimises `CE + λ·contrastive`.
    #[default]
    Joint,
    /// `pretrain_epochs` of contrastive-only training, then CE-only
    /// fine-tuning with early stopping.
    TwoPhase,
}

/// Flat training configuration; serialises to and from a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub learning_rate: f64,
    pub lambda_contrastive: f64,
    pub seed: u64,
    pub strategy: PairingStrategy,
    pub negative_aggregation: NegativeAggregation,
    pub symmetric_pairs: bool,
    pub schedule: Schedule,
    pub pretrain_epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub threshold: f64,
    pub vocab_size: u32,
    pub d_embed: usize,
    pub d: usize,
    pub dropout_rate: f64,
    pub max_sequence_length: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        Self {
            epsilon: 1.0,
            batch_size: 32,
            max_epochs: 20,
            early_stop_patience: 5,
            learning_rate: 1e-3,
            lambda_contrastive: 1.0,
            seed: 0,
            strategy: PairingStrategy::RDrop,
            negative_aggregation: NegativeAggregation::MeanDistance,
            symmetric_pairs: false,
            schedule: Schedule::Joint,
            pretrain_epochs: 5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            threshold: 0.5,
            vocab_size: enc.vocab_size,
            d_embed: enc.d_embed,
            d: enc.d,
            dropout_rate: enc.dropout_rate,
            max_sequence_length: enc.max_sequence_length,
        }
    }
}

impl TrainingConfig {
    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            vocab_size: self.vocab_size,
            d_embed: self.d_embed,
            d: self.d,
            dropout_rate: self.dropout_rate,
            max_sequence_length: self.max_sequence_length,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(self.epsilon > 0.0 && self.epsilon <= 2.0) {
            return bad(format!("epsilon must lie in (0, 2], got {}", self.epsilon));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return bad("batch_size, max_epochs and early_stop_patience must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lambda_contrastive.is_finite() && self.lambda_contrastive >= 0.0) {
            return bad(format!("lambda_contrastive must be non-negative, got {}", self.lambda_contrastive));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_epsilon <= 0.0 {
            return bad("adam betas must lie in [0, 1) and adam_epsilon be positive".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        if self.schedule == Schedule::TwoPhase && self.pretrain_epochs == 0 {
            return bad("two_phase schedule needs pretrain_epochs > 0".into());
        }
        self.encoder()
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("no vulnerable record with a fixed counterpart in the batch")]
    NoEligibleAnchors,
    #[error("invalid triplet group: {0}")]
    InvalidGroup(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("encoder: {0}")]
    Encoder(#[from] EncoderError),
    #[error("loss diverged at epoch {epoch}, step {step}")]
    DivergedLoss {
        epoch: usize,
        step: usize,
        /// Last checkpoint whose parameters and loss were finite.
        last_finite: Box<Checkpoint>,
    },
}
