//! Contrastive function-level vulnerability detection.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: ingest JSON-lines function corpora, profile vulnerable/fixed
//!   edits and build balanced, seeded train/valid/test splits.
//! - [`encoder`]: tokenize source text and embed it with a small trainable
//!   token-embedding + mean-pool + projector network.
//! - [`trainer`]: build SimCL / SimDFE / R-Drop triplets, evaluate the
//!   margin objective jointly with a two-way classifier and train with Adam.
//! - [`eval`]: classification metrics, average precision, MAP and PCA.
//! - [`explain`]: a Q&A knowledge base with embedding retrieval,
//!   quality-first answer ranking and aspect span extraction.
//! - [`synthetic`] and [`experiment`]: seeded toy corpora and the batch-size
//!   sweep harness.

pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod experiment;
pub mod explain;
pub mod seed;
pub mod synthetic;
pub mod trainer;

pub use corpus::{CorpusError, CorpusSplit, EditProfile, FunctionRecord, Label};
pub use encoder::{
    cosine_distance, CodeEmbedder, EmbeddingVector, EncoderConfig, EncoderError, EncoderModel,
    TokenSequence, Tokenizer,
};
pub use eval::{ConfusionMatrix, MetricsReport};
pub use explain::{
    Answer, AspectFlags, CueExtractor, KnowledgeBase, KnowledgePost, RankedExplanation,
};
pub use trainer::{
    ClassifierHead, PairingStrategy, TrainError, TrainingConfig, TrainingOutcome, TripletGroup,
};
