//! Event embeddings composed by a low-rank neural tensor network and trained
//! jointly with intent (BiLSTM, cosine ranking) and sentiment (softmax)
//! supervision, plus the similarity evaluations used to judge them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which training and gradient checks assume.

pub mod checkpoint;
pub mod composer;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod intent;
pub mod model;
pub mod params;
pub mod scalar;
pub mod sentiment;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Vector = tensor::Vector<f64>;
pub type Matrix = tensor::Matrix<f64>;
pub type LowRankSlice = tensor::LowRankSlice<f64>;
pub type EmbeddingTable = data::EmbeddingTable<f64>;
pub type LowRankCompositionLayer = composer::LowRankCompositionLayer<f64>;
pub type EventComposer = composer::EventComposer<f64>;
pub type LstmCell = intent::LstmCell<f64>;
pub type BiLstmEncoder = intent::BiLstmEncoder<f64>;
pub type SentimentClassifier = sentiment::SentimentClassifier<f64>;
pub type Parameters = model::Parameters<f64>;
pub type Model = model::Model<f64>;
pub type ParameterStore = trainer::ParameterStore<f64>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;
