//! Binary sentiment classification over two families of document embeddings:
//! TF-IDF bag-of-words vectors and fixed-size poolings of per-token
//! transformer outputs.
//!
//! The pipeline is `corpus` → (`tfidf` | `encoder` + `pooling`) →
//! `linear_model` → `eval`, with `experiment` wiring the stages together
//! from a config file.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linear_model;
pub mod pooling;
pub mod tfidf;

pub use corpus::{Document, DatasetStats, LabeledDataset};
pub use encoder::{EmbeddingStore, Precision, TokenEmbeddingMatrix};
pub use error::{Error, Result};
pub use eval::{CrossMatrix, EvalReport, RankingTable};
pub use linear_model::{LinearHead, TrainConfig};
pub use pooling::{AggregationStrategy, DocumentEmbedding};
pub use tfidf::{SparseVector, Vocabulary};
