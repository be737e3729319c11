//! Reciprocal nearest-neighbor reranking and evidence-based label smoothing for dense
//! retrieval.
//!
//! The pipeline for one query:
//!
//! 1. [`context`] builds a ranking context (the query followed by its top candidates) and the
//!    full pairwise inner-product matrix.
//! 2. [`rnn`] derives reciprocal neighbor sets, connectivity vectors and the mixed
//!    geometric / Jaccard similarity.
//! 3. [`rerank`] reorders candidates by that similarity to the query, while [`smooth`] scores
//!    them against the ground-truth documents to produce soft training targets.
//! 4. [`eval`] reads and writes TREC files and computes ranking metrics.

pub mod context;
pub mod embed_store;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod rerank;
pub mod rnn;
pub mod smooth;
pub mod synth;

pub use context::{context_from_run, inner_product, top_n_context, RankingContext, SimMatrix};
pub use embed_store::{EmbeddingFormat, EmbeddingMatrix};
pub use error::{Error, Result};
pub use eval::{evaluate, Metric, Qrels, RunFile};
pub use rerank::{rerank_context, rerank_run, RankedEntry, RankedList, RerankConfig};
pub use rnn::{NeighborOrder, RnnGraph, RnnParams, WeightFn};
pub use smooth::{smooth_dataset, NormFn, SmoothMode, SmoothParams, SoftLabelSet};
