//! Retrieval evaluation: TREC file formats and ranking metrics.

mod metrics;
mod trec;

pub use metrics::{evaluate, evaluate_per_query, kl_divergence, map_at_k, mrr_at_k, ndcg_at_k, recall_at_k, Metric};
pub use trec::{Qrels, RunFile};
