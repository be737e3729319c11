use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rerank::RankedList;

use super::trec::{Qrels, RunFile};

/// A cut-off metric such as `mrr@10` or `ndcg@10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Mrr { k: usize },
    Ndcg { k: usize },
    Recall { k: usize },
    Map { k: usize },
}

impl Metric {
    pub fn k(&self) -> usize {
        match *self {
            Metric::Mrr { k } | Metric::Ndcg { k } | Metric::Recall { k } | Metric::Map { k } => k,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mrr { .. } => "mrr",
            Metric::Ndcg { .. } => "ndcg",
            Metric::Recall { .. } => "recall",
            Metric::Map { .. } => "map",
        }
    }

    /// Score of a single query. `grades` holds that query's judgments.
    pub fn per_query(
        &self,
        list: &RankedList,
        grades: &std::collections::BTreeMap<String, u32>,
        rel_threshold: u32,
    ) -> f64 {
        let k = self.k();
        let grade = |d: &str| grades.get(d).copied().unwrap_or(0);
        let top = list.entries().iter().take(k).map(|e| grade(&e.doc_id));
        let num_rel = grades.values().filter(|&&g| g >= rel_threshold).count();
        match self {
            Metric::Mrr { .. } => top
                .enumerate()
                .find(|(_, g)| *g >= rel_threshold)
                .map_or(0.0, |(i, _)| 1.0 / (i + 1) as f64),
            Metric::Ndcg { .. } => {
                let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
                ideal.sort_unstable_by(|a, b| b.cmp(a));
                let idcg = dcg(ideal.into_iter().take(k));
                if idcg == 0.0 {
                    0.0
                } else {
                    dcg(top) / idcg
                }
            }
            Metric::Recall { .. } => {
                if num_rel == 0 {
                    return 0.0;
                }
                top.filter(|&g| g >= rel_threshold).count() as f64 / num_rel as f64
            }
            Metric::Map { .. } => {
                if num_rel == 0 {
                    return 0.0;
                }
                let mut hits = 0usize;
                let mut sum = 0.0;
                for (i, g) in top.enumerate() {
                    if g >= rel_threshold {
                        hits += 1;
                        sum += hits as f64 / (i + 1) as f64;
                    }
                }
                sum / num_rel as f64
            }
        }
    }
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| g as f64 / ((i + 2) as f64).log2())
        .sum()
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name(), self.k())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::param(format!(
                "unknown metric `{s}` (expected e.g. mrr@10, ndcg@10, recall@100, map@1000)"
            ))
        };
        let (name, k) = s.trim().split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(Error::param(format!("metric cut-off must be at least 1 in `{s}`")));
        }
        match name.to_ascii_lowercase().as_str() {
            "mrr" | "rr" => Ok(Metric::Mrr { k }),
            "ndcg" | "ndcg_cut" => Ok(Metric::Ndcg { k }),
            "recall" | "r" => Ok(Metric::Recall { k }),
            "map" | "map_cut" => Ok(Metric::Map { k }),
            _ => Err(bad()),
        }
    }
}

/// Per-query scores for queries present in both the run and the qrels, in query-id order.
pub fn evaluate_per_query(
    run: &RunFile,
    qrels: &Qrels,
    metric: Metric,
    rel_threshold: u32,
) -> Result<Vec<(String, f64)>> {
    if metric.k() == 0 {
        return Err(Error::param("metric cut-off k must be at least 1"));
    }
    let scores: Vec<(String, f64)> = run
        .lists()
        .filter_map(|list| {
            let grades = qrels.query(list.query_id())?;
            Some((
                list.query_id().to_string(),
                metric.per_query(list, grades, rel_threshold),
            ))
        })
        .collect();
    if scores.is_empty() {
        return Err(Error::NoCommonQueries);
    }
    Ok(scores)
}

/// Mean of [`evaluate_per_query`].
pub fn evaluate(run: &RunFile, qrels: &Qrels, metric: Metric, rel_threshold: u32) -> Result<f64> {
    let per_query = evaluate_per_query(run, qrels, metric, rel_threshold)?;
    Ok(per_query.iter().map(|(_, s)| s).sum::<f64>() / per_query.len() as f64)
}

pub fn mrr_at_k(run: &RunFile, qrels: &Qrels, k: usize, rel_threshold: u32) -> Result<f64> {
    evaluate(run, qrels, Metric::Mrr { k }, rel_threshold)
}

/// Linear gain; grades are used as-is, so there is no relevance threshold.
pub fn ndcg_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<f64> {
    evaluate(run, qrels, Metric::Ndcg { k }, 1)
}

pub fn recall_at_k(run: &RunFile, qrels: &Qrels, k: usize, rel_threshold: u32) -> Result<f64> {
    evaluate(run, qrels, Metric::Recall { k }, rel_threshold)
}

pub fn map_at_k(run: &RunFile, qrels: &Qrels, k: usize, rel_threshold: u32) -> Result<f64> {
    evaluate(run, qrels, Metric::Map { k }, rel_threshold)
}

const KL_SUM_TOLERANCE: f64 = 1e-6;

/// `KL(target ‖ predicted)` in nats. Returns `f64::INFINITY` when `predicted` puts zero mass
/// where `target` does not.
pub fn kl_divergence(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: predicted.len(),
        });
    }
    for (name, v) in [("target", target), ("predicted", predicted)] {
        if v.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Validation(format!("{name} has negative or non-finite entries")));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > KL_SUM_TOLERANCE {
            return Err(Error::Validation(format!("{name} sums to {s}, not 1")));
        }
    }
    let mut kl = 0.0;
    for (&t, &p) in target.iter().zip(predicted) {
        if t == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += t * (t / p).ln();
    }
    Ok(kl.max(0.0))
}
