//! Reranking candidate lists with the mixed rNN similarity, context-size sweeps and a latency
//! harness.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rayon::prelude::*;

use crate::context::{by_score_then_id, context_from_run, RankingContext};
use crate::embed_store::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metric, Qrels, RunFile};
use crate::rnn::{RnnGraph, RnnParams};
use crate::synth;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// One query's ranking: scores non-increasing, ranks `1..=len`, doc ids unique.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    query_id: String,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Sorts by score descending (ties by doc id) and assigns ranks.
    pub fn from_scored(query_id: impl Into<String>, mut scored: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(scored.len());
        for (id, s) in &scored {
            if !s.is_finite() {
                return Err(Error::Validation(format!("non-finite score for `{id}`")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        scored.sort_by(|a, b| by_score_then_id((a.1, &a.0), (b.1, &b.0)));
        let entries = scored
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RankedEntry {
                doc_id,
                score,
                rank: i + 1,
            })
            .collect();
        Ok(Self {
            query_id: query_id.into(),
            entries,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.entries.truncate(k);
        self
    }
}

/// Candidates of `context` ordered by mixed similarity to the query, cut to `top_k`.
///
/// `k` and `k_exp` are capped at the context size, so small contexts never fail validation.
pub fn rerank_context(context: &RankingContext, params: &RnnParams, top_k: usize) -> Result<RankedList> {
    if top_k > context.num_candidates() {
        return Err(Error::param(format!(
            "top_k = {top_k} exceeds the {} candidates in the context",
            context.num_candidates()
        )));
    }
    let params = params.clamped_to(context.len());
    let scores = RnnGraph::for_context(context, &params)?.scores(0)?;
    let scored = context.candidate_ids().iter().cloned().zip(scores).collect();
    Ok(RankedList::from_scored(context.query_id(), scored)?.truncated(top_k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankConfig {
    pub rnn: RnnParams,
    /// N_r: how many leading run candidates form the context.
    pub context_size: usize,
    /// Output depth; `None` keeps the whole context.
    pub top_k: Option<usize>,
    /// Fail on unresolvable queries instead of copying their input ranking through.
    pub strict: bool,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            rnn: RnnParams::default(),
            context_size: 60,
            top_k: None,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub query_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RerankOutcome {
    pub run: RunFile,
    pub skipped: Vec<Skipped>,
}

fn rerank_one(
    list: &RankedList,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    cfg: &RerankConfig,
) -> Result<RankedList> {
    let qid = list.query_id();
    let qvec = queries
        .get(qid)
        .ok_or_else(|| Error::MissingIds(vec![qid.to_string()]))?;
    let ctx = context_from_run(qid, qvec, list, docs, cfg.context_size)?;
    let depth = cfg.top_k.unwrap_or(usize::MAX).min(ctx.num_candidates());
    rerank_context(&ctx, &cfg.rnn, depth)
}

/// Reranks every query of `run` independently (in parallel on the current rayon pool).
///
/// Output is ordered by query id and does not depend on the number of worker threads.
pub fn rerank_run(
    run: &RunFile,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    cfg: &RerankConfig,
) -> Result<RerankOutcome> {
    if cfg.context_size == 0 {
        return Err(Error::param("context_size must be at least 1"));
    }
    let lists: Vec<&RankedList> = run.lists().collect();
    let results: Vec<Result<RankedList>> = lists
        .par_iter()
        .map(|list| rerank_one(list, queries, docs, cfg))
        .collect();

    let mut out = RunFile::new();
    let mut skipped = Vec::new();
    for (list, res) in lists.into_iter().zip(results) {
        match res {
            Ok(r) => out.insert(r)?,
            Err(e @ (Error::MissingIds(_) | Error::DimensionMismatch { .. })) => {
                if cfg.strict {
                    return Err(e);
                }
                log::warn!("query `{}` copied through unchanged: {e}", list.query_id());
                skipped.push(Skipped {
                    query_id: list.query_id().to_string(),
                    reason: e.to_string(),
                });
                let depth = cfg.top_k.unwrap_or(cfg.context_size).min(cfg.context_size);
                out.insert(list.clone().truncated(depth))?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RerankOutcome { run: out, skipped })
}

/// One metric value per context size, each from a full rerank at that size.
#[allow(clippy::too_many_arguments)]
pub fn sweep_context_size(
    run: &RunFile,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    cfg: &RerankConfig,
    sizes: &[usize],
    metric: Metric,
    rel_threshold: u32,
) -> Result<Vec<(usize, f64)>> {
    if sizes.is_empty() {
        return Err(Error::param("no context sizes given"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::param("context sizes must be positive and strictly ascending"));
    }
    sizes
        .iter()
        .map(|&n| {
            let c = RerankConfig {
                context_size: n,
                top_k: None,
                ..*cfg
            };
            let out = rerank_run(run, queries, docs, &c)?;
            Ok((n, evaluate(&out.run, qrels, metric, rel_threshold)?))
        })
        .collect()
}

pub fn sweep_csv(rows: &[(usize, f64)], metric: Metric) -> String {
    let mut s = format!("n,{metric}\n");
    for (n, v) in rows {
        writeln!(s, "{n},{v}").unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyRow {
    pub n: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Times `rerank_context` on synthetic unit-vector contexts of each size.
///
/// Only the reranking is on the clock; context construction happens beforehand. Runs on the
/// calling thread.
pub fn bench_latency(
    sizes: &[usize],
    trials: usize,
    params: &RnnParams,
    dim: usize,
    seed: u64,
) -> Result<Vec<LatencyRow>> {
    if trials < 3 {
        return Err(Error::param("bench needs at least 3 trials"));
    }
    if sizes.contains(&0) {
        return Err(Error::param("context sizes must be positive"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let contexts: Vec<RankingContext> = (0..trials)
            .map(|_| synth::random_context(&mut rng, n, dim))
            .collect::<Result<_>>()?;
        // warm-up
        std::hint::black_box(rerank_context(&contexts[0], params, n)?);
        let mut ms: Vec<f64> = Vec::with_capacity(trials);
        for ctx in &contexts {
            let t = Instant::now();
            let out = rerank_context(ctx, params, n)?;
            ms.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(out);
        }
        ms.sort_by(f64::total_cmp);
        let mean_ms = ms.iter().sum::<f64>() / ms.len() as f64;
        let p95_idx = ((0.95 * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1;
        rows.push(LatencyRow {
            n,
            mean_ms,
            p95_ms: ms[p95_idx],
        });
    }
    Ok(rows)
}

pub fn latency_csv(rows: &[LatencyRow]) -> String {
    let mut s = String::from("n,mean_ms,p95_ms\n");
    for r in rows {
        writeln!(s, "{},{:.6},{:.6}", r.n, r.mean_ms, r.p95_ms).unwrap();
    }
    s
}
