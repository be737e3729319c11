//! Soft training targets from the ranking context of each query.
//!
//! Evidence-based smoothing scores every candidate by its mean mixed similarity to the query's
//! ground-truth documents, normalizes those scores, boosts the ground truth by `b`, drops
//! non-ground-truth candidates ranked past `n_max`, and takes a softmax. Uniform smoothing is
//! provided as the baseline.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use num_traits::{FromPrimitive, Num};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{by_score_then_id, RankingContext};
use crate::embed_store::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{Qrels, RunFile};
use crate::rerank::{RankedList, Skipped};
use crate::rnn::{RnnGraph, RnnParams};

/// Probabilities below this are left out of serialized label files.
pub const MIN_SERIALIZED_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormFn {
    /// `(s - min) / (max - min)`.
    MaxMin,
    /// `(s - min) / σ`, population standard deviation.
    StdBased,
}

impl NormFn {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormFn::MaxMin => "maxmin",
            NormFn::StdBased => "stdbased",
        }
    }
}

impl fmt::Display for NormFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "maxmin" | "max-min" | "max_min" => Ok(NormFn::MaxMin),
            "stdbased" | "std-based" | "std_based" | "std" => Ok(NormFn::StdBased),
            _ => Err(Error::param(format!(
                "unknown normalization `{s}` (expected maxmin or stdbased)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothParams {
    pub rnn: RnnParams,
    /// Leading run entries that form the context.
    pub context_size: usize,
    /// Boost factor for ground-truth documents, at least 1.
    pub b: f64,
    /// Non-ground-truth candidates ranked past this get zero probability.
    pub n_max: usize,
    pub f_n: NormFn,
    /// Append ground-truth documents missing from the retrieved context.
    pub inject_missing_gt: bool,
}

impl Default for SmoothParams {
    /// CODER(TAS-B) label-smoothing configuration.
    fn default() -> Self {
        Self {
            rnn: RnnParams::default(),
            context_size: 60,
            b: 1.222,
            n_max: 4,
            f_n: NormFn::MaxMin,
            inject_missing_gt: true,
        }
    }
}

impl SmoothParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b >= 1.0 && self.b.is_finite()) {
            return Err(Error::param(format!("b = {} must be a finite value >= 1", self.b)));
        }
        if self.n_max == 0 {
            return Err(Error::param("n_max must be at least 1"));
        }
        if self.context_size == 0 {
            return Err(Error::param("context_size must be at least 1"));
        }
        // k and k_exp get clamped per context; only the unit-interval checks apply here
        self.rnn.clamped_to(usize::MAX).validate(usize::MAX)
    }
}

/// A target distribution over one query's context.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelSet {
    pub query_id: String,
    /// Sorted by probability descending, then doc id.
    pub entries: Vec<(String, f64)>,
    /// Sorted doc ids.
    pub gt_ids: Vec<String>,
}

impl SoftLabelSet {
    fn new(query_id: &str, mut entries: Vec<(String, f64)>, gt_ids: Vec<String>) -> Self {
        entries.sort_by(|a, b| by_score_then_id((a.1, &a.0), (b.1, &b.0)));
        Self {
            query_id: query_id.to_string(),
            entries,
            gt_ids,
        }
    }

    pub fn prob(&self, doc_id: &str) -> f64 {
        self.entries.iter().find(|(d, _)| d == doc_id).map_or(0.0, |(_, p)| *p)
    }

    pub fn gt_mass(&self) -> f64 {
        self.gt_ids.iter().map(|g| self.prob(g)).sum()
    }

    pub fn support(&self) -> usize {
        self.entries.iter().filter(|(_, p)| *p > 0.0).count()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }
}

pub fn normalize_scores(scores: &[f64], f_n: NormFn) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::Undefined(format!(
            "cannot normalize {} score(s); need at least 2",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("non-finite score".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = match f_n {
        NormFn::MaxMin => hi - lo,
        NormFn::StdBased => {
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt()
        }
    };
    if hi == lo || scale <= 0.0 {
        log::warn!("normalizing a constant score vector; all scores set to 0");
        return Ok(vec![0.0; scores.len()]);
    }
    Ok(scores.iter().map(|s| (s - lo) / scale).collect())
}

/// Mean mixed similarity of every candidate to the ground-truth documents at the given
/// context positions. Result is indexed like [`RankingContext::candidate_ids`].
pub fn mean_gt_similarity(context: &RankingContext, gt_positions: &[usize], params: &RnnParams) -> Result<Vec<f64>> {
    if gt_positions.is_empty() {
        return Err(Error::param("no ground-truth documents given"));
    }
    if let Some(&p) = gt_positions.iter().find(|&&p| p == 0 || p >= context.len()) {
        return Err(Error::param(format!("ground-truth position {p} is not a candidate")));
    }
    let params = params.clamped_to(context.len());
    let graph = RnnGraph::for_context(context, &params)?;
    let mut acc = vec![0.0; context.num_candidates()];
    for &p in gt_positions {
        for (a, s) in acc.iter_mut().zip(graph.scores(p)?) {
            *a += s;
        }
    }
    let inv = 1.0 / gt_positions.len() as f64;
    Ok(acc.into_iter().map(|a| a * inv).collect())
}

/// Applies normalization, boost and cut-off to scores already sorted descending.
pub fn transform_scores(sorted_scores: &[f64], gt_flags: &[bool], params: &SmoothParams) -> Result<Vec<f64>> {
    if sorted_scores.len() != gt_flags.len() {
        return Err(Error::DimensionMismatch {
            expected: sorted_scores.len(),
            got: gt_flags.len(),
        });
    }
    if sorted_scores.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::param("scores must be sorted in descending order"));
    }
    let normed = normalize_scores(sorted_scores, params.f_n)?;
    Ok(normed
        .into_iter()
        .zip(gt_flags)
        .enumerate()
        .map(|(i, (s, &gt))| {
            if gt {
                params.b * s
            } else if i + 1 > params.n_max {
                f64::NEG_INFINITY
            } else {
                s
            }
        })
        .collect())
}

/// Softmax ignoring `-inf` entries, which map to exactly 0.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::Validation("softmax input contains NaN or +inf".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Undefined("softmax of all -inf entries".into()));
    }
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// `1 - ε` on `gt_index`, `ε / (n - 1)` everywhere else.
pub fn uniform_smooth(n: usize, epsilon: f64, gt_index: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::param(format!("epsilon = {epsilon} outside [0, 1)")));
    }
    uniform_smooth_exact(n, epsilon, &[gt_index])
}

/// Uniform smoothing over any number type, with the `1 - ε` mass split evenly among
/// `gt_indices`. With `Ratio` arithmetic the result sums to one exactly.
pub fn uniform_smooth_exact<T>(n: usize, epsilon: T, gt_indices: &[usize]) -> Result<Vec<T>>
where
    T: Num + FromPrimitive + Clone + PartialOrd,
{
    if n < 2 {
        return Err(Error::param(format!("uniform smoothing needs n >= 2, got {n}")));
    }
    let gts: BTreeSet<usize> = gt_indices.iter().copied().collect();
    if gts.is_empty() || gts.len() != gt_indices.len() || gts.iter().any(|&g| g >= n) {
        return Err(Error::param("ground-truth indices must be distinct and inside 0..n"));
    }
    if epsilon < T::zero() || epsilon >= T::one() {
        return Err(Error::param("epsilon must lie in [0, 1)"));
    }
    let count = |c: usize| T::from_usize(c).ok_or_else(|| Error::param("count not representable"));
    let others = n - gts.len();
    let (gt_p, other_p) = if others == 0 {
        (T::one() / count(gts.len())?, T::zero())
    } else {
        (
            (T::one() - epsilon.clone()) / count(gts.len())?,
            epsilon / count(others)?,
        )
    };
    Ok((0..n)
        .map(|i| {
            if gts.contains(&i) {
                gt_p.clone()
            } else {
                other_p.clone()
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothMode {
    Evidence,
    /// `epsilon: None` matches each query's off-ground-truth mass under evidence-based
    /// smoothing.
    Uniform {
        epsilon: Option<f64>,
    },
}

/// Context for label smoothing: the leading run entries plus, if allowed, absent ground truths.
/// Returns the context and the ground-truth positions within it.
pub fn smoothing_context(
    query_id: &str,
    query_vec: &[f32],
    list: &RankedList,
    docs: &EmbeddingMatrix,
    gt_ids: &[String],
    params: &SmoothParams,
) -> Result<(RankingContext, Vec<usize>)> {
    let mut ids: Vec<&str> = list.doc_ids().take(params.context_size).collect();
    let present: HashSet<&str> = ids.iter().copied().collect();
    let absent: Vec<&str> = gt_ids
        .iter()
        .map(String::as_str)
        .filter(|g| !present.contains(g))
        .collect();
    if !absent.is_empty() {
        if !params.inject_missing_gt {
            return Err(Error::Undefined(format!(
                "ground truth not in the retrieved context: {}",
                absent.join(", ")
            )));
        }
        ids.extend(absent);
    }
    let missing: Vec<String> = ids
        .iter()
        .filter(|d| !docs.contains(d))
        .map(|d| d.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    let ctx = RankingContext::from_vectors(query_id, query_vec, ids.iter().map(|d| (*d, docs.get(d).unwrap())))?;
    let positions = gt_ids
        .iter()
        .map(|g| ctx.position(g).expect("ground truth placed in context"))
        .collect();
    Ok((ctx, positions))
}

/// Evidence-based soft labels for one context.
pub fn evidence_labels(
    context: &RankingContext,
    gt_positions: &[usize],
    params: &SmoothParams,
) -> Result<SoftLabelSet> {
    let cands = context.candidate_ids();
    let gt_ids: Vec<String> = {
        let s: BTreeSet<&String> = gt_positions.iter().map(|&p| &context.element_ids()[p]).collect();
        s.into_iter().cloned().collect()
    };
    if cands.len() == 1 {
        return Ok(SoftLabelSet::new(
            context.query_id(),
            vec![(cands[0].clone(), 1.0)],
            gt_ids,
        ));
    }
    let r2 = mean_gt_similarity(context, gt_positions, &params.rnn)?;
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| by_score_then_id((r2[a], &cands[a]), (r2[b], &cands[b])));
    let sorted: Vec<f64> = order.iter().map(|&i| r2[i]).collect();
    let flags: Vec<bool> = order.iter().map(|&i| gt_positions.contains(&(i + 1))).collect();
    let probs = softmax(&transform_scores(&sorted, &flags, params)?)?;
    let entries = order.iter().zip(probs).map(|(&i, p)| (cands[i].clone(), p)).collect();
    Ok(SoftLabelSet::new(context.query_id(), entries, gt_ids))
}

/// Uniform soft labels over the same candidates as `evidence`, with `ε` either given or matched
/// to the off-ground-truth mass of `evidence`.
pub fn uniform_labels(evidence: &SoftLabelSet, epsilon: Option<f64>) -> Result<SoftLabelSet> {
    let n = evidence.entries.len();
    if n == 1 {
        return Ok(evidence.clone());
    }
    let eps = match epsilon {
        Some(e) => e,
        None => (1.0 - evidence.gt_mass()).clamp(0.0, 1.0 - f64::EPSILON),
    };
    let gt_idx: Vec<usize> = evidence
        .entries
        .iter()
        .enumerate()
        .filter(|(_, (d, _))| evidence.gt_ids.contains(d))
        .map(|(i, _)| i)
        .collect();
    let probs = uniform_smooth_exact(n, eps, &gt_idx)?;
    let entries = evidence
        .entries
        .iter()
        .zip(probs)
        .map(|((d, _), p)| (d.clone(), p))
        .collect();
    Ok(SoftLabelSet::new(&evidence.query_id, entries, evidence.gt_ids.clone()))
}

#[derive(Debug, Clone)]
pub struct SmoothOutcome {
    /// In query-id order.
    pub labels: Vec<SoftLabelSet>,
    pub skipped: Vec<Skipped>,
}

#[allow(clippy::too_many_arguments)]
fn smooth_one(
    list: &RankedList,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    params: &SmoothParams,
    mode: SmoothMode,
    rel_threshold: u32,
) -> Result<SoftLabelSet> {
    let qid = list.query_id();
    let gt_ids: Vec<String> = qrels
        .relevant(qid, rel_threshold)
        .into_iter()
        .map(str::to_string)
        .collect();
    if gt_ids.is_empty() {
        return Err(Error::Undefined(format!("query `{qid}` has no relevant documents")));
    }
    let qvec = queries
        .get(qid)
        .ok_or_else(|| Error::MissingIds(vec![qid.to_string()]))?;
    let (ctx, positions) = smoothing_context(qid, qvec, list, docs, &gt_ids, params)?;
    let eb = evidence_labels(&ctx, &positions, params)?;
    match mode {
        SmoothMode::Evidence => Ok(eb),
        SmoothMode::Uniform { epsilon } => uniform_labels(&eb, epsilon),
    }
}

/// Soft labels for every query of `run`, computed in parallel on the current rayon pool.
///
/// Queries without relevant documents or with unresolvable embeddings are skipped and reported,
/// or abort the whole call when `strict`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_dataset(
    run: &RunFile,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    params: &SmoothParams,
    mode: SmoothMode,
    rel_threshold: u32,
    strict: bool,
) -> Result<SmoothOutcome> {
    params.validate()?;
    if let SmoothMode::Uniform { epsilon: Some(e) } = mode {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::param(format!("epsilon = {e} outside [0, 1)")));
        }
    }
    let lists: Vec<&RankedList> = run.lists().collect();
    let results: Vec<Result<SoftLabelSet>> = lists
        .par_iter()
        .map(|l| smooth_one(l, queries, docs, qrels, params, mode, rel_threshold))
        .collect();
    let mut labels = Vec::with_capacity(lists.len());
    let mut skipped = Vec::new();
    for (list, res) in lists.into_iter().zip(results) {
        match res {
            Ok(s) => labels.push(s),
            Err(e @ (Error::MissingIds(_) | Error::DimensionMismatch { .. } | Error::Undefined(_))) => {
                if strict {
                    return Err(e);
                }
                log::warn!("query `{}` skipped: {e}", list.query_id());
                skipped.push(Skipped {
                    query_id: list.query_id().to_string(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SmoothOutcome { labels, skipped })
}

#[derive(Serialize, Deserialize)]
struct Record {
    qid: String,
    gt: Vec<String>,
    labels: Vec<(String, f64)>,
}

/// JSON Lines, one object per query; an optional `# <header>` line comes first.
pub fn to_jsonl(labels: &[SoftLabelSet], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    for s in labels {
        let rec = Record {
            qid: s.query_id.clone(),
            gt: s.gt_ids.clone(),
            labels: s
                .entries
                .iter()
                .filter(|(_, p)| *p >= MIN_SERIALIZED_PROB)
                .cloned()
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("label record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<SoftLabelSet>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let r: Record = serde_json::from_str(l).map_err(|e| Error::Line {
                line: i + 1,
                message: e.to_string(),
            })?;
            Ok(SoftLabelSet {
                query_id: r.qid,
                entries: r.labels,
                gt_ids: r.gt,
            })
        })
        .collect()
}
