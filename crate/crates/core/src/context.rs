//! Per-query ranking contexts: the query plus its nearest candidates and all pairwise inner
//! products among them.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::embed_store::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rerank::RankedList;

/// Accumulates in `f64`; inputs are the stored `f32` components.
pub fn inner_product(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(dot(a, b))
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Orders `(score, id)` pairs by score descending, then id ascending.
pub(crate) fn by_score_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Dense symmetric square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimMatrix {
    /// Gram matrix of `vectors` (all of equal length).
    pub fn gram(vectors: &[&[f32]]) -> Self {
        let n = vectors.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s = dot(vectors[i], vectors[j]);
                data[i * n + j] = s;
                data[j * n + i] = s;
            }
        }
        Self { n, data }
    }

    /// Build from explicit rows; rejects non-square or asymmetric input.
    #[allow(clippy::needless_range_loop)]
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("similarity matrix is not square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Validation(format!(
                        "similarity matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// A query and its candidates. Position 0 is always the query; positions `1..=N` hold the
/// candidates in descending geometric score with ties broken by id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingContext {
    query_id: String,
    element_ids: Vec<String>,
    geo_scores: Vec<f64>,
    sim: SimMatrix,
}

impl RankingContext {
    pub fn from_vectors<'a, I>(query_id: &str, query_vec: &[f32], candidates: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f32])>,
    {
        let mut seen = HashSet::new();
        let mut scored = Vec::new();
        for (id, v) in candidates {
            let s = inner_product(query_vec, v)?;
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.to_string()));
            }
            scored.push((s, id, v));
        }
        scored.sort_by(|a, b| by_score_then_id((a.0, a.1), (b.0, b.1)));

        let mut element_ids = Vec::with_capacity(scored.len() + 1);
        let mut vectors: Vec<&[f32]> = Vec::with_capacity(scored.len() + 1);
        element_ids.push(query_id.to_string());
        vectors.push(query_vec);
        for &(_, id, v) in &scored {
            element_ids.push(id.to_string());
            vectors.push(v);
        }
        let sim = SimMatrix::gram(&vectors);
        let geo_scores = sim.row(0).to_vec();
        Ok(Self {
            query_id: query_id.to_string(),
            element_ids,
            geo_scores,
            sim,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    /// Number of context elements including the query (`N + 1`).
    pub fn len(&self) -> usize {
        self.element_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_ids.is_empty()
    }

    pub fn num_candidates(&self) -> usize {
        self.element_ids.len() - 1
    }

    pub fn element_ids(&self) -> &[String] {
        &self.element_ids
    }

    /// Candidate ids in geometric order (positions `1..=N`).
    pub fn candidate_ids(&self) -> &[String] {
        &self.element_ids[1..]
    }

    pub fn geo_scores(&self) -> &[f64] {
        &self.geo_scores
    }

    pub fn sim_matrix(&self) -> &SimMatrix {
        &self.sim
    }

    /// Context position of a candidate id (never returns 0, the query slot).
    pub fn position(&self, id: &str) -> Option<usize> {
        self.element_ids[1..].iter().position(|e| e == id).map(|p| p + 1)
    }
}

/// Exact top-`n` retrieval by inner product over `pool`.
pub fn top_n_context(query_id: &str, query_vec: &[f32], pool: &EmbeddingMatrix, n: usize) -> Result<RankingContext> {
    if n == 0 {
        return Err(Error::param("context size must be at least 1"));
    }
    if pool.is_empty() {
        return Err(Error::param("empty candidate pool"));
    }
    if query_vec.len() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            got: query_vec.len(),
        });
    }
    let mut scored: Vec<(f64, usize)> = (0..pool.len()).map(|i| (dot(query_vec, pool.vector(i)), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| by_score_then_id((a.0, pool.id(a.1)), (b.0, pool.id(b.1)));
    if n < scored.len() {
        scored.select_nth_unstable_by(n - 1, cmp);
        scored.truncate(n);
    }
    RankingContext::from_vectors(
        query_id,
        query_vec,
        scored.iter().map(|&(_, i)| (pool.id(i), pool.vector(i))),
    )
}

/// Context from the first `n` entries of an existing ranking, with scores recomputed as inner
/// products and re-sorted.
pub fn context_from_run(
    query_id: &str,
    query_vec: &[f32],
    run: &RankedList,
    docs: &EmbeddingMatrix,
    n: usize,
) -> Result<RankingContext> {
    if n == 0 {
        return Err(Error::param("context size must be at least 1"));
    }
    let head = &run.entries()[..n.min(run.len())];
    let missing: Vec<String> = head
        .iter()
        .filter(|e| !docs.contains(&e.doc_id))
        .map(|e| e.doc_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    RankingContext::from_vectors(
        query_id,
        query_vec,
        head.iter().map(|e| (e.doc_id.as_str(), docs.get(&e.doc_id).unwrap())),
    )
}
