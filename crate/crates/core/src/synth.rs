//! Seeded synthetic data: random unit-vector contexts and planted-cluster retrieval corpora.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::context::{inner_product, RankingContext};
use crate::embed_store::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{Qrels, RunFile};
use crate::rerank::RankedList;

/// A point drawn uniformly from the unit sphere in `dim` dimensions.
pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

fn perturbed(rng: &mut impl Rng, center: &[f32], noise: f64) -> Vec<f32> {
    let v: Vec<f64> = center
        .iter()
        .map(|&c| c as f64 + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

/// A query with `n` uniformly random unit-vector candidates named `d0, d1, ...`.
pub fn random_context(rng: &mut impl Rng, n: usize, dim: usize) -> Result<RankingContext> {
    if dim == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    let q = random_unit(rng, dim);
    let docs: Vec<(String, Vec<f32>)> = (0..n).map(|i| (format!("d{i}"), random_unit(rng, dim))).collect();
    RankingContext::from_vectors("q", &q, docs.iter().map(|(id, v)| (id.as_str(), v.as_slice())))
}

/// Every query owns a hidden topic vector. Its relevant documents scatter tightly around the
/// topic, the query itself is a noisier view of it, and the rest of the collection is uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub num_queries: usize,
    pub relevant_per_query: usize,
    pub num_distractors: usize,
    pub dim: usize,
    /// Gaussian noise (per coordinate, before renormalization) of relevant documents.
    pub doc_noise: f64,
    /// Gaussian noise of the query around its topic.
    pub query_noise: f64,
    /// Length of each query's exhaustive inner-product ranking in the emitted run.
    pub depth: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_queries: 100,
            relevant_per_query: 4,
            num_distractors: 2000,
            dim: 16,
            doc_noise: 0.05,
            query_noise: 0.3,
            depth: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub queries: EmbeddingMatrix,
    pub docs: EmbeddingMatrix,
    pub qrels: Qrels,
    /// Exhaustive top-`depth` inner-product retrieval over all documents.
    pub run: RunFile,
}

impl PlantedConfig {
    pub fn generate(&self) -> Result<PlantedCorpus> {
        if self.dim == 0 || self.num_queries == 0 || self.relevant_per_query == 0 || self.depth == 0 {
            return Err(Error::param(
                "dim, num_queries, relevant_per_query and depth must be positive",
            ));
        }
        if !(self.doc_noise >= 0.0 && self.query_noise >= 0.0) {
            return Err(Error::param("noise levels must be non-negative"));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let mut queries = EmbeddingMatrix::new(self.dim)?;
        let mut docs = EmbeddingMatrix::new(self.dim)?;
        let mut qrels = Qrels::new();
        for q in 0..self.num_queries {
            let qid = format!("q{q:04}");
            let topic = random_unit(&mut rng, self.dim);
            queries.push(&qid, &perturbed(&mut rng, &topic, self.query_noise))?;
            for r in 0..self.relevant_per_query {
                let did = format!("r{q:04}_{r}");
                docs.push(&did, &perturbed(&mut rng, &topic, self.doc_noise))?;
                qrels.insert(&qid, &did, 1)?;
            }
        }
        for i in 0..self.num_distractors {
            docs.push(format!("x{i:06}"), &random_unit(&mut rng, self.dim))?;
        }
        let mut run = RunFile::new();
        for (qid, qvec) in queries.iter() {
            let scored = docs
                .iter()
                .map(|(d, v)| Ok((d.to_string(), inner_product(qvec, v)?)))
                .collect::<Result<Vec<_>>>()?;
            run.insert(RankedList::from_scored(qid, scored)?.truncated(self.depth))?;
        }
        Ok(PlantedCorpus {
            queries,
            docs,
            qrels,
            run,
        })
    }
}
