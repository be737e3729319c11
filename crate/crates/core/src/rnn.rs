//! Reciprocal nearest neighbors over a ranking context.
//!
//! Every element of the context (the query included) is a probe with its own neighbor list.
//! Neighbor lists always start with the probe itself, followed by the other elements in
//! descending similarity, ties broken by lower index. From these lists we derive
//! k-reciprocal sets, τ-extended sets, weighted connectivity vectors with local expansion,
//! and finally a min/max Jaccard distance that is mixed with the normalized geometric score.

use std::str::FromStr;

use crate::context::{RankingContext, SimMatrix};
use crate::error::{Error, Result};

/// Floor for non-binary connectivity weights; keeps every set member strictly positive.
pub const WEIGHT_FLOOR: f64 = 1e-6;
/// Added to the max-min range so constant rows do not divide by zero.
pub const NORM_EPS: f64 = 1e-12;

/// Weighting f_w applied to the normalized distance of a neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightFn {
    /// `f_w(d) = -d`
    NegIdentity,
    /// `f_w(d) = exp(-d)`
    ExpNeg,
    /// Plain set membership.
    Binary,
}

impl WeightFn {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightFn::NegIdentity => "neg_identity",
            WeightFn::ExpNeg => "exp_neg",
            WeightFn::Binary => "binary",
        }
    }
}

impl FromStr for WeightFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg_identity" => Ok(WeightFn::NegIdentity),
            "exp_neg" => Ok(WeightFn::ExpNeg),
            "binary" => Ok(WeightFn::Binary),
            other => Err(Error::param(format!(
                "unknown weight_fn `{other}` (expected neg_identity, exp_neg or binary)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RnnParams {
    /// Neighborhood size, counting the probe itself.
    pub k: usize,
    /// Neighborhood size for local expansion, counting the probe itself.
    pub k_exp: usize,
    /// Trust factor; extension uses neighborhoods of size `round(tau * k)`.
    pub tau: f64,
    /// Weight of the geometric term in the mixture.
    pub lambda: f64,
    pub weight_fn: WeightFn,
}

impl Default for RnnParams {
    /// CODER(TAS-B) on MS MARCO.
    fn default() -> Self {
        Self {
            k: 21,
            k_exp: 3,
            tau: 0.0,
            lambda: 0.451,
            weight_fn: WeightFn::NegIdentity,
        }
    }
}

impl RnnParams {
    /// Checks ranges against a context of `context_len` elements (query included).
    pub fn validate(&self, context_len: usize) -> Result<()> {
        if self.k == 0 || self.k > context_len {
            return Err(Error::param(format!("k = {} outside 1..={context_len}", self.k)));
        }
        if self.k_exp == 0 || self.k_exp > context_len {
            return Err(Error::param(format!(
                "k_exp = {} outside 1..={context_len}",
                self.k_exp
            )));
        }
        check_unit("tau", self.tau)?;
        check_unit("lambda", self.lambda)
    }

    /// Same parameters with `k` and `k_exp` capped at the context size.
    pub fn clamped_to(&self, context_len: usize) -> Self {
        let cap = context_len.max(1);
        Self {
            k: self.k.min(cap),
            k_exp: self.k_exp.min(cap),
            ..*self
        }
    }

    /// `round(tau * k)` with halves rounded up.
    pub fn tau_k(&self) -> usize {
        tau_k(self.tau, self.k)
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::param(format!("{name} = {x} outside [0, 1]")))
    }
}

fn tau_k(tau: f64, k: usize) -> usize {
    (tau * k as f64 + 0.5).floor() as usize
}

/// A set of context indices associated with a probe; members are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub probe: usize,
    members: Vec<usize>,
}

impl NeighborSet {
    fn new(probe: usize, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { probe, members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityVector {
    pub probe: usize,
    weights: Vec<f64>,
}

impl ConnectivityVector {
    pub fn new(probe: usize, weights: Vec<f64>) -> Self {
        Self { probe, weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices with non-zero weight.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Neighbor lists for every context element, plus the inverse (rank) table so that
/// "is `j` among the k nearest of `i`" is a single lookup.
#[derive(Debug, Clone)]
pub struct NeighborOrder {
    n: usize,
    order: Vec<u32>,
    rank: Vec<u32>,
}

impl NeighborOrder {
    pub fn new(sim: &SimMatrix) -> Self {
        let n = sim.len();
        let mut order = vec![0u32; n * n];
        let mut rank = vec![0u32; n * n];
        let mut idx: Vec<u32> = Vec::with_capacity(n);
        for i in 0..n {
            let row = sim.row(i);
            idx.clear();
            idx.extend((0..n as u32).filter(|&j| j as usize != i));
            idx.sort_unstable_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
            let out = &mut order[i * n..(i + 1) * n];
            out[0] = i as u32;
            out[1..].copy_from_slice(&idx);
            for (r, &j) in out.iter().enumerate() {
                rank[i * n + j as usize] = r as u32;
            }
        }
        Self { n, order, rank }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The `k` nearest elements of `i`, nearest first; `i` itself comes first.
    pub fn nearest(&self, i: usize, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.order[i * self.n..i * self.n + k].iter().map(|&j| j as usize)
    }

    #[inline]
    pub fn is_neighbor(&self, i: usize, j: usize, k: usize) -> bool {
        (self.rank[i * self.n + j] as usize) < k
    }

    fn reciprocal(&self, i: usize, k: usize) -> Vec<usize> {
        let mut r: Vec<usize> = self.nearest(i, k).filter(|&j| self.is_neighbor(j, i, k)).collect();
        r.sort_unstable();
        r
    }

    /// Single pass: each member's `tau_k`-reciprocal set is merged when at least two thirds
    /// of it lies inside the original reciprocal set.
    fn extended(&self, i: usize, k: usize, tau: f64) -> Vec<usize> {
        let base = self.reciprocal(i, k);
        let kt = tau_k(tau, k);
        if kt == 0 {
            return base;
        }
        let mut in_result = vec![false; self.n];
        for &j in &base {
            in_result[j] = true;
        }
        for &c in &base {
            let rc = self.reciprocal(c, kt);
            let overlap = rc.iter().filter(|j| base.binary_search(j).is_ok()).count();
            if 3 * overlap >= 2 * rc.len() {
                for j in rc {
                    in_result[j] = true;
                }
            }
        }
        (0..self.n).filter(|&j| in_result[j]).collect()
    }
}

fn check_probe(probe: usize, n: usize) -> Result<()> {
    if probe >= n {
        return Err(Error::param(format!("probe {probe} outside context of {n} elements")));
    }
    Ok(())
}

fn check_k(name: &str, k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::param(format!("{name} = {k} outside 1..={n}")));
    }
    Ok(())
}

pub fn nn_set(probe: usize, sim: &SimMatrix, k: usize) -> Result<NeighborSet> {
    check_probe(probe, sim.len())?;
    check_k("k", k, sim.len())?;
    let order = NeighborOrder::new(sim);
    Ok(NeighborSet::new(probe, order.nearest(probe, k).collect()))
}

pub fn reciprocal_set(probe: usize, sim: &SimMatrix, k: usize) -> Result<NeighborSet> {
    check_probe(probe, sim.len())?;
    check_k("k", k, sim.len())?;
    let order = NeighborOrder::new(sim);
    Ok(NeighborSet::new(probe, order.reciprocal(probe, k)))
}

pub fn extended_reciprocal_set(probe: usize, sim: &SimMatrix, k: usize, tau: f64) -> Result<NeighborSet> {
    check_probe(probe, sim.len())?;
    check_k("k", k, sim.len())?;
    check_unit("tau", tau)?;
    let order = NeighborOrder::new(sim);
    Ok(NeighborSet::new(probe, order.extended(probe, k, tau)))
}

/// Max-min scale of `row[j]` for `j` in `range`; returns `(min, max - min + NORM_EPS)`.
fn min_and_span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    (lo, hi - lo + NORM_EPS)
}

fn weights_for(probe: usize, members: &[usize], sim: &SimMatrix, weight_fn: WeightFn) -> Vec<f64> {
    let n = sim.len();
    let mut w = vec![0.0; n];
    if weight_fn == WeightFn::Binary {
        for &j in members {
            w[j] = 1.0;
        }
        return w;
    }
    let row = sim.row(probe);
    let (lo, span) = min_and_span(row.iter().copied());
    let f = |j: usize| {
        let d = 1.0 - (row[j] - lo) / span;
        match weight_fn {
            WeightFn::NegIdentity => -d,
            WeightFn::ExpNeg => (-d).exp(),
            WeightFn::Binary => unreachable!(),
        }
    };
    let raw: Vec<f64> = members.iter().map(|&j| f(j)).collect();
    let (wlo, wspan) = min_and_span(raw.iter().copied());
    let wspan = wspan - NORM_EPS;
    let whi = wlo + wspan;
    for (&j, &r) in members.iter().zip(&raw) {
        w[j] = if wspan > 0.0 {
            1.0 - (1.0 - WEIGHT_FLOOR) * (whi - r) / wspan
        } else {
            1.0
        };
    }
    w
}

/// Weighted membership vector of `extended_set` over the whole context.
pub fn connectivity_vector(
    probe: usize,
    extended_set: &NeighborSet,
    sim: &SimMatrix,
    weight_fn: WeightFn,
) -> Result<ConnectivityVector> {
    check_probe(probe, sim.len())?;
    if extended_set.is_empty() {
        return Err(Error::Undefined(format!("empty neighbor set for probe {probe}")));
    }
    if let Some(&bad) = extended_set.members().iter().find(|&&j| j >= sim.len()) {
        return Err(Error::param(format!("set member {bad} outside context")));
    }
    Ok(ConnectivityVector::new(
        probe,
        weights_for(probe, extended_set.members(), sim, weight_fn),
    ))
}

/// Replaces each vector by the mean of the vectors of its `k_exp` nearest elements.
pub fn local_expansion(
    vectors: &[ConnectivityVector],
    sim: &SimMatrix,
    k_exp: usize,
) -> Result<Vec<ConnectivityVector>> {
    let n = sim.len();
    check_k("k_exp", k_exp, n)?;
    if vectors.len() != n || vectors.iter().any(|v| v.weights.len() != n) {
        return Err(Error::param(format!("expected {n} connectivity vectors of length {n}")));
    }
    let order = NeighborOrder::new(sim);
    let flat: Vec<f64> = vectors.iter().flat_map(|v| v.weights.iter().copied()).collect();
    let expanded = expand(&flat, n, &order, k_exp);
    Ok(expanded
        .chunks_exact(n)
        .enumerate()
        .map(|(i, w)| ConnectivityVector::new(i, w.to_vec()))
        .collect())
}

fn expand(flat: &[f64], n: usize, order: &NeighborOrder, k_exp: usize) -> Vec<f64> {
    if k_exp == 1 {
        return flat.to_vec();
    }
    let scale = 1.0 / k_exp as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let dst = &mut out[i * n..(i + 1) * n];
        for j in order.nearest(i, k_exp) {
            for (d, s) in dst.iter_mut().zip(&flat[j * n..(j + 1) * n]) {
                *d += s;
            }
        }
        for d in dst.iter_mut() {
            *d *= scale;
        }
    }
    out
}

#[inline]
fn jaccard_raw(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        inter += x.min(y);
        union += x.max(y);
    }
    (inter, union)
}

/// `1 - Σ min(a, b) / Σ max(a, b)`.
pub fn jaccard_distance(a: &ConnectivityVector, b: &ConnectivityVector) -> Result<f64> {
    jaccard_distance_weights(&a.weights, &b.weights)
}

pub fn jaccard_distance_weights(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (inter, union) = jaccard_raw(a, b);
    if union <= 0.0 {
        return Err(Error::Undefined("Jaccard distance of two zero vectors".into()));
    }
    Ok(1.0 - inter / union)
}

/// `lambda * s_geo_norm + (1 - lambda) * (1 - d_jaccard)`.
pub fn mixed_similarity(s_geo_norm: f64, d_jaccard: f64, lambda: f64) -> Result<f64> {
    check_unit("s_geo_norm", s_geo_norm)?;
    check_unit("d_jaccard", d_jaccard)?;
    check_unit("lambda", lambda)?;
    Ok(mix(s_geo_norm, d_jaccard, lambda))
}

#[inline]
fn mix(s: f64, d: f64, lambda: f64) -> f64 {
    lambda * s + (1.0 - lambda) * (1.0 - d)
}

/// Expanded connectivity vectors for every element of one context.
#[derive(Debug, Clone)]
pub struct RnnGraph<'a> {
    sim: &'a SimMatrix,
    params: RnnParams,
    n: usize,
    vectors: Vec<f64>,
}

impl<'a> RnnGraph<'a> {
    pub fn new(sim: &'a SimMatrix, params: &RnnParams) -> Result<Self> {
        let n = sim.len();
        params.validate(n)?;
        let order = NeighborOrder::new(sim);
        let mut flat = Vec::with_capacity(n * n);
        for i in 0..n {
            let ext = order.extended(i, params.k, params.tau);
            flat.extend(weights_for(i, &ext, sim, params.weight_fn));
        }
        let vectors = expand(&flat, n, &order, params.k_exp);
        Ok(Self {
            sim,
            params: *params,
            n,
            vectors,
        })
    }

    pub fn for_context(ctx: &'a RankingContext, params: &RnnParams) -> Result<Self> {
        Self::new(ctx.sim_matrix(), params)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }

    pub fn jaccard_distance(&self, a: usize, b: usize) -> f64 {
        let (inter, union) = jaccard_raw(self.vector(a), self.vector(b));
        // every vector contains its own probe with positive weight, so union > 0
        1.0 - inter / union
    }

    /// Mixed similarity of `probe` to each candidate (context positions `1..n`).
    ///
    /// The geometric term is the probe's similarity row max-min normalized over the candidates.
    pub fn scores(&self, probe: usize) -> Result<Vec<f64>> {
        check_probe(probe, self.n)?;
        let row = self.sim.row(probe);
        if self.n < 2 {
            return Ok(Vec::new());
        }
        let (lo, span) = min_and_span(row[1..].iter().copied());
        let lambda = self.params.lambda;
        Ok((1..self.n)
            .map(|j| {
                let s = (row[j] - lo) / span;
                let d = self.jaccard_distance(probe, j);
                mix(s, d, lambda)
            })
            .collect())
    }
}

/// Mixed similarity of `probe` against every candidate of `context`, in context order.
pub fn rnn_scores(context: &RankingContext, params: &RnnParams, probe: usize) -> Result<Vec<f64>> {
    RnnGraph::for_context(context, params)?.scores(probe)
}
