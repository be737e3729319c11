//! Naive reference implementations used to cross-check the optimized paths.
//!
//! Nothing here calls into [`crate::rnn`] or [`crate::eval`]; every result is derived from
//! definitions with explicit sets and plain loops. Used by the test suites and by the
//! `selftest` CLI command.

use std::collections::{BTreeMap, BTreeSet};

/// `j ∈ NN(i, k)` iff `j == i` or fewer than `k - 1` other elements beat `j`, where `l` beats
/// `j` when it is more similar to `i`, or equally similar with a lower index.
pub fn nn_set(rows: &[Vec<f64>], i: usize, k: usize) -> BTreeSet<usize> {
    let n = rows.len();
    let mut out = BTreeSet::new();
    if k == 0 {
        return out;
    }
    out.insert(i);
    for j in 0..n {
        if j == i {
            continue;
        }
        let beaten_by = (0..n)
            .filter(|&l| l != i && l != j)
            .filter(|&l| rows[i][l] > rows[i][j] || (rows[i][l] == rows[i][j] && l < j))
            .count();
        if beaten_by < k - 1 {
            out.insert(j);
        }
    }
    out
}

pub fn reciprocal_set(rows: &[Vec<f64>], i: usize, k: usize) -> BTreeSet<usize> {
    nn_set(rows, i, k)
        .into_iter()
        .filter(|&c| nn_set(rows, c, k).contains(&i))
        .collect()
}

pub fn extended_reciprocal_set(rows: &[Vec<f64>], i: usize, k: usize, tau: f64) -> BTreeSet<usize> {
    let base = reciprocal_set(rows, i, k);
    let kt = (tau * k as f64 + 0.5).floor() as usize;
    let mut out = base.clone();
    if kt == 0 {
        return out;
    }
    for &c in &base {
        let rc = reciprocal_set(rows, c, kt);
        let overlap = rc.intersection(&base).count();
        // |R ∩ R_c| ≥ (2/3)|R_c|, in integers
        if 3 * overlap >= 2 * rc.len() {
            out.extend(rc);
        }
    }
    out
}

pub fn set_jaccard_distance(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    1.0 - inter as f64 / union as f64
}

/// Pure set-Jaccard similarity `1 - d_J` of the query (index 0) to every other element.
pub fn query_set_similarities(rows: &[Vec<f64>], k: usize, tau: f64) -> Vec<f64> {
    let sets: Vec<BTreeSet<usize>> = (0..rows.len())
        .map(|i| extended_reciprocal_set(rows, i, k, tau))
        .collect();
    (1..rows.len())
        .map(|j| 1.0 - set_jaccard_distance(&sets[0], &sets[j]))
        .collect()
}

/// One query's ranking (doc ids, best first) and its judgments.
pub struct NaiveQuery<'a> {
    pub ranking: Vec<&'a str>,
    pub grades: BTreeMap<&'a str, u32>,
}

impl NaiveQuery<'_> {
    fn grade(&self, doc: &str) -> u32 {
        self.grades.get(doc).copied().unwrap_or(0)
    }

    fn top(&self, k: usize) -> &[&str] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    fn num_relevant(&self, threshold: u32) -> usize {
        self.grades.values().filter(|&&g| g >= threshold).count()
    }

    pub fn reciprocal_rank(&self, k: usize, threshold: u32) -> f64 {
        for (i, d) in self.top(k).iter().enumerate() {
            if self.grade(d) >= threshold {
                return 1.0 / (i + 1) as f64;
            }
        }
        0.0
    }

    pub fn ndcg(&self, k: usize) -> f64 {
        let dcg: f64 = self
            .top(k)
            .iter()
            .enumerate()
            .map(|(i, d)| self.grade(d) as f64 / ((i + 2) as f64).log2())
            .sum();
        let mut ideal: Vec<u32> = self.grades.values().copied().collect();
        ideal.sort_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| g as f64 / ((i + 2) as f64).log2())
            .sum();
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    }

    pub fn recall(&self, k: usize, threshold: u32) -> f64 {
        let total = self.num_relevant(threshold);
        if total == 0 {
            return 0.0;
        }
        let hits = self.top(k).iter().filter(|d| self.grade(d) >= threshold).count();
        hits as f64 / total as f64
    }

    pub fn average_precision(&self, k: usize, threshold: u32) -> f64 {
        let total = self.num_relevant(threshold);
        if total == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..self.top(k).len() {
            if self.grade(self.ranking[i]) >= threshold {
                let rel_so_far = self.ranking[..=i].iter().filter(|d| self.grade(d) >= threshold).count();
                sum += rel_so_far as f64 / (i + 1) as f64;
            }
        }
        sum / total as f64
    }
}
