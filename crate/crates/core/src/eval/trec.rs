//! TREC qrels and run files.
//!
//! ```text
//! qrels: <qid> <iter> <docid> <grade>
//! run:   <qid> Q0 <docid> <rank> <score> <tag>
//! ```
//!
//! Blank lines and lines starting with `#` are skipped by both parsers.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rerank::RankedList;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Relevance judgments: query → doc → grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails if the pair is already judged.
    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) -> Result<()> {
        match self
            .judgments
            .entry(qid.to_string())
            .or_default()
            .entry(doc_id.to_string())
        {
            Entry::Occupied(_) => Err(Error::DuplicateId(format!("{qid}/{doc_id}"))),
            Entry::Vacant(v) => {
                v.insert(grade);
                Ok(())
            }
        }
    }

    pub fn parse(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&read(path.as_ref())?)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut q = Self::new();
        for (line, l) in content_lines(text) {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Line {
                    line,
                    message: format!("expected 4 fields, found {}", f.len()),
                });
            }
            let grade: i64 = f[3].parse().map_err(|_| Error::Line {
                line,
                message: format!("bad grade `{}`", f[3]),
            })?;
            let grade = u32::try_from(grade).map_err(|_| Error::Line {
                line,
                message: format!("grade {grade} is negative or too large"),
            })?;
            q.insert(f[0], f[2], grade).map_err(|_| Error::Line {
                line,
                message: format!("duplicate judgment for ({}, {})", f[0], f[2]),
            })?;
        }
        Ok(q)
    }

    pub fn to_trec_string(&self) -> String {
        let mut s = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                writeln!(s, "{q} 0 {d} {g}").unwrap();
            }
        }
        s
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(qid)?.get(doc_id).copied()
    }

    /// Docs judged at or above `threshold`, in id order.
    pub fn relevant(&self, qid: &str, threshold: u32) -> Vec<&str> {
        self.judgments
            .get(qid)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g >= threshold)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Rankings for many queries, kept in query-id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    lists: BTreeMap<String, RankedList>,
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, list: RankedList) -> Result<()> {
        match self.lists.entry(list.query_id().to_string()) {
            Entry::Occupied(o) => Err(Error::DuplicateId(o.key().clone())),
            Entry::Vacant(v) => {
                v.insert(list);
                Ok(())
            }
        }
    }

    pub fn get(&self, qid: &str) -> Option<&RankedList> {
        self.lists.get(qid)
    }

    pub fn lists(&self) -> impl ExactSizeIterator<Item = &RankedList> + '_ {
        self.lists.values()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.lists.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn parse(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&read(path.as_ref())?)
    }

    /// Entries are re-sorted by score (ties by doc id) and re-ranked; the rank column is
    /// validated but otherwise ignored.
    pub fn parse_str(text: &str) -> Result<Self> {
        type Scored = (Vec<(String, f64)>, HashSet<String>);
        let mut grouped: BTreeMap<String, Scored> = BTreeMap::new();
        for (line, l) in content_lines(text) {
            let f: Vec<&str> = l.split_whitespace().collect();
            let err = |message: String| Error::Line { line, message };
            if f.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            }
            f[3].parse::<usize>().map_err(|_| err(format!("bad rank `{}`", f[3])))?;
            let score: f64 = f[4].parse().map_err(|_| err(format!("bad score `{}`", f[4])))?;
            if !score.is_finite() {
                return Err(err(format!("non-finite score `{}`", f[4])));
            }
            let (entries, seen) = grouped.entry(f[0].to_string()).or_default();
            if !seen.insert(f[2].to_string()) {
                return Err(err(format!("duplicate doc `{}` for query `{}`", f[2], f[0])));
            }
            entries.push((f[2].to_string(), score));
        }
        let mut run = Self::new();
        for (qid, (entries, _)) in grouped {
            run.insert(RankedList::from_scored(qid, entries)?)?;
        }
        Ok(run)
    }

    pub fn to_trec_string(&self, tag: &str) -> String {
        let mut s = String::new();
        for list in self.lists.values() {
            for e in list.entries() {
                writeln!(s, "{} Q0 {} {} {} {tag}", list.query_id(), e.doc_id, e.rank, e.score).unwrap();
            }
        }
        s
    }

    /// Writes the run, optionally preceded by a `# <header>` comment line.
    pub fn write(&self, path: impl AsRef<Path>, tag: &str, header: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::new();
        if let Some(h) = header {
            writeln!(s, "# {h}").unwrap();
        }
        s.push_str(&self.to_trec_string(tag));
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}
