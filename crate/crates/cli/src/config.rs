//! Flat `key = value` configuration with presets, file loading and flag overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use recipro::rnn::{RnnParams, WeightFn};
use recipro::smooth::{NormFn, SmoothMode, SmoothParams};
use recipro::synth::PlantedConfig;
use recipro::{Metric, RerankConfig};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    /// Empty means unset.
    OptInt,
    Float,
    Bool,
    Text,
    /// Empty means unset.
    Path,
    Choice(&'static [&'static str]),
    Sizes,
    Metrics,
}

#[derive(Debug)]
pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, kind: Kind, help: &'static str) -> KeySpec {
    KeySpec {
        name,
        default,
        kind,
        help,
    }
}

pub const KEYS: &[KeySpec] = &[
    key("queries", "", Kind::Path, "query embeddings (.emb binary or .tsv)"),
    key("docs", "", Kind::Path, "document embeddings (.emb binary or .tsv)"),
    key("run", "", Kind::Path, "input TREC run file"),
    key("qrels", "", Kind::Path, "TREC qrels file"),
    key("input", "", Kind::Path, "input file for convert"),
    key(
        "output",
        "",
        Kind::Path,
        "output file (directory for synth); stdout when unset",
    ),
    key(
        "input_format",
        "auto",
        Kind::Choice(&["auto", "binary", "tsv"]),
        "embedding format of `input`",
    ),
    key(
        "output_format",
        "auto",
        Kind::Choice(&["auto", "binary", "tsv"]),
        "embedding format of `output`",
    ),
    key(
        "k",
        "21",
        Kind::Int,
        "reciprocal neighborhood size, counting the probe itself",
    ),
    key(
        "k_exp",
        "3",
        Kind::Int,
        "local expansion neighborhood size; 1 disables expansion",
    ),
    key(
        "tau",
        "0",
        Kind::Float,
        "trust factor for extended reciprocal sets, in [0, 1]",
    ),
    key(
        "lambda",
        "0.451",
        Kind::Float,
        "weight of geometric similarity in the mixture, in [0, 1]",
    ),
    key(
        "weight_fn",
        "neg_identity",
        Kind::Choice(&["neg_identity", "exp_neg", "binary"]),
        "connectivity weight function",
    ),
    key(
        "context_size",
        "60",
        Kind::Int,
        "number of leading run candidates forming each context",
    ),
    key(
        "top_k",
        "",
        Kind::OptInt,
        "output depth of reranked lists; whole context when unset",
    ),
    key(
        "strict",
        "false",
        Kind::Bool,
        "fail on queries with unresolvable ids instead of skipping",
    ),
    key("b", "1.222", Kind::Float, "ground-truth boost factor (>= 1)"),
    key(
        "n_max",
        "4",
        Kind::Int,
        "softmax cut-off rank for non-ground-truth candidates",
    ),
    key(
        "f_n",
        "maxmin",
        Kind::Choice(&["maxmin", "stdbased"]),
        "score normalization for smoothing",
    ),
    key(
        "inject_missing_gt",
        "true",
        Kind::Bool,
        "add ground-truth documents missing from the context",
    ),
    key(
        "mode",
        "evidence",
        Kind::Choice(&["evidence", "uniform"]),
        "label smoothing scheme",
    ),
    key(
        "epsilon",
        "matched",
        Kind::Text,
        "uniform smoothing mass moved off the ground truth, or `matched`",
    ),
    key(
        "metrics",
        "mrr@10,ndcg@10,recall@100,map@1000",
        Kind::Metrics,
        "metrics reported by eval and rerank",
    ),
    key("metric", "mrr@10", Kind::Metrics, "metric tracked by sweep"),
    key("rel_threshold", "1", Kind::Int, "minimum grade counted as relevant"),
    key(
        "sizes",
        "",
        Kind::Sizes,
        "context sizes: `a,b,c` or `start..end:step` (inclusive)",
    ),
    key(
        "trials",
        "20",
        Kind::Int,
        "repetitions per size (bench) or random contexts (selftest)",
    ),
    key(
        "dim",
        "768",
        Kind::Int,
        "bench: embedding dimension of the random contexts",
    ),
    key("seed", "0", Kind::Int, "seed for all synthetic data"),
    key("threads", "0", Kind::Int, "worker threads; 0 uses all cores"),
    key("tag", "recipro", Kind::Text, "run tag written in the last column"),
    key("num_queries", "100", Kind::Int, "synth: number of queries"),
    key(
        "relevant_per_query",
        "4",
        Kind::Int,
        "synth: relevant documents per query",
    ),
    key(
        "num_distractors",
        "2000",
        Kind::Int,
        "synth: uniformly random documents",
    ),
    key(
        "doc_noise",
        "0.05",
        Kind::Float,
        "synth: noise of relevant documents around their topic",
    ),
    key(
        "query_noise",
        "0.3",
        Kind::Float,
        "synth: noise of queries around their topic",
    ),
    key("synth_dim", "16", Kind::Int, "synth: embedding dimension"),
    key("depth", "100", Kind::Int, "synth: run depth per query"),
];

/// Keys left out of the config hash.
const UNHASHED: &[&str] = &["threads", "output"];

pub struct Preset {
    pub name: &'static str,
    pub help: &'static str,
    pub values: &'static [(&'static str, &'static str)],
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "tasb-msmarco",
        help: "reranking TAS-B on MS MARCO",
        values: &[
            ("context_size", "60"),
            ("k", "21"),
            ("k_exp", "3"),
            ("tau", "0"),
            ("lambda", "0.451"),
        ],
    },
    Preset {
        name: "coder-tasb-msmarco",
        help: "reranking CODER(TAS-B) on MS MARCO",
        values: &[
            ("context_size", "60"),
            ("k", "21"),
            ("k_exp", "3"),
            ("tau", "0"),
            ("lambda", "0.451"),
        ],
    },
    Preset {
        name: "cocondenser-msmarco",
        help: "reranking CoCondenser on MS MARCO",
        values: &[
            ("context_size", "53"),
            ("k", "21"),
            ("k_exp", "5"),
            ("tau", "0.128"),
            ("lambda", "0.469"),
        ],
    },
    Preset {
        name: "coder-cocondenser-msmarco",
        help: "reranking CODER(CoCondenser) on MS MARCO",
        values: &[
            ("context_size", "63"),
            ("k", "19"),
            ("k_exp", "8"),
            ("tau", "0.5"),
            ("lambda", "0.473"),
        ],
    },
    Preset {
        name: "coder-tasb-smooth",
        help: "label smoothing for CODER(TAS-B) on MS MARCO",
        values: &[
            ("context_size", "60"),
            ("k", "21"),
            ("k_exp", "3"),
            ("tau", "0"),
            ("lambda", "0.451"),
            ("b", "1.222"),
            ("n_max", "4"),
            ("f_n", "maxmin"),
        ],
    },
    Preset {
        name: "coder-cocondenser-smooth",
        help: "label smoothing for CODER(CoCondenser) on MS MARCO",
        values: &[
            ("context_size", "63"),
            ("k", "19"),
            ("k_exp", "8"),
            ("tau", "0.5"),
            ("lambda", "0.473"),
            ("b", "1.525"),
            ("n_max", "32"),
            ("f_n", "stdbased"),
        ],
    },
];

pub fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

fn canonical_key(raw: &str) -> String {
    raw.trim().replace('-', "_")
}

/// Effective configuration: every key has a value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect(),
        }
    }
}

/// Preset named in a config file, and the file's remaining `key = value` pairs in order.
pub type FileSettings = (Option<String>, Vec<(String, String)>);

impl Config {
    pub fn set(&mut self, raw_key: &str, value: &str) -> Result<(), CliError> {
        let name = canonical_key(raw_key);
        let spec = spec(&name).ok_or_else(|| CliError::Config(format!("unknown config key `{raw_key}`")))?;
        let value = value.trim().to_string();
        check_value(spec, &value)?;
        self.values.insert(spec.name, value);
        Ok(())
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<(), CliError> {
        let p = preset(name).ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            CliError::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })?;
        for (k, v) in p.values {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. A `preset` key is returned separately
    /// so the caller can order it before the file's own values.
    pub fn parse_file_text(text: &str) -> Result<FileSettings, CliError> {
        let mut preset = None;
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected `key = value`", i + 1)))?;
            let k = canonical_key(k);
            if k == "preset" {
                preset = Some(v.trim().to_string());
            } else {
                if spec(&k).is_none() {
                    return Err(CliError::Config(format!("config line {}: unknown key `{k}`", i + 1)));
                }
                pairs.push((k, v.trim().to_string()));
            }
        }
        Ok((preset, pairs))
    }

    pub fn read_file(path: &Path) -> Result<FileSettings, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse_file_text(&text)
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("config key `{name}` is not registered"))
    }

    /// `key=value` lines in key order, excluding threads and the output path.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            if !UNHASHED.contains(k) {
                writeln!(s, "{k}={v}").unwrap();
            }
        }
        s
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn header(&self) -> String {
        format!("recipro {} config={}", env!("CARGO_PKG_VERSION"), self.hash())
    }

    pub fn usize(&self, name: &str) -> Result<usize, CliError> {
        parse_int(name, self.raw(name))
    }

    pub fn opt_usize(&self, name: &str) -> Result<Option<usize>, CliError> {
        let v = self.raw(name);
        if v.is_empty() {
            Ok(None)
        } else {
            parse_int(name, v).map(Some)
        }
    }

    pub fn f64(&self, name: &str) -> Result<f64, CliError> {
        parse_float(name, self.raw(name))
    }

    pub fn bool(&self, name: &str) -> Result<bool, CliError> {
        parse_bool(name, self.raw(name))
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        let v = self.raw(name);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, name: &str) -> Result<PathBuf, CliError> {
        self.path(name).ok_or_else(|| {
            CliError::Config(format!(
                "missing required key `{name}` (set --{} or `{name} = ...`)",
                name.replace('_', "-")
            ))
        })
    }

    pub fn sizes(&self, name: &str) -> Result<Vec<usize>, CliError> {
        parse_sizes(name, self.raw(name))
    }

    pub fn metrics(&self, name: &str) -> Result<Vec<Metric>, CliError> {
        parse_metrics(name, self.raw(name))
    }

    pub fn rnn(&self) -> Result<RnnParams, CliError> {
        let p = RnnParams {
            k: self.usize("k")?,
            k_exp: self.usize("k_exp")?,
            tau: self.f64("tau")?,
            lambda: self.f64("lambda")?,
            weight_fn: self.raw("weight_fn").parse::<WeightFn>().map_err(config_err)?,
        };
        p.clamped_to(usize::MAX).validate(usize::MAX).map_err(config_err)?;
        Ok(p)
    }

    pub fn rerank(&self) -> Result<RerankConfig, CliError> {
        let context_size = self.usize("context_size")?;
        if context_size == 0 {
            return Err(CliError::Config("context_size must be at least 1".into()));
        }
        let top_k = self.opt_usize("top_k")?;
        if top_k == Some(0) {
            return Err(CliError::Config("top_k must be at least 1".into()));
        }
        Ok(RerankConfig {
            rnn: self.rnn()?,
            context_size,
            top_k,
            strict: self.bool("strict")?,
        })
    }

    pub fn smooth(&self) -> Result<SmoothParams, CliError> {
        let p = SmoothParams {
            rnn: self.rnn()?,
            context_size: self.usize("context_size")?,
            b: self.f64("b")?,
            n_max: self.usize("n_max")?,
            f_n: self.raw("f_n").parse::<NormFn>().map_err(config_err)?,
            inject_missing_gt: self.bool("inject_missing_gt")?,
        };
        p.validate().map_err(config_err)?;
        Ok(p)
    }

    pub fn smooth_mode(&self) -> Result<SmoothMode, CliError> {
        match self.raw("mode") {
            "evidence" => Ok(SmoothMode::Evidence),
            _ => {
                let e = self.raw("epsilon");
                let epsilon = if e == "matched" {
                    None
                } else {
                    let v = parse_float("epsilon", e)?;
                    if !(0.0..1.0).contains(&v) {
                        return Err(CliError::Config(format!("epsilon = {v} outside [0, 1)")));
                    }
                    Some(v)
                };
                Ok(SmoothMode::Uniform { epsilon })
            }
        }
    }

    pub fn planted(&self) -> Result<PlantedConfig, CliError> {
        Ok(PlantedConfig {
            num_queries: self.usize("num_queries")?,
            relevant_per_query: self.usize("relevant_per_query")?,
            num_distractors: self.usize("num_distractors")?,
            dim: self.usize("synth_dim")?,
            doc_noise: self.f64("doc_noise")?,
            query_noise: self.f64("query_noise")?,
            depth: self.usize("depth")?,
            seed: self.usize("seed")? as u64,
        })
    }

    pub fn rel_threshold(&self) -> Result<u32, CliError> {
        u32::try_from(self.usize("rel_threshold")?).map_err(|_| CliError::Config("rel_threshold is too large".into()))
    }
}

fn config_err(e: recipro::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn check_value(spec: &KeySpec, v: &str) -> Result<(), CliError> {
    let name = spec.name;
    match spec.kind {
        Kind::Int => parse_int(name, v).map(drop),
        Kind::OptInt if v.is_empty() => Ok(()),
        Kind::OptInt => parse_int(name, v).map(drop),
        Kind::Float => parse_float(name, v).map(drop),
        Kind::Bool => parse_bool(name, v).map(drop),
        Kind::Text | Kind::Path => Ok(()),
        Kind::Choice(options) => {
            if options.contains(&v) {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "`{name}` must be one of {}, got `{v}`",
                    options.join(", ")
                )))
            }
        }
        Kind::Sizes if v.is_empty() => Ok(()),
        Kind::Sizes => parse_sizes(name, v).map(drop),
        Kind::Metrics => parse_metrics(name, v).map(drop),
    }
}

fn parse_int(name: &str, v: &str) -> Result<usize, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("`{name}` expects a non-negative integer, got `{v}`")))
}

fn parse_float(name: &str, v: &str) -> Result<f64, CliError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(CliError::Config(format!("`{name}` expects a number, got `{v}`"))),
    }
}

fn parse_bool(name: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("`{name}` expects true or false, got `{v}`"))),
    }
}

/// `a,b,c` or `start..end:step`, both ends inclusive. Result is strictly ascending.
pub fn parse_sizes(name: &str, v: &str) -> Result<Vec<usize>, CliError> {
    let bad = |why: &str| CliError::Config(format!("`{name}`: {why} in `{v}`"));
    let sizes: Vec<usize> = if let Some((range, step)) = v.split_once(':') {
        let (a, b) = range.split_once("..").ok_or_else(|| bad("expected start..end:step"))?;
        let a: usize = a.trim().parse().map_err(|_| bad("bad range start"))?;
        let b: usize = b.trim().parse().map_err(|_| bad("bad range end"))?;
        let step: usize = step.trim().parse().map_err(|_| bad("bad step"))?;
        if step == 0 || a > b {
            return Err(bad("empty range"));
        }
        (a..=b).step_by(step).collect()
    } else {
        v.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad("bad size")))
            .collect::<Result<_, _>>()?
    };
    if sizes.is_empty() || sizes[0] == 0 {
        return Err(bad("sizes must be positive"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("sizes must be strictly ascending"));
    }
    Ok(sizes)
}

fn parse_metrics(name: &str, v: &str) -> Result<Vec<Metric>, CliError> {
    let metrics: Vec<Metric> = v
        .split(',')
        .map(|m| m.trim().parse::<Metric>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("`{name}`: {e}")))?;
    if metrics.is_empty() {
        return Err(CliError::Config(format!("`{name}` lists no metrics")));
    }
    Ok(metrics)
}
