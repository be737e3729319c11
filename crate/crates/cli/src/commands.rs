use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use recipro::eval::{evaluate, Qrels, RunFile};
use recipro::oracle::{self, NaiveQuery};
use recipro::rerank::{bench_latency, latency_csv, rerank_run, sweep_context_size, sweep_csv, RankedList};
use recipro::rnn::{RnnGraph, RnnParams, WeightFn};
use recipro::smooth::{smooth_dataset, to_jsonl, SmoothMode};
use recipro::synth;
use recipro::{EmbeddingFormat, EmbeddingMatrix, Metric};

use crate::config::Config;
use crate::error::CliError;

/// Options shared by every command besides the key/value configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Output {
    pub header: bool,
}

impl Output {
    fn header_line(&self, cfg: &Config) -> Option<String> {
        self.header.then(|| cfg.header())
    }

    fn with_header(&self, cfg: &Config, body: &str) -> String {
        match self.header_line(cfg) {
            Some(h) => format!("# {h}\n{body}"),
            None => body.to_string(),
        }
    }
}

fn emit(cfg: &Config, text: &str) -> Result<(), CliError> {
    match cfg.path("output") {
        Some(p) => write_file(&p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn format_for(cfg: &Config, key: &str, path: &Path) -> EmbeddingFormat {
    match cfg.raw(key) {
        "binary" => EmbeddingFormat::Binary,
        "tsv" => EmbeddingFormat::Tsv,
        _ => EmbeddingFormat::from_path(path),
    }
}

fn load_embeddings(cfg: &Config, key: &str) -> Result<EmbeddingMatrix, CliError> {
    let p = cfg.require_path(key)?;
    Ok(EmbeddingMatrix::load(&p, EmbeddingFormat::from_path(&p))?)
}

fn load_run(cfg: &Config) -> Result<RunFile, CliError> {
    Ok(RunFile::parse(cfg.require_path("run")?)?)
}

fn load_qrels(cfg: &Config) -> Result<Qrels, CliError> {
    Ok(Qrels::parse(cfg.require_path("qrels")?)?)
}

fn metric_table(rows: &[(Metric, Vec<f64>)], columns: &[&str]) -> String {
    let mut s = format!("{:<12}", "metric");
    for c in columns {
        write!(s, " {c:>10}").unwrap();
    }
    s.push('\n');
    for (m, vals) in rows {
        write!(s, "{:<12}", m.to_string()).unwrap();
        for v in vals {
            write!(s, " {v:>10.4}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn rerank(cfg: &Config, out: Output) -> Result<(), CliError> {
    let rc = cfg.rerank()?;
    let metrics = cfg.metrics("metrics")?;
    let rel = cfg.rel_threshold()?;
    let run = load_run(cfg)?;
    let queries = load_embeddings(cfg, "queries")?;
    let docs = load_embeddings(cfg, "docs")?;
    let qrels = cfg.path("qrels").map(Qrels::parse).transpose()?;

    let result = rerank_run(&run, &queries, &docs, &rc)?;
    emit(cfg, &out.with_header(cfg, &result.run.to_trec_string(cfg.raw("tag"))))?;

    eprintln!(
        "reranked {} queries ({} copied through unchanged)",
        result.run.len() - result.skipped.len(),
        result.skipped.len()
    );
    if let Some(qrels) = qrels {
        let rows = metrics
            .iter()
            .map(|&m| {
                Ok((
                    m,
                    vec![evaluate(&run, &qrels, m, rel)?, evaluate(&result.run, &qrels, m, rel)?],
                ))
            })
            .collect::<Result<Vec<_>, recipro::Error>>()?;
        eprint!("{}", metric_table(&rows, &["before", "after"]));
    }
    Ok(())
}

pub fn smooth(cfg: &Config, out: Output) -> Result<(), CliError> {
    let params = cfg.smooth()?;
    let mode = cfg.smooth_mode()?;
    let run = load_run(cfg)?;
    let qrels = load_qrels(cfg)?;
    let queries = load_embeddings(cfg, "queries")?;
    let docs = load_embeddings(cfg, "docs")?;
    let result = smooth_dataset(
        &run,
        &queries,
        &docs,
        &qrels,
        &params,
        mode,
        cfg.rel_threshold()?,
        cfg.bool("strict")?,
    )?;
    emit(cfg, &to_jsonl(&result.labels, out.header_line(cfg).as_deref()))?;
    let mean_mass = if result.labels.is_empty() {
        0.0
    } else {
        result.labels.iter().map(|s| s.gt_mass()).sum::<f64>() / result.labels.len() as f64
    };
    let scheme = match mode {
        SmoothMode::Evidence => "evidence-based".to_string(),
        SmoothMode::Uniform { epsilon: None } => "uniform (matched mass)".to_string(),
        SmoothMode::Uniform { epsilon: Some(e) } => format!("uniform (epsilon {e})"),
    };
    eprintln!(
        "{scheme} labels: {} queries processed, {} skipped, mean ground-truth mass {mean_mass:.4}",
        result.labels.len(),
        result.skipped.len()
    );
    for s in &result.skipped {
        eprintln!("  skipped {}: {}", s.query_id, s.reason);
    }
    Ok(())
}

pub fn eval(cfg: &Config, out: Output) -> Result<(), CliError> {
    let run = load_run(cfg)?;
    let qrels = load_qrels(cfg)?;
    let rel = cfg.rel_threshold()?;
    let rows = cfg
        .metrics("metrics")?
        .into_iter()
        .map(|m| Ok((m, vec![evaluate(&run, &qrels, m, rel)?])))
        .collect::<Result<Vec<_>, recipro::Error>>()?;
    emit(cfg, &out.with_header(cfg, &metric_table(&rows, &["value"])))
}

pub fn sweep(cfg: &Config, out: Output) -> Result<(), CliError> {
    let rc = cfg.rerank()?;
    let metric = single_metric(cfg)?;
    let sizes = required_sizes(cfg, "10..100:10")?;
    let run = load_run(cfg)?;
    let qrels = load_qrels(cfg)?;
    let queries = load_embeddings(cfg, "queries")?;
    let docs = load_embeddings(cfg, "docs")?;
    let rows = sweep_context_size(&run, &queries, &docs, &qrels, &rc, &sizes, metric, cfg.rel_threshold()?)?;
    emit(cfg, &out.with_header(cfg, &sweep_csv(&rows, metric)))
}

fn single_metric(cfg: &Config) -> Result<Metric, CliError> {
    match cfg.metrics("metric")?.as_slice() {
        [m] => Ok(*m),
        _ => Err(CliError::Config("`metric` takes exactly one metric".into())),
    }
}

fn required_sizes(cfg: &Config, fallback: &str) -> Result<Vec<usize>, CliError> {
    if cfg.raw("sizes").is_empty() {
        crate::config::parse_sizes("sizes", fallback)
    } else {
        cfg.sizes("sizes")
    }
}

pub fn bench(cfg: &Config, out: Output) -> Result<(), CliError> {
    let sizes = required_sizes(cfg, "50,100,200")?;
    let rows = bench_latency(
        &sizes,
        cfg.usize("trials")?,
        &cfg.rnn()?,
        cfg.usize("dim")?,
        cfg.usize("seed")? as u64,
    )?;
    emit(cfg, &out.with_header(cfg, &latency_csv(&rows)))
}

pub fn convert(cfg: &Config) -> Result<(), CliError> {
    let input = cfg.require_path("input")?;
    let output = cfg.require_path("output")?;
    let m = EmbeddingMatrix::load(&input, format_for(cfg, "input_format", &input))?;
    m.write(&output, format_for(cfg, "output_format", &output))?;
    eprintln!("converted {} vectors of dimension {}", m.len(), m.dim());
    Ok(())
}

pub fn synth(cfg: &Config, out: Output) -> Result<(), CliError> {
    let dir = cfg.require_path("output")?;
    let corpus = cfg.planted()?.generate()?;
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    corpus.queries.write(dir.join("queries.emb"), EmbeddingFormat::Binary)?;
    corpus.docs.write(dir.join("docs.emb"), EmbeddingFormat::Binary)?;
    write_file(
        &dir.join("qrels.txt"),
        out.with_header(cfg, &corpus.qrels.to_trec_string()).as_bytes(),
    )?;
    corpus
        .run
        .write(dir.join("run.txt"), "exact", out.header_line(cfg).as_deref())?;
    eprintln!(
        "wrote {} queries and {} documents",
        corpus.queries.len(),
        corpus.docs.len()
    );
    Ok(())
}

/// Cross-checks the optimized similarity and metric code against the naive references.
pub fn selftest(cfg: &Config, out: Output) -> Result<(), CliError> {
    let trials = cfg.usize("trials")?.max(1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.usize("seed")? as u64);
    let mut report = String::new();
    let mut failures = 0usize;

    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.random_range(2..=50);
        let dim = rng.random_range(1..=8);
        let ctx = synth::random_context(&mut rng, n, dim)?;
        let rows: Vec<Vec<f64>> = (0..ctx.len()).map(|i| ctx.sim_matrix().row(i).to_vec()).collect();
        let k = rng.random_range(1..=ctx.len());
        let params = RnnParams {
            k,
            k_exp: 1,
            tau: 0.0,
            lambda: 0.0,
            weight_fn: WeightFn::Binary,
        };
        let graph = RnnGraph::for_context(&ctx, &params)?;
        let sets: Vec<_> = (0..ctx.len())
            .map(|i| oracle::extended_reciprocal_set(&rows, i, k, 0.0))
            .collect();
        for a in 0..ctx.len() {
            for b in 0..ctx.len() {
                let want = oracle::set_jaccard_distance(&sets[a], &sets[b]);
                worst = worst.max((graph.jaccard_distance(a, b) - want).abs());
            }
        }
    }
    let ok = worst <= 1e-9;
    failures += usize::from(!ok);
    writeln!(
        report,
        "{} jaccard: {trials} random contexts, max deviation from set oracle {worst:.3e}",
        if ok { "PASS" } else { "FAIL" }
    )
    .unwrap();

    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n_docs = rng.random_range(1..40);
        let docs: Vec<String> = (0..n_docs).map(|i| format!("d{i}")).collect();
        let mut grades = BTreeMap::new();
        for d in &docs {
            if rng.random_bool(0.3) {
                grades.insert(d.as_str(), rng.random_range(0..4u32));
            }
        }
        grades.entry(docs[0].as_str()).or_insert(1);
        let scored: Vec<(String, f64)> = docs.iter().map(|d| (d.clone(), rng.random::<f64>())).collect();
        let list = RankedList::from_scored("q", scored)?;
        let ranking: Vec<&str> = list.doc_ids().collect();
        let mut run = RunFile::new();
        run.insert(list.clone())?;
        let mut qrels = Qrels::new();
        for (d, g) in &grades {
            qrels.insert("q", d, *g)?;
        }
        let naive = NaiveQuery { ranking, grades };
        let k = rng.random_range(1..20);
        let pairs = [
            (Metric::Mrr { k }, naive.reciprocal_rank(k, 1)),
            (Metric::Ndcg { k }, naive.ndcg(k)),
            (Metric::Recall { k }, naive.recall(k, 1)),
            (Metric::Map { k }, naive.average_precision(k, 1)),
        ];
        for (m, want) in pairs {
            worst = worst.max((evaluate(&run, &qrels, m, 1)? - want).abs());
        }
    }
    let ok = worst <= 1e-9;
    failures += usize::from(!ok);
    writeln!(
        report,
        "{} metrics: {trials} random rankings, max deviation from naive reference {worst:.3e}",
        if ok { "PASS" } else { "FAIL" }
    )
    .unwrap();

    emit(cfg, &out.with_header(cfg, &report))?;
    if failures > 0 {
        return Err(CliError::Internal(format!("{failures} self-test check(s) failed")));
    }
    Ok(())
}
