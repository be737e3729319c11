//! Acceptance gate, built without the libtest harness. Criteria run in sequence so the latency
//! measurements are not disturbed by concurrent tests, and each prints one PASS/FAIL line. The
//! binary exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recipro::context::RankingContext;
use recipro::eval::{evaluate, map_at_k, ndcg_at_k, Metric, Qrels, RunFile};
use recipro::oracle::{self, NaiveQuery};
use recipro::rerank::{bench_latency, rerank_context, rerank_run, RankedList, RerankConfig};
use recipro::rnn::{extended_reciprocal_set, nn_set, reciprocal_set, NeighborOrder, RnnGraph, RnnParams, WeightFn};
use recipro::smooth::{smooth_dataset, to_jsonl, uniform_smooth, SmoothMode, SmoothParams, SoftLabelSet};
use recipro::synth::{self, PlantedConfig};
use recipro::NormFn;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rows_of(ctx: &RankingContext) -> Vec<Vec<f64>> {
    (0..ctx.len()).map(|i| ctx.sim_matrix().row(i).to_vec()).collect()
}

fn binary(k: usize, lambda: f64) -> RnnParams {
    RnnParams {
        k,
        k_exp: 1,
        tau: 0.0,
        lambda,
        weight_fn: WeightFn::Binary,
    }
}

/// The shared pool of random contexts for criteria 1 and 2.
fn random_contexts(count: usize, seed: u64) -> Vec<(RankingContext, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=50);
            let dim = rng.random_range(1..=8);
            let ctx = synth::random_context(&mut rng, n, dim).unwrap();
            let k = rng.random_range(1..=ctx.len());
            (ctx, k)
        })
        .collect()
}

fn c1_oracle_equivalence() -> Outcome {
    let contexts = random_contexts(250, 11);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut pairs = 0usize;
    for (ctx, k) in &contexts {
        let graph = RnnGraph::for_context(ctx, &binary(*k, 0.0)).map_err(|e| e.to_string())?;
        let rows = rows_of(ctx);
        let sets: Vec<BTreeSet<usize>> = (0..ctx.len())
            .map(|i| oracle::extended_reciprocal_set(&rows, i, *k, 0.0))
            .collect();
        for a in 0..ctx.len() {
            for b in 0..ctx.len() {
                let want = oracle::set_jaccard_distance(&sets[a], &sets[b]);
                worst = worst.max((graph.jaccard_distance(a, b) - want).abs());
                pairs += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, || format!("max deviation {worst:e} > 1e-9"))?;
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "{} contexts, {pairs} pairs, max |d_vec - d_set| = {worst:e}, {secs:.2} s",
        contexts.len()
    ))
}

fn sorted_by_score(ids: &[String], scores: &[f64]) -> Vec<String> {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    idx.into_iter().map(|i| ids[i].clone()).collect()
}

fn inversions(a: &[String], b: &[String]) -> usize {
    let pos: std::collections::HashMap<&str, usize> = b.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let p: Vec<usize> = a.iter().map(|d| pos[d.as_str()]).collect();
    let mut inv = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            inv += usize::from(p[i] > p[j]);
        }
    }
    inv
}

fn c2_degenerate_mixtures() -> Outcome {
    let contexts = random_contexts(250, 11);
    let mut geo_inv = 0;
    let mut jac_mismatch = 0;
    for (ctx, k) in &contexts {
        let n = ctx.num_candidates();
        let geo_params = RnnParams {
            lambda: 1.0,
            ..RnnParams::default()
        };
        let geo = rerank_context(ctx, &geo_params, n).map_err(|e| e.to_string())?;
        let got: Vec<String> = geo.doc_ids().map(str::to_string).collect();
        geo_inv += inversions(&got, ctx.candidate_ids());

        let jac = rerank_context(ctx, &binary(*k, 0.0), n).map_err(|e| e.to_string())?;
        let got: Vec<String> = jac.doc_ids().map(str::to_string).collect();
        let oracle_scores = oracle::query_set_similarities(&rows_of(ctx), *k, 0.0);
        let want = sorted_by_score(ctx.candidate_ids(), &oracle_scores);
        jac_mismatch += usize::from(got != want);
    }
    ensure(geo_inv == 0, || format!("{geo_inv} inversions at lambda = 1"))?;
    ensure(jac_mismatch == 0, || {
        format!("{jac_mismatch} contexts differ from set-oracle order at lambda = 0")
    })?;
    Ok(format!(
        "{} contexts: 0 inversions at lambda = 1, oracle Jaccard order at lambda = 0",
        contexts.len()
    ))
}

fn unit_at(deg: f64) -> Vec<f32> {
    let r = deg.to_radians();
    vec![r.cos() as f32, r.sin() as f32]
}

/// Positive, five negatives, and two extra negatives on the unit circle (angles in degrees).
fn planar_context(extras: &[(&str, f64)]) -> RankingContext {
    let mut pts: Vec<(&str, f64)> = vec![
        ("pos", 63.5),
        ("n1", -95.2),
        ("n2", -60.9),
        ("n3", 34.5),
        ("n4", -106.9),
        ("n5", -17.4),
    ];
    pts.extend_from_slice(extras);
    let vecs: Vec<(&str, Vec<f32>)> = pts.iter().map(|(id, a)| (*id, unit_at(*a))).collect();
    RankingContext::from_vectors("q", &unit_at(0.0), vecs.iter().map(|(id, v)| (*id, v.as_slice()))).unwrap()
}

fn ranks(ctx: &RankingContext, params: &RnnParams) -> (usize, usize) {
    let geo = ctx.position("pos").unwrap();
    let mixed = rerank_context(ctx, params, ctx.num_candidates()).unwrap();
    let mixed_rank = mixed.doc_ids().position(|d| d == "pos").unwrap() + 1;
    (geo, mixed_rank)
}

fn c3_toy_geometry() -> Outcome {
    let start = Instant::now();
    let params = binary(4, 0.25);
    let base = planar_context(&[]);
    let one = planar_context(&[("x1", 118.4)]);
    let two = planar_context(&[("x1", 118.4), ("x2", 108.8)]);
    let (g0, m0) = ranks(&base, &params);
    let (g1, m1) = ranks(&one, &params);
    let (g2, m2) = ranks(&two, &params);
    ensure(m0 < g0, || {
        format!("base context: mixed rank {m0} not better than geometric {g0}")
    })?;
    ensure(m1 < g1, || {
        format!("first extra negative: mixed rank {m1} not better than geometric {g1}")
    })?;
    ensure(m2 >= g2, || {
        format!("second extra negative: improvement persists ({m2} < {g2})")
    })?;
    let order = NeighborOrder::new(two.sim_matrix());
    let pos = two.position("pos").unwrap();
    let x2 = two.position("x2").unwrap();
    ensure(order.is_neighbor(pos, x2, 4), || {
        "x2 is not among the positive's 4 nearest".into()
    })?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "positive geometric/mixed rank: {g0}/{m0} base, {g1}/{m1} with one extra, {g2}/{m2} with both extras"
    ))
}

fn c4_latency() -> Outcome {
    let params = RnnParams::default();
    let at60 = bench_latency(&[60], 40, &params, 768, 4).map_err(|e| e.to_string())?;
    let rows = bench_latency(&[50, 100, 200, 400], 15, &params, 768, 5).map_err(|e| e.to_string())?;
    let mean60 = at60[0].mean_ms;
    ensure(mean60 < 50.0, || format!("mean {mean60:.3} ms at N = 60"))?;
    let mut ratios = Vec::new();
    for w in rows.windows(2) {
        let r = w[1].mean_ms / w[0].mean_ms;
        ensure((2.0..=8.0).contains(&r), || {
            format!("t({})/t({}) = {r:.2} outside [2, 8]", w[1].n, w[0].n)
        })?;
        ratios.push(format!("t({})/t({})={r:.2}", w[1].n, w[0].n));
    }
    Ok(format!("mean {mean60:.3} ms at N = 60; {}", ratios.join(", ")))
}

fn smoothing_corpus() -> synth::PlantedCorpus {
    PlantedConfig {
        num_queries: 100,
        relevant_per_query: 2,
        num_distractors: 1500,
        seed: 77,
        ..PlantedConfig::default()
    }
    .generate()
    .unwrap()
}

fn smoothing_preset(name: &str) -> SmoothParams {
    match name {
        "coder-tasb-smooth" => SmoothParams::default(),
        _ => SmoothParams {
            rnn: RnnParams {
                k: 19,
                k_exp: 8,
                tau: 0.5,
                lambda: 0.473,
                weight_fn: WeightFn::NegIdentity,
            },
            context_size: 63,
            b: 1.525,
            n_max: 32,
            f_n: NormFn::StdBased,
            inject_missing_gt: true,
        },
    }
}

fn label_sets(c: &synth::PlantedCorpus, p: &SmoothParams, mode: SmoothMode) -> Result<Vec<SoftLabelSet>, String> {
    let out = smooth_dataset(&c.run, &c.queries, &c.docs, &c.qrels, p, mode, 1, true).map_err(|e| e.to_string())?;
    Ok(out.labels)
}

fn c5_soft_label_validity() -> Outcome {
    let corpus = smoothing_corpus();
    let mut checked = 0;
    for preset in ["coder-tasb-smooth", "coder-cocondenser-smooth"] {
        let base = smoothing_preset(preset);
        let mut last: Option<Vec<f64>> = None;
        for b in [1.0, 1.222, 1.525, 2.0] {
            let p = SmoothParams { b, ..base };
            let sets = label_sets(&corpus, &p, SmoothMode::Evidence)?;
            ensure(sets.len() == 100, || format!("{preset}: {} label sets", sets.len()))?;
            for s in &sets {
                let total = s.total();
                ensure((total - 1.0).abs() <= 1e-9, || {
                    format!("{preset} b={b} {}: sum {total}", s.query_id)
                })?;
                ensure(s.entries.iter().all(|(_, p)| *p >= 0.0), || {
                    "negative probability".into()
                })?;
                let cap = p.n_max + s.gt_ids.len();
                ensure(s.support() <= cap, || {
                    format!("{preset} b={b} {}: support {} > {cap}", s.query_id, s.support())
                })?;
                checked += 1;
            }
            let masses: Vec<f64> = sets.iter().map(|s| s.gt_mass()).collect();
            if let Some(prev) = &last {
                for (i, (m, pm)) in masses.iter().zip(prev).enumerate() {
                    ensure(*m >= pm - 1e-12, || {
                        format!("{preset}: query {i} mass fell from {pm} to {m} at b={b}")
                    })?;
                }
            }
            last = Some(masses);
        }
    }
    Ok(format!(
        "{checked} distributions over 2 presets x 4 boosts valid; ground-truth mass nondecreasing in b"
    ))
}

fn c6_uniform_exactness() -> Outcome {
    let probs = uniform_smooth(5, 0.1, 0).map_err(|e| e.to_string())?;
    let set = SoftLabelSet {
        query_id: "q".into(),
        entries: probs.iter().enumerate().map(|(i, p)| (format!("d{i}"), *p)).collect(),
        gt_ids: vec!["d0".into()],
    };
    let line = to_jsonl(&[set], None);
    let want = r#"{"qid":"q","gt":["d0"],"labels":[["d0",0.9],["d1",0.025],["d2",0.025],["d3",0.025],["d4",0.025]]}"#;
    ensure(line.trim_end() == want, || format!("serialized as {}", line.trim_end()))?;

    let corpus = smoothing_corpus();
    let mut worst = 0.0f64;
    for preset in ["coder-tasb-smooth", "coder-cocondenser-smooth"] {
        let p = smoothing_preset(preset);
        let eb = label_sets(&corpus, &p, SmoothMode::Evidence)?;
        let un = label_sets(&corpus, &p, SmoothMode::Uniform { epsilon: None })?;
        for (e, u) in eb.iter().zip(&un) {
            ensure(e.query_id == u.query_id, || "query order differs".into())?;
            worst = worst.max(((1.0 - e.gt_mass()) - (1.0 - u.gt_mass())).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("off-ground-truth mass differs by {worst:e}"))?;
    Ok(format!(
        "(5, 0.1) serializes to [0.9, 0.025 x4]; matched-mass max deviation {worst:e}"
    ))
}

fn c7_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    let instances = 150;
    for _ in 0..instances {
        let n_docs = rng.random_range(1..60);
        let docs: Vec<String> = (0..n_docs).map(|i| format!("d{i}")).collect();
        let mut grades = std::collections::BTreeMap::new();
        for d in &docs {
            if rng.random_bool(0.25) {
                grades.insert(d.as_str(), rng.random_range(0..4u32));
            }
        }
        let extra = format!("unretrieved{}", rng.random_range(0..3));
        grades.insert(extra.as_str(), 1);
        let scored = docs.iter().map(|d| (d.clone(), rng.random::<f64>())).collect();
        let list = RankedList::from_scored("q", scored).unwrap();
        let mut run = RunFile::new();
        run.insert(list.clone()).unwrap();
        let mut qrels = Qrels::new();
        for (d, g) in &grades {
            qrels.insert("q", d, *g).unwrap();
        }
        let naive = NaiveQuery {
            ranking: list.doc_ids().collect(),
            grades,
        };
        let k = rng.random_range(1..30);
        let thr = rng.random_range(1..=2);
        let pairs = [
            (Metric::Mrr { k }, naive.reciprocal_rank(k, thr)),
            (Metric::Ndcg { k }, naive.ndcg(k)),
            (Metric::Recall { k }, naive.recall(k, thr)),
            (Metric::Map { k }, naive.average_precision(k, thr)),
        ];
        for (m, want) in pairs {
            let got = evaluate(&run, &qrels, m, thr).map_err(|e| e.to_string())?;
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;

    let one = |docs: &[&str]| {
        let mut r = RunFile::new();
        let n = docs.len();
        let scored = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.to_string(), (n - i) as f64))
            .collect();
        r.insert(RankedList::from_scored("q", scored).unwrap()).unwrap();
        r
    };
    let qr = Qrels::parse_str("q 0 r 1\n").unwrap();
    let ndcg = ndcg_at_k(&one(&["a", "r"]), &qr, 10).unwrap();
    ensure(ndcg == 1.0 / 3f64.log2() && format!("{ndcg:.4}") == "0.6309", || {
        format!("nDCG hand case {ndcg}")
    })?;
    let qr = Qrels::parse_str("q 0 r1 1\nq 0 r2 1\n").unwrap();
    let map = map_at_k(&one(&["r1", "x", "r2"]), &qr, 10, 1).unwrap();
    ensure(
        map == (1.0 + 2.0 / 3.0) / 2.0 && format!("{map:.4}") == "0.8333",
        || format!("MAP hand case {map}"),
    )?;
    Ok(format!(
        "{instances} random instances, max deviation {worst:e}; nDCG {ndcg:.4}, MAP {map:.4}"
    ))
}

fn scaled_context(ctx_vecs: &[(String, Vec<f32>)], q: &[f32], c: f32) -> RankingContext {
    let scaled: Vec<(String, Vec<f32>)> = ctx_vecs
        .iter()
        .map(|(id, v)| (id.clone(), v.iter().map(|x| x * c).collect()))
        .collect();
    let qs: Vec<f32> = q.iter().map(|x| x * c).collect();
    RankingContext::from_vectors("q", &qs, scaled.iter().map(|(id, v)| (id.as_str(), v.as_slice()))).unwrap()
}

fn c8_scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let params = RnnParams {
        k: 8,
        k_exp: 3,
        tau: 0.5,
        ..RnnParams::default()
    };
    let trials = 40;
    for t in 0..trials {
        let n = rng.random_range(10..=40);
        let dim = rng.random_range(2..=8);
        let q = synth::random_unit(&mut rng, dim);
        let docs: Vec<(String, Vec<f32>)> = (0..n)
            .map(|i| (format!("d{i}"), synth::random_unit(&mut rng, dim)))
            .collect();
        let mut reference = None;
        for c in [1.0f32, 0.01, 100.0] {
            let ctx = scaled_context(&docs, &q, c);
            let sim = ctx.sim_matrix();
            let mut sets = Vec::new();
            for i in 0..ctx.len() {
                sets.push(nn_set(i, sim, params.k).unwrap().members().to_vec());
                sets.push(reciprocal_set(i, sim, params.k).unwrap().members().to_vec());
                sets.push(
                    extended_reciprocal_set(i, sim, params.k, params.tau)
                        .unwrap()
                        .members()
                        .to_vec(),
                );
            }
            let order: Vec<String> = rerank_context(&ctx, &params, n)
                .unwrap()
                .doc_ids()
                .map(str::to_string)
                .collect();
            let gts = [ctx.position("d0").unwrap(), ctx.position("d1").unwrap()];
            let labels = recipro::smooth::evidence_labels(
                &ctx,
                &gts,
                &SmoothParams {
                    rnn: params,
                    n_max: 8,
                    ..SmoothParams::default()
                },
            )
            .unwrap();
            let now = (ctx.candidate_ids().to_vec(), sets, order, labels);
            match &reference {
                None => reference = Some(now),
                Some(r) => {
                    let parts = ["context order", "neighbor sets", "rerank order", "label order"];
                    let diff: Vec<&str> = [
                        r.0 != now.0,
                        r.1 != now.1,
                        r.2 != now.2,
                        !same_label_order(&r.3, &now.3),
                    ]
                    .iter()
                    .zip(parts)
                    .filter(|(d, _)| **d)
                    .map(|(_, p)| p)
                    .collect();
                    ensure(diff.is_empty(), || {
                        format!("trial {t}: {} change at scale {c}", diff.join(", "))
                    })?
                }
            }
        }
    }
    Ok(format!("{trials} contexts: NN, reciprocal, extended sets, rerank order identical, soft-label support identical and order consistent (1e-6 relative) for c in {{0.01, 1, 100}}"))
}

/// Same support, and the reference order is non-increasing under the new
/// probabilities up to a relative 1e-6 (the f32 input resolution is ~6e-8).
fn same_label_order(reference: &SoftLabelSet, now: &SoftLabelSet) -> bool {
    let support = |s: &SoftLabelSet| -> BTreeSet<String> {
        s.entries
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(d, _)| d.clone())
            .collect()
    };
    if support(reference) != support(now) {
        return false;
    }
    let probs: Vec<f64> = reference.entries.iter().map(|(d, _)| now.prob(d)).collect();
    probs
        .windows(2)
        .all(|w| w[0] >= w[1] - 1e-6 * w[0].abs().max(w[1].abs()))
}

const BIN: &str = env!("CARGO_BIN_EXE_recipro");

fn recipro(args: &[&str]) -> Result<Output, String> {
    let out = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`recipro {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("reading {}: {e}", p.display()))
}

/// Column layout of a latency CSV with timings blanked out.
fn bench_shape(text: &str) -> Result<Vec<String>, String> {
    text.lines()
        .map(|l| {
            if l.starts_with('#') || l.starts_with("n,") {
                return Ok(l.to_string());
            }
            let f: Vec<&str> = l.split(',').collect();
            ensure(f.len() == 3 && f[1..].iter().all(|x| x.parse::<f64>().is_ok()), || {
                format!("bad bench row `{l}`")
            })?;
            Ok(f[0].to_string())
        })
        .collect()
}

fn c9_cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let corpus = p("corpus");
    recipro(&[
        "synth",
        "--output",
        &corpus,
        "--num-queries",
        "30",
        "--num-distractors",
        "400",
        "--seed",
        "5",
    ])?;
    let c = |f: &str| format!("{corpus}/{f}");
    let (q, d, r, qr) = (c("queries.emb"), c("docs.emb"), c("run.txt"), c("qrels.txt"));
    let data = [
        "--queries",
        q.as_str(),
        "--docs",
        d.as_str(),
        "--run",
        r.as_str(),
        "--qrels",
        qr.as_str(),
    ];

    type Job = (&'static str, Vec<String>);
    let with_data = |extra: &[&str]| -> Vec<String> {
        extra
            .iter()
            .map(|s| s.to_string())
            .chain(data.iter().map(|s| s.to_string()))
            .collect()
    };
    let jobs: Vec<Job> = vec![
        (
            "synth",
            vec![
                "synth".into(),
                "--num-queries".into(),
                "30".into(),
                "--num-distractors".into(),
                "400".into(),
                "--seed".into(),
                "5".into(),
            ],
        ),
        ("rerank", with_data(&["rerank", "--preset", "coder-tasb-msmarco"])),
        ("smooth", with_data(&["smooth", "--preset", "coder-cocondenser-smooth"])),
        ("smooth-uniform", with_data(&["smooth", "--uniform"])),
        (
            "eval",
            vec!["eval".into(), "--run".into(), r.clone(), "--qrels".into(), qr.clone()],
        ),
        ("sweep", with_data(&["sweep", "--sizes", "10..50:10"])),
        (
            "bench",
            vec![
                "bench".into(),
                "--sizes".into(),
                "20,40".into(),
                "--trials".into(),
                "3".into(),
                "--dim".into(),
                "16".into(),
            ],
        ),
        ("convert", vec!["convert".into(), "--input".into(), d.clone()]),
        ("selftest", vec!["selftest".into(), "--trials".into(), "40".into()]),
    ];
    let mut runs = 0;
    for (name, args) in &jobs {
        let mut reference: Option<Vec<Vec<u8>>> = None;
        for (attempt, threads) in [1, 4, 8, 4].iter().enumerate() {
            let ext = if *name == "convert" { "tsv" } else { "out" };
            let target = p(&format!("{name}-{attempt}.{ext}"));
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            let t = threads.to_string();
            a.extend(["--threads", t.as_str(), "--output", target.as_str()]);
            let out = recipro(&a)?;
            runs += 1;
            let target = Path::new(&target);
            let mut artifacts = if *name == "synth" {
                ["queries.emb", "docs.emb", "qrels.txt", "run.txt"]
                    .iter()
                    .map(|f| read(&target.join(f)))
                    .collect()
            } else {
                vec![read(target), out.stdout.clone()]
            };
            if *name == "bench" {
                let shape = bench_shape(&String::from_utf8_lossy(&artifacts[0]))?;
                artifacts[0] = shape.join("\n").into_bytes();
            } else if *name != "selftest" {
                artifacts.push(out.stderr.clone());
            }
            match &reference {
                None => reference = Some(artifacts),
                Some(r) => ensure(r == &artifacts, || {
                    format!("`{name}` output differs with {threads} threads")
                })?,
            }
        }
    }
    Ok(format!(
        "{} commands x threads {{1, 4, 8}} plus a repeat: {runs} runs byte-identical",
        jobs.len()
    ))
}

/// Tuned on seeds 1000..1019, disjoint from the evaluation seeds 0..49.
fn efficacy_config() -> RerankConfig {
    RerankConfig {
        rnn: RnnParams {
            k: 8,
            k_exp: 1,
            tau: 0.0,
            lambda: 0.3,
            weight_fn: WeightFn::Binary,
        },
        context_size: 60,
        top_k: None,
        strict: true,
    }
}

fn c10_efficacy() -> Outcome {
    let cfg = efficacy_config();
    let metric = Metric::Mrr { k: 10 };
    let mut at_least = 0;
    let mut gain = 0.0;
    let seeds = 0..50u64;
    let trials = seeds.clone().count();
    for seed in seeds {
        let corpus = PlantedConfig {
            seed,
            ..PlantedConfig::default()
        }
        .generate()
        .map_err(|e| e.to_string())?;
        let base = evaluate(&corpus.run, &corpus.qrels, metric, 1).map_err(|e| e.to_string())?;
        let out = rerank_run(&corpus.run, &corpus.queries, &corpus.docs, &cfg).map_err(|e| e.to_string())?;
        let ours = evaluate(&out.run, &corpus.qrels, metric, 1).map_err(|e| e.to_string())?;
        at_least += usize::from(ours >= base);
        gain += ours - base;
    }
    let need = (0.95 * trials as f64).ceil() as usize;
    ensure(at_least >= need, || {
        format!("rNN >= baseline on only {at_least}/{trials} seeds")
    })?;
    Ok(format!(
        "rNN MRR@10 >= geometric on {at_least}/{trials} seeds, mean gain {:+.4}",
        gain / trials as f64
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("oracle equivalence", c1_oracle_equivalence),
        ("degenerate-mixture exactness", c2_degenerate_mixtures),
        ("toy-geometry reproduction", c3_toy_geometry),
        ("latency bound", c4_latency),
        ("soft-label validity", c5_soft_label_validity),
        ("uniform-smoothing exactness", c6_uniform_exactness),
        ("metric correctness", c7_metrics),
        ("scale invariance", c8_scale_invariance),
        ("CLI determinism", c9_cli_determinism),
        ("synthetic efficacy", c10_efficacy),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
