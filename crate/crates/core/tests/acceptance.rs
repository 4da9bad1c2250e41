//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repograph::annotate::{annotate_graph, embed_graph, DEFAULT_EMBED_BATCH, DEFAULT_SIZE_LIMIT};
use repograph::builder::{build, BuildOptions};
use repograph::cypher::{execute, parse_cypher, run_entity_query, Value};
use repograph::encoders::{EncoderError, Embedder, LocalDescriber, LocalEmbedder, LocalReranker, Reranker};
use repograph::eval::{
    accuracy_at_k, mrr_at_k, ndcg_at_k, recall_at_k, run_benchmark, Mode, Relevance, Retrieval,
};
use repograph::fixtures::{planted_qrels, random_graph, two_file_graph};
use repograph::graph::fuzz::MutationFuzzer;
use repograph::graph::{CodeGraph, EdgeKind, Node, NodeId, NodeKind};
use repograph::mcts::{retrieval_score, search, uct_score, ExpansionPolicy, SearchConfig};
use repograph::router::{route, RetrievalPath, RuleBasedTranslator};

type Verdict = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("fixture graph exactness", fixture_exactness),
        ("formula numerics", formula_numerics),
        ("exhaustive search equals brute force", exhaustive_equivalence),
        ("budgeted search quality", budgeted_quality),
        ("iteration sweep monotonicity", sweep_monotonicity),
        ("cypher executor equivalence", cypher_equivalence),
        ("metric correctness", metric_correctness),
        ("router behaviour", router_behaviour),
        ("round trip and schema fuzzing", round_trip_and_fuzzing),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------- shared oracles ----------

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Score every embedded node directly: one rerank, one cosine.
fn brute_force_ranking(g: &CodeGraph, query: &str, alpha: f64) -> Vec<(NodeId, f64)> {
    let q = LocalEmbedder::new(g.embedding_dim().unwrap_or(256)).embed(&[query]).unwrap().remove(0);
    let mut scored: Vec<(NodeId, f64)> = g
        .nodes()
        .filter_map(|n| {
            let e = n.embedding.as_ref()?;
            let doc = n.semantic_text().unwrap_or_default();
            let reward = (LocalReranker.rerank(query, &[&doc]).unwrap()[0] * 10.0).clamp(0.0, 10.0);
            Some((n.id, alpha * reward + (1.0 - alpha) * cosine(&q, e) * 10.0))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

fn embedded_graph(seed: u64, n: usize, density: f64) -> CodeGraph {
    let mut g = random_graph(seed, n, density);
    embed_graph(&mut g, &LocalEmbedder::default(), DEFAULT_EMBED_BATCH).unwrap();
    g
}

/// Three words drawn from the descriptions of two random nodes.
fn seeded_query(g: &CodeGraph, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let described: Vec<&Node> = g.nodes().filter(|n| n.description.is_some()).collect();
    let words = |n: &Node| -> Vec<String> {
        n.description.as_deref().unwrap().split_whitespace().map(str::to_string).collect()
    };
    let a = words(described.choose(&mut rng).unwrap());
    let b = words(described.choose(&mut rng).unwrap());
    let mut out: Vec<String> = a.choose_multiple(&mut rng, 2).cloned().collect();
    out.push(b.choose(&mut rng).unwrap().clone());
    out.join(" ")
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/two_file")
}

// ---------- 1 ----------

fn fixture_exactness() -> Verdict {
    let start = Instant::now();
    let out = build(&fixture_dir(), "demo", &BuildOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let g = &out.graph;
    let mut kinds: HashMap<NodeKind, usize> = HashMap::new();
    for n in g.nodes() {
        *kinds.entry(n.kind).or_default() += 1;
    }
    let expected_kinds = [
        (NodeKind::Repo, 1),
        (NodeKind::Module, 2),
        (NodeKind::Class, 2),
        (NodeKind::Method, 3),
        (NodeKind::Function, 3),
        (NodeKind::GlobalVariable, 1),
    ];
    ensure!(g.node_count() == 12, "{} nodes", g.node_count());
    ensure!(!kinds.contains_key(&NodeKind::Import), "import nodes remain");
    for (k, n) in expected_kinds {
        ensure!(kinds.get(&k).copied().unwrap_or(0) == n, "{k}: {:?}", kinds.get(&k));
    }
    let mut methods: Vec<&str> = g.nodes().filter(|n| n.kind == NodeKind::Method).map(|n| n.name.as_str()).collect();
    methods.sort();
    ensure!(methods == ["add", "divide", "multiply"], "methods {methods:?}");

    use EdgeKind::*;
    let expected: BTreeSet<(&str, EdgeKind, &str)> = [
        ("demo", Contains, "base"),
        ("demo", Contains, "extended"),
        ("base", Contains, "Calculator"),
        ("base", Contains, "format_result"),
        ("base", Contains, "precision"),
        ("extended", Contains, "Scientific"),
        ("extended", Contains, "quick_add"),
        ("extended", Contains, "demo"),
        ("Calculator", HasMethod, "add"),
        ("Calculator", HasMethod, "multiply"),
        ("Scientific", HasMethod, "divide"),
        ("Scientific", Inherits, "Calculator"),
        ("divide", Uses, "precision"),
        ("quick_add", Uses, "Calculator"),
        ("demo", Uses, "format_result"),
        ("demo", Uses, "quick_add"),
    ]
    .into_iter()
    .collect();
    let actual: BTreeSet<(&str, EdgeKind, &str)> = g
        .edges()
        .map(|(s, d, k)| (g.node(s).unwrap().name.as_str(), k, g.node(d).unwrap().name.as_str()))
        .collect();
    ensure!(g.edge_count() == expected.len(), "{} edges", g.edge_count());
    ensure!(actual == expected, "edge set differs: missing {:?}, extra {:?}",
        expected.difference(&actual).collect::<Vec<_>>(), actual.difference(&expected).collect::<Vec<_>>());
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("12 nodes, 16 edges, 0 imports in {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

// ---------- 2 ----------

struct Precise {
    consts: Consts,
}

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

impl Precise {
    fn f(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PREC)
    }
    fn n(&self, x: u64) -> BigFloat {
        BigFloat::from_u64(x.max(1), PREC)
    }
    fn to_f64(x: &BigFloat) -> f64 {
        format!("{x}").parse().expect("decimal output")
    }
    fn uct(&mut self, r: f64, n: u64, np: u64, c: f64) -> f64 {
        let exploit = self.f(r).div(&self.n(n), PREC, RM);
        let ln = self.n(np).ln(PREC, RM, &mut self.consts);
        let inner = self.f(2.0).mul(&ln, PREC, RM).div(&self.n(n), PREC, RM);
        let explore = self.f(c).mul(&inner.sqrt(PREC, RM), PREC, RM);
        Self::to_f64(&exploit.add(&explore, PREC, RM))
    }
    fn retrieval(&self, rs: f64, ns: u64, sim: f64, alpha: f64) -> f64 {
        let a = self.f(alpha);
        let one_minus = self.f(1.0).sub(&a, PREC, RM);
        let mean = self.f(rs).div(&self.n(ns), PREC, RM);
        let blend = a.mul(&mean, PREC, RM);
        let sim_part = one_minus.mul(&self.f(sim), PREC, RM).mul(&self.f(10.0), PREC, RM);
        Self::to_f64(&blend.add(&sim_part, PREC, RM))
    }
}

fn formula_numerics() -> Verdict {
    let mut p = Precise { consts: Consts::new().map_err(|e| format!("{e:?}"))? };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut guards = 0;
    let count = |rng: &mut ChaCha8Rng, i: usize| -> u64 {
        match i % 5 {
            0 => 0,
            1 => rng.random_range(0..3),
            _ => rng.random_range(1..1_000_000),
        }
    };
    for i in 0..1000 {
        let n = count(&mut rng, i);
        let np = count(&mut rng, i / 5 + i);
        if n == 0 || np == 0 {
            guards += 1;
        }
        let r = rng.random_range(0.0..10.0) * n.max(1) as f64;
        let c: f64 = rng.random_range(0.0..3.0);
        let got = uct_score(r, n, np, c);
        let want = p.uct(r, n, np, c);
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "uct({r}, {n}, {np}, {c}) = {got}, oracle {want}");

        let ns = count(&mut rng, i + 3);
        let rs = rng.random_range(0.0..10.0) * ns.max(1) as f64;
        let sim: f64 = rng.random_range(-1.0..1.0);
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let got = retrieval_score(rs, ns, sim, alpha);
        let want = p.retrieval(rs, ns, sim, alpha);
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "retrieval_score({rs}, {ns}, {sim}, {alpha}) = {got}, oracle {want}");
    }
    ensure!(guards >= 200, "only {guards} guard cases drawn");
    Ok(format!("2000 evaluations, {guards} with a zero count, max abs error {worst:.1e}"))
}

// ---------- 3, 4 ----------

fn search_graph(seed: u64) -> (CodeGraph, usize) {
    let n = 30 + (seed as usize * 37) % 91;
    let g = embedded_graph(seed, n, 0.05);
    let embedded = g.nodes().filter(|x| x.embedding.is_some()).count();
    (g, embedded)
}

fn exhaustive_equivalence() -> Verdict {
    let start = Instant::now();
    let mut sizes = Vec::new();
    for seed in 0..50u64 {
        let (g, embedded) = search_graph(seed);
        ensure!(embedded <= 120, "seed {seed}: {embedded} embedded nodes");
        sizes.push(embedded);
        let query = seeded_query(&g, seed);
        let cfg = SearchConfig {
            iterations: 10 * embedded + 10,
            budget: embedded + 10,
            k_init: 8,
            k_min: 2,
            ..SearchConfig::defaults_for(&g)
        };
        let r = search(&g, &query, &LocalEmbedder::default(), &LocalReranker, &cfg).map_err(|e| e.to_string())?;
        ensure!(r.ranked.len() == embedded, "seed {seed}: {} of {embedded} nodes reached the tree", r.ranked.len());
        let oracle: Vec<NodeId> = brute_force_ranking(&g, &query, cfg.alpha).into_iter().map(|x| x.0).collect();
        ensure!(r.ids() == oracle, "seed {seed}: ranking differs from brute force for {query:?}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "50/50 graphs of {}..={} embedded nodes in {:.1} s",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap(),
        elapsed.as_secs_f64()
    ))
}

/// Expansion width for the budgeted runs: one node enters the tree per
/// iteration, so `T` counts visited nodes directly.
const BUDGET_K: usize = 1;

fn budgeted_recall(policy: ExpansionPolicy) -> Result<(f64, f64), String> {
    let mut recalls = Vec::new();
    let mut coverage = Vec::new();
    for seed in 0..50u64 {
        let (g, embedded) = search_graph(seed);
        let query = seeded_query(&g, seed);
        let iterations = (0.4 * embedded as f64 / BUDGET_K as f64).floor() as usize;
        let cfg = SearchConfig {
            iterations,
            budget: embedded,
            k_init: BUDGET_K,
            k_min: BUDGET_K,
            policy,
            ..SearchConfig::defaults_for(&g)
        };
        let r = search(&g, &query, &LocalEmbedder::default(), &LocalReranker, &cfg).map_err(|e| e.to_string())?;
        let reached = r.ranked.len();
        if reached as f64 > 0.4 * embedded as f64 + 1e-9 {
            return Err(format!("seed {seed}: {reached} of {embedded} nodes simulated, over the 40% cap"));
        }
        coverage.push(reached as f64 / embedded as f64);
        let truth: BTreeSet<NodeId> = brute_force_ranking(&g, &query, cfg.alpha).into_iter().take(10).map(|x| x.0).collect();
        let got: BTreeSet<NodeId> = r.ids().into_iter().take(10).collect();
        recalls.push(truth.intersection(&got).count() as f64 / truth.len() as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(&recalls), mean(&coverage)))
}

fn budgeted_quality() -> Verdict {
    let (guided, cov) = budgeted_recall(ExpansionPolicy::Similarity)?;
    let (random, rcov) = budgeted_recall(ExpansionPolicy::Random { seed: 11 })?;
    let detail = format!(
        "mean Recall@10 {guided:.3} (random expansion {random:.3}); mean coverage {:.0}% / {:.0}%, k={BUDGET_K}",
        cov * 100.0,
        rcov * 100.0
    );
    ensure!(guided >= 0.8, "{detail}");
    ensure!(guided > random, "{detail}");
    Ok(detail)
}

// ---------- 5 ----------

fn sweep_monotonicity() -> Verdict {
    let sweep = [10, 25, 50, 100, 200];
    let seeds = 0..5u64;
    let mut sums = vec![0.0; sweep.len()];
    for seed in seeds.clone() {
        let mut g = random_graph(100 + seed, 150, 0.04);
        let qrels = planted_qrels(&mut g, 20, seed);
        embed_graph(&mut g, &LocalEmbedder::default(), DEFAULT_EMBED_BATCH).unwrap();
        let cfg = SearchConfig::defaults_for(&g);
        let retrieval = Retrieval {
            mode: Mode::Mcts,
            embedder: &LocalEmbedder::default(),
            reranker: &LocalReranker,
            translator: &RuleBasedTranslator,
            config: cfg,
            timings: false,
        };
        let report = run_benchmark(&g, &qrels, &retrieval, Some(&sweep));
        ensure!(report.failed_queries.is_empty(), "seed {seed}: failures {:?}", report.failed_queries);
        for (i, point) in report.sweep.unwrap().iter().enumerate() {
            sums[i] += point.metrics["recall@10"];
        }
    }
    let n = seeds.count() as f64;
    let curve: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let shown: Vec<String> = sweep.iter().zip(&curve).map(|(t, r)| format!("T={t}:{r:.3}")).collect();
    for w in curve.windows(2) {
        ensure!(w[1] >= w[0] - 0.02, "curve drops: {}", shown.join(" "));
    }
    Ok(shown.join(" "))
}

// ---------- 6 ----------

#[derive(Clone, Copy, PartialEq)]
enum Dir {
    Out,
    In,
    Either,
}

struct QNode {
    var: &'static str,
    label: Option<NodeKind>,
    name: Option<String>,
}

struct QRel {
    kinds: Vec<EdgeKind>,
    dir: Dir,
}

struct QChain {
    nodes: Vec<QNode>,
    rels: Vec<QRel>,
}

struct QClause {
    optional: bool,
    chains: Vec<QChain>,
}

struct Query {
    clauses: Vec<QClause>,
    ret: Vec<&'static str>,
    distinct: bool,
}

const NODE_KINDS: [NodeKind; 8] = [
    NodeKind::Repo,
    NodeKind::Module,
    NodeKind::Class,
    NodeKind::Function,
    NodeKind::Method,
    NodeKind::Field,
    NodeKind::GlobalVariable,
    NodeKind::Import,
];
const EDGE_KINDS: [EdgeKind; 5] = [EdgeKind::Contains, EdgeKind::HasMethod, EdgeKind::HasField, EdgeKind::Inherits, EdgeKind::Uses];
const VARS: [&str; 3] = ["a", "b", "c"];

fn random_query(rng: &mut ChaCha8Rng, g: &CodeGraph) -> Query {
    let names: Vec<String> = g.nodes().map(|n| n.name.clone()).collect();
    let present: Vec<EdgeKind> = g.edges().map(|e| e.2).collect();
    let kinds_present: Vec<NodeKind> = g.nodes().map(|n| n.kind).collect();
    let mut used: Vec<&'static str> = Vec::new();
    let mut clauses = Vec::new();
    for ci in 0..rng.random_range(1..=2) {
        let mut chains = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let len = rng.random_range(1..=3);
            let mut nodes = Vec::new();
            let mut rels = Vec::new();
            for i in 0..len {
                let prev: Option<&'static str> = nodes.last().map(|n: &QNode| n.var);
                let choices: Vec<&'static str> = VARS.iter().copied().filter(|v| Some(*v) != prev).collect();
                let var = *choices.choose(rng).unwrap();
                let first = !used.contains(&var);
                if first {
                    used.push(var);
                }
                let label = match rng.random_range(0..if first { 6 } else { 12 }) {
                    0 => Some(*NODE_KINDS.choose(rng).unwrap()),
                    1 => kinds_present.choose(rng).copied(),
                    _ => None,
                };
                let name = if rng.random_bool(if first { 0.1 } else { 0.02 }) {
                    Some(if rng.random_bool(0.9) { names.choose(rng).unwrap().clone() } else { "nope".into() })
                } else {
                    None
                };
                nodes.push(QNode { var, label, name });
                if i + 1 < len {
                    let kinds = match rng.random_range(0..4) {
                        0 => vec![],
                        1 => vec![*EDGE_KINDS.choose(rng).unwrap()],
                        2 => EDGE_KINDS.choose_multiple(rng, 2).copied().collect(),
                        _ => present.choose(rng).map(|k| vec![*k]).unwrap_or_default(),
                    };
                    let dir = [Dir::Out, Dir::In, Dir::Either][rng.random_range(0..3)];
                    rels.push(QRel { kinds, dir });
                }
            }
            chains.push(QChain { nodes, rels });
        }
        clauses.push(QClause { optional: ci > 0 && rng.random_bool(0.6), chains });
    }
    let k = rng.random_range(1..=used.len().min(2));
    let ret: Vec<&'static str> = used.choose_multiple(rng, k).copied().collect();
    Query { clauses, ret, distinct: rng.random_bool(0.3) }
}

fn render(q: &Query) -> String {
    let node = |n: &QNode| {
        let mut s = format!("({}", n.var);
        if let Some(l) = n.label {
            s.push_str(&format!(":{l}"));
        }
        if let Some(name) = &n.name {
            s.push_str(&format!(" {{name: '{name}'}}"));
        }
        s.push(')');
        s
    };
    let rel = |r: &QRel| {
        let names: Vec<&str> = r.kinds.iter().map(|k| k.as_str()).collect();
        let body = if names.is_empty() { "[]".to_string() } else { format!("[:{}]", names.join("|")) };
        match r.dir {
            Dir::Out if names.is_empty() => "-->".to_string(),
            Dir::Out => format!("-{body}->"),
            Dir::In => format!("<-{body}-"),
            Dir::Either => format!("-{body}-"),
        }
    };
    let mut out = String::new();
    for c in &q.clauses {
        out.push_str(if c.optional { "OPTIONAL MATCH " } else { "MATCH " });
        let chains: Vec<String> = c
            .chains
            .iter()
            .map(|ch| {
                let mut s = node(&ch.nodes[0]);
                for (r, n) in ch.rels.iter().zip(&ch.nodes[1..]) {
                    s.push_str(&rel(r));
                    s.push_str(&node(n));
                }
                s
            })
            .collect();
        out.push_str(&chains.join(", "));
        out.push('\n');
    }
    let items: Vec<String> = q.ret.iter().map(|v| format!("{v}.name")).collect();
    out.push_str(&format!("RETURN {}{}", if q.distinct { "DISTINCT " } else { "" }, items.join(", ")));
    out
}

type Env = HashMap<&'static str, Option<NodeId>>;

/// Enumerate every assignment of each clause's new variables; count one row
/// per combination of matching edges.
fn brute_force_rows(g: &CodeGraph, q: &Query) -> Vec<Vec<Option<String>>> {
    let ids: Vec<NodeId> = g.node_ids().collect();
    let edges: Vec<(NodeId, NodeId, EdgeKind)> = g.edges().collect();
    let edge_count = |a: NodeId, b: NodeId, r: &QRel| -> usize {
        let ok = |k: &EdgeKind| r.kinds.is_empty() || r.kinds.contains(k);
        let fwd = edges.iter().filter(|(s, d, k)| *s == a && *d == b && ok(k)).count();
        let back = edges.iter().filter(|(s, d, k)| *s == b && *d == a && ok(k)).count();
        match r.dir {
            Dir::Out => fwd,
            Dir::In => back,
            Dir::Either => fwd + back,
        }
    };
    let fits = |id: NodeId, n: &QNode| {
        let node = g.node(id).unwrap();
        n.label.is_none_or(|l| l == node.kind) && n.name.as_ref().is_none_or(|x| *x == node.name)
    };
    let mut rows: Vec<Env> = vec![HashMap::new()];
    for clause in &q.clauses {
        let mut fresh: Vec<&'static str> = Vec::new();
        for n in clause.chains.iter().flat_map(|c| &c.nodes) {
            if !rows.first().is_some_and(|r| r.contains_key(n.var)) && !fresh.contains(&n.var) {
                fresh.push(n.var);
            }
        }
        let mut next = Vec::new();
        for row in rows {
            let mut matched = 0;
            let total = ids.len().pow(fresh.len() as u32);
            for code in 0..total {
                let mut env = row.clone();
                let mut c = code;
                for v in &fresh {
                    env.insert(v, Some(ids[c % ids.len()]));
                    c /= ids.len();
                }
                let mut mult = 1usize;
                'chains: for chain in &clause.chains {
                    for (i, n) in chain.nodes.iter().enumerate() {
                        let Some(id) = env[n.var] else {
                            mult = 0;
                            break 'chains;
                        };
                        if !fits(id, n) {
                            mult = 0;
                            break 'chains;
                        }
                        if i > 0 {
                            let prev = env[chain.nodes[i - 1].var].unwrap();
                            mult *= edge_count(prev, id, &chain.rels[i - 1]);
                        }
                    }
                }
                for _ in 0..mult {
                    next.push(env.clone());
                }
                matched += mult;
            }
            if matched == 0 && clause.optional {
                let mut env = row.clone();
                for v in &fresh {
                    env.insert(v, None);
                }
                next.push(env);
            }
        }
        rows = next;
    }
    let mut out: Vec<Vec<Option<String>>> = rows
        .iter()
        .map(|env| q.ret.iter().map(|v| env[v].map(|id| g.node(id).unwrap().name.clone())).collect())
        .collect();
    if q.distinct {
        let mut seen = BTreeSet::new();
        out.retain(|r| seen.insert(r.clone()));
    }
    out
}

fn value_to_name(v: &Value) -> Result<Option<String>, String> {
    match v {
        Value::Null => Ok(None),
        Value::Str(s) => Ok(Some(s.clone())),
        other => Err(format!("unexpected value {other:?}")),
    }
}

fn example_queries() -> Result<usize, String> {
    let fn_node = |module: &str, name: &str| {
        Node::new(NodeKind::Function, format!("{module}.{name}"), name)
            .with("code", format!("def {name}(): pass"))
            .with("signature", format!("def {name}()"))
            .with("module_name", module)
    };
    let class_node = |module: &str, name: &str| {
        Node::new(NodeKind::Class, format!("{module}.{name}"), name)
            .with("code", format!("class {name}: pass"))
            .with("signature", format!("class {name}"))
            .with("module_name", module)
    };
    let method_node = |module: &str, class: &str, name: &str| {
        Node::new(NodeKind::Method, format!("{module}.{class}.{name}"), name)
            .with("code", format!("def {name}(self): pass"))
            .with("signature", format!("def {name}(self)"))
            .with("module_name", module)
            .with("class", class)
    };
    let module_node = |name: &str| Node::new(NodeKind::Module, name, name).with("local_name", name.rsplit('.').next().unwrap());
    let err = |e: repograph::graph::GraphError| e.to_string();
    let mut checked = 0;

    // Module listing classes.
    let mut g = CodeGraph::new();
    let repo = g.add_node(Node::new(NodeKind::Repo, "r", "r")).map_err(err)?;
    let db = g.add_node(module_node("database")).map_err(err)?;
    g.add_edge(repo, db, EdgeKind::Contains).map_err(err)?;
    for c in ["Table", "Session"] {
        let id = g.add_node(class_node("database", c)).map_err(err)?;
        g.add_edge(db, id, EdgeKind::Contains).map_err(err)?;
    }
    let t = run_entity_query(&g, "MATCH (r:Repo)-[:CONTAINS]->(m:Module {name: 'database'})\n      -[:CONTAINS]->(c:Class)\nRETURN c.name, c.code")
        .map_err(|e| e.to_string())?;
    ensure!(t.columns == ["c.name", "c.code"], "columns {:?}", t.columns);
    let mut got: Vec<String> = t.rows.iter().map(|r| r[0].as_str().unwrap_or("").to_string()).collect();
    got.sort();
    ensure!(got == ["Session", "Table"], "database classes {got:?}");
    checked += 1;

    // Optional dependency lookup, with and without dependencies.
    let mut g = CodeGraph::new();
    let m = g.add_node(module_node("tests.test_renderables")).map_err(err)?;
    let f = g.add_node(fn_node("tests.test_renderables", "test_renderables")).map_err(err)?;
    let lonely = g.add_node(fn_node("tests.test_renderables", "test_lonely")).map_err(err)?;
    let d1 = g.add_node(fn_node("tests.test_renderables", "render")).map_err(err)?;
    for x in [f, lonely, d1] {
        g.add_edge(m, x, EdgeKind::Contains).map_err(err)?;
    }
    g.add_edge(f, d1, EdgeKind::Uses).map_err(err)?;
    let q6 = "MATCH (m:Module {name: 'tests.test_renderables'})\n      -[:CONTAINS]->(f:Function {name: 'test_renderables'})\nOPTIONAL MATCH (f)-[:USES]->(dep)\nRETURN DISTINCT dep.name AS name, \n       dep.signature AS signature, \n       dep.code AS code";
    let t = run_entity_query(&g, q6).map_err(|e| e.to_string())?;
    ensure!(t.columns == ["name", "signature", "code"], "columns {:?}", t.columns);
    ensure!(t.rows.len() == 1 && t.rows[0][0].as_str() == Some("render"), "rows {:?}", t.rows);
    let t = run_entity_query(&g, &q6.replace("'test_renderables'}", "'test_lonely'}")).map_err(|e| e.to_string())?;
    ensure!(t.rows == vec![vec![Value::Null, Value::Null, Value::Null]], "lonely rows {:?}", t.rows);
    checked += 2;

    // Union of a method's dependencies with two named classes.
    let repo_name = "/work/repos/alert-system";
    let mut g = CodeGraph::new();
    let repo = g.add_node(Node::new(NodeKind::Repo, repo_name, repo_name)).map_err(err)?;
    let m = g.add_node(module_node("layers")).map_err(err)?;
    g.add_edge(repo, m, EdgeKind::Contains).map_err(err)?;
    let mut class_ids = HashMap::new();
    for c in ["BaseRMSLayerNorm", "BaseModule", "BaseLayerNorm", "Unrelated"] {
        let id = g.add_node(class_node("layers", c)).map_err(err)?;
        g.add_edge(m, id, EdgeKind::Contains).map_err(err)?;
        class_ids.insert(c, id);
    }
    let call = g.add_node(method_node("layers", "BaseRMSLayerNorm", "__call__")).map_err(err)?;
    g.add_edge(class_ids["BaseRMSLayerNorm"], call, EdgeKind::HasMethod).map_err(err)?;
    let helper = g.add_node(fn_node("layers", "rms")).map_err(err)?;
    g.add_edge(m, helper, EdgeKind::Contains).map_err(err)?;
    g.add_edge(call, helper, EdgeKind::Uses).map_err(err)?;
    g.add_edge(call, class_ids["BaseModule"], EdgeKind::Uses).map_err(err)?;
    let prefix = format!("MATCH (r:Repo {{name: '{repo_name}'}})-[:CONTAINS]->(m:Module)-[:CONTAINS]->\n");
    let q = format!(
        "{prefix}(c:Class {{name: 'BaseRMSLayerNorm'}})-[:HAS_METHOD]->\n(method {{name: '__call__'}})-[:USES]->(dep)\nRETURN DISTINCT dep, labels(dep) as label\nUNION\n\
         {prefix}(c:Class {{name: 'BaseModule'}})\nRETURN DISTINCT c as dep, labels(c) as label\nUNION\n\
         {prefix}(c:Class {{name: 'BaseLayerNorm'}})\nRETURN DISTINCT c as dep, labels(c) as label"
    );
    let t = run_entity_query(&g, &q).map_err(|e| e.to_string())?;
    ensure!(t.columns == ["dep", "label"], "columns {:?}", t.columns);
    let mut deps: Vec<String> = t
        .rows
        .iter()
        .map(|r| match &r[0] {
            Value::Node(n) => n.name.clone(),
            other => format!("{other:?}"),
        })
        .collect();
    deps.sort();
    ensure!(deps == ["BaseLayerNorm", "BaseModule", "rms"], "union deps {deps:?}");
    checked += 1;

    // Method dependencies under a module and class.
    let module = "src.alert.interference.reporting.admin.admin";
    let mut g = CodeGraph::new();
    let m = g.add_node(module_node(module)).map_err(err)?;
    let c = g.add_node(class_node(module, "ColumnTemplateAdmin")).map_err(err)?;
    g.add_edge(m, c, EdgeKind::Contains).map_err(err)?;
    let meth = g.add_node(method_node(module, "ColumnTemplateAdmin", "get_client_data")).map_err(err)?;
    g.add_edge(c, meth, EdgeKind::HasMethod).map_err(err)?;
    for dep in ["load_client", "format_row"] {
        let id = g.add_node(fn_node(module, dep)).map_err(err)?;
        g.add_edge(m, id, EdgeKind::Contains).map_err(err)?;
        g.add_edge(meth, id, EdgeKind::Uses).map_err(err)?;
    }
    let q = format!(
        "MATCH (m:Module {{name: '{module}'}})\n      -[:CONTAINS]->(c:Class {{name: 'ColumnTemplateAdmin'}})\n      -[:HAS_METHOD]->(method {{name: 'get_client_data'}})\nOPTIONAL MATCH (method)-[:USES]->(dep)\nRETURN DISTINCT dep.name AS name, \n       dep.signature AS signature, \n       dep.code AS code"
    );
    let t = run_entity_query(&g, &q).map_err(|e| e.to_string())?;
    let mut names: Vec<&str> = t.rows.iter().filter_map(|r| r[0].as_str()).collect();
    names.sort();
    ensure!(names == ["format_row", "load_client"], "method deps {names:?}");
    checked += 1;
    Ok(checked)
}

fn cypher_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut nonempty = 0;
    let mut optional = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=24);
        let density = rng.random_range(0.1..0.5);
        let g = random_graph(case, n, density);
        ensure!(g.node_count() <= 30, "case {case}: {} nodes", g.node_count());
        let q = random_query(&mut rng, &g);
        let text = render(&q);
        let plan = parse_cypher(&text).map_err(|e| format!("case {case}: {e}\n{text}"))?;
        let table = execute(&g, &plan);
        let mut got: Vec<Vec<Option<String>>> = table
            .rows
            .iter()
            .map(|r| r.iter().map(value_to_name).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?;
        let mut want = brute_force_rows(&g, &q);
        got.sort();
        want.sort();
        ensure!(got == want, "case {case}: {} rows vs brute force {}\n{text}", got.len(), want.len());
        if !want.is_empty() {
            nonempty += 1;
        }
        if q.clauses.iter().any(|c| c.optional) {
            optional += 1;
        }
    }
    let examples = example_queries()?;
    Ok(format!("100/100 random cases ({nonempty} non-empty, {optional} with OPTIONAL MATCH); {examples} example queries"))
}

// ---------- 7 ----------

fn reference_metrics(ranking: &[String], rel: &HashMap<String, u32>, k: usize) -> [f64; 4] {
    let mut seen = BTreeSet::new();
    let top: Vec<&String> = ranking.iter().filter(|x| seen.insert(x.as_str())).take(k).collect();
    let grade = |x: &String| rel.get(x).copied().unwrap_or(0);
    let positives = rel.values().filter(|&&r| r > 0).count() as f64;
    let mut dcg = 0.0;
    for (i, x) in top.iter().enumerate() {
        dcg += grade(x) as f64 / ((i + 2) as f64).log2();
    }
    let mut ideal: Vec<u32> = rel.values().copied().filter(|&r| r > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &r)| r as f64 / ((i + 2) as f64).log2()).sum();
    let hits = top.iter().filter(|x| grade(x) > 0).count() as f64;
    let first = top.iter().position(|x| grade(x) > 0);
    [
        dcg / idcg,
        hits / positives,
        first.map_or(0.0, |p| 1.0 / (p + 1) as f64),
        if first.is_some() { 1.0 } else { 0.0 },
    ]
}

fn metric_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let pool: Vec<String> = (0..rng.random_range(1..30)).map(|i| format!("doc{i}")).collect();
        let take = rng.random_range(0..=pool.len());
        let mut ranking: Vec<String> = pool.choose_multiple(&mut rng, take).cloned().collect();
        if rng.random_bool(0.2) && !ranking.is_empty() {
            let dup = ranking[rng.random_range(0..ranking.len())].clone();
            ranking.insert(rng.random_range(0..=ranking.len()), dup);
        }
        let mut rel: HashMap<String, u32> = HashMap::new();
        let judged = rng.random_range(1..=pool.len().min(6));
        for d in pool.choose_multiple(&mut rng, judged) {
            rel.insert(d.clone(), rng.random_range(0..=3));
        }
        let first = rel.keys().next().unwrap().clone();
        rel.insert(first, rng.random_range(1..=3));
        let k = rng.random_range(1..=12);
        let relevance = Relevance::from_pairs(rel.iter().map(|(a, b)| (a.clone(), *b)));
        let got = [
            ndcg_at_k(&ranking, &relevance, k).unwrap(),
            recall_at_k(&ranking, &relevance, k).unwrap(),
            mrr_at_k(&ranking, &relevance, k).unwrap(),
            accuracy_at_k(&ranking, &relevance, k).unwrap(),
        ];
        let want = reference_metrics(&ranking, &rel, k);
        for (m, (a, b)) in got.iter().zip(want).enumerate() {
            let err = (a - b).abs();
            worst = worst.max(err);
            ensure!(err <= 1e-12, "case {case} metric {m}: {a} vs reference {b}");
        }
    }
    let one = Relevance::from_pairs([("x", 1)]);
    let ndcg = ndcg_at_k(&["y", "x"], &one, 10).unwrap();
    ensure!(ndcg == 1.0 / 3f64.log2(), "worked NDCG {ndcg}");
    let mrr = mrr_at_k(&["y", "z", "x"], &one, 10).unwrap();
    ensure!(mrr == 1.0 / 3.0, "worked MRR {mrr}");
    Ok(format!("4000 metric values, max abs error {worst:.1e}; worked NDCG {ndcg:.5}, MRR {mrr:.5}"))
}

// ---------- 8 ----------

struct Counting(AtomicUsize);

impl Reranker for Counting {
    fn rerank(&self, query: &str, docs: &[&str]) -> Result<Vec<f64>, EncoderError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        LocalReranker.rerank(query, docs)
    }
}

const PARAPHRASE: &str = "Where is the code for addition?";

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/router_paraphrase.json")
}

fn router_behaviour() -> Verdict {
    let mut g = two_file_graph();
    annotate_graph(&mut g, &LocalDescriber::default(), DEFAULT_SIZE_LIMIT).map_err(|e| e.to_string())?;
    embed_graph(&mut g, &LocalEmbedder::default(), DEFAULT_EMBED_BATCH).map_err(|e| e.to_string())?;
    let cfg = SearchConfig::defaults_for(&g);

    let counter = Counting(AtomicUsize::new(0));
    let entity = route(&g, "Show me the add method of Calculator", &RuleBasedTranslator, &LocalEmbedder::default(), &counter, &cfg)
        .map_err(|e| e.to_string())?;
    ensure!(entity.path == RetrievalPath::Entity, "identifier query went to {:?}", entity.path);
    ensure!(counter.0.load(Ordering::SeqCst) == 0, "entity path called the reranker");
    let entity_names: Vec<String> = entity.ranking().iter().map(|id| g.node(*id).unwrap().name.clone()).collect();
    ensure!(entity_names.first().map(String::as_str) == Some("add"), "entity rows {entity_names:?}");

    let response = route(&g, PARAPHRASE, &RuleBasedTranslator, &LocalEmbedder::default(), &counter, &cfg)
        .map_err(|e| e.to_string())?;
    ensure!(response.path == RetrievalPath::Mcts, "paraphrase went to {:?}", response.path);
    let ranking: Vec<String> = response.ranking().iter().map(|id| g.node(*id).unwrap().item_id()).collect();
    let oracle: Vec<String> = brute_force_ranking(&g, PARAPHRASE, cfg.alpha)
        .into_iter()
        .take(cfg.budget)
        .map(|(id, _)| g.node(id).unwrap().item_id())
        .collect();
    let golden_file = golden_path();
    if std::env::var_os("REPOGRAPH_BLESS").is_some() {
        let body = serde_json::json!({ "query": PARAPHRASE, "ranking": oracle });
        std::fs::write(&golden_file, serde_json::to_string_pretty(&body).unwrap() + "\n").map_err(|e| e.to_string())?;
    }
    let golden: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&golden_file).map_err(|e| format!("{}: {e}", golden_file.display()))?)
            .map_err(|e| e.to_string())?;
    let pinned: Vec<String> = golden["ranking"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    ensure!(oracle == pinned, "brute force no longer matches the golden file: {oracle:?}");
    ensure!(ranking == pinned, "search ranking {ranking:?} differs from golden {pinned:?}");
    let add_rank = ranking.iter().position(|x| x == "base::Method::add");
    ensure!(add_rank.is_some_and(|r| r < 3), "add at {add_rank:?}");
    Ok(format!(
        "entity path with 0 reranker calls; paraphrase via search, add at rank {}, {} items match golden",
        add_rank.unwrap() + 1,
        pinned.len()
    ))
}

// ---------- 9 ----------

fn legal(src: NodeKind, kind: EdgeKind, dst: NodeKind) -> bool {
    use EdgeKind::*;
    use NodeKind::*;
    let table: &[(NodeKind, EdgeKind, &[NodeKind])] = &[
        (Repo, Contains, &[Module]),
        (Module, Contains, &[Module, Class, Function, GlobalVariable]),
        (Class, Contains, &[Class]),
        (Function, Contains, &[Function, Class]),
        (Method, Contains, &[Function, Class]),
        (Class, HasMethod, &[Method]),
        (Class, HasField, &[Field]),
        (Class, Inherits, &[Class, Import]),
        (Class, Uses, &[Class, Function, Method, GlobalVariable, Module, Import]),
        (Function, Uses, &[Class, Function, Method, GlobalVariable, Module, Import]),
        (Method, Uses, &[Class, Function, Method, GlobalVariable, Module, Import]),
        (GlobalVariable, Uses, &[Class, Function, Method, GlobalVariable, Module, Import]),
    ];
    table.iter().any(|(s, k, ds)| *s == src && *k == kind && ds.contains(&dst))
}

fn same_graph(a: &CodeGraph, b: &CodeGraph) -> bool {
    let bits = |n: &Node| n.embedding.as_ref().map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    a.node_count() == b.node_count()
        && a.nodes().zip(b.nodes()).all(|(x, y)| x == y && bits(x) == bits(y))
        && a.edges().collect::<Vec<_>>() == b.edges().collect::<Vec<_>>()
        && a.embedding_dim() == b.embedding_dim()
}

fn round_trip_and_fuzzing() -> Verdict {
    let mut bytes_total = 0;
    for i in 0..1000u64 {
        let n = (i as usize * 7) % 90;
        let density = (i % 6) as f64 * 0.04;
        let mut g = random_graph(i, n, density);
        if i % 3 == 0 {
            embed_graph(&mut g, &LocalEmbedder::new(16 + (i as usize % 5)), DEFAULT_EMBED_BATCH).map_err(|e| e.to_string())?;
        }
        let bytes = g.to_jsonl_bytes();
        let back = CodeGraph::from_jsonl_bytes(&bytes).map_err(|e| format!("graph {i}: {e}"))?;
        ensure!(back.to_jsonl_bytes() == bytes, "graph {i}: bytes changed on round trip");
        ensure!(same_graph(&g, &back), "graph {i}: content changed on round trip");
        bytes_total += bytes.len();
    }

    let mut illegal = 0;
    let mut dirty_rejections = 0;
    let (mut applied, mut rejected) = (0, 0);
    for seed in 0..40 {
        let mut f = MutationFuzzer::new(seed);
        for _ in 0..500 {
            let before = f.graph().to_jsonl_bytes();
            let (_, result) = f.step();
            let g = f.graph();
            if result.is_err() && g.to_jsonl_bytes() != before {
                dirty_rejections += 1;
            }
            let bad_edge = g.edges().any(|(s, d, k)| match (g.node(s), g.node(d)) {
                (Some(a), Some(b)) => s == d || !legal(a.kind, k, b.kind),
                _ => true,
            });
            if bad_edge || g.validate().is_err() {
                illegal += 1;
            }
        }
        applied += f.stats.applied;
        rejected += f.stats.rejected;
    }
    ensure!(illegal == 0, "{illegal} illegal states");
    ensure!(dirty_rejections == 0, "{dirty_rejections} rejected mutations changed the graph");
    Ok(format!(
        "1000 graphs ({} KiB) round-trip bit-exactly; fuzzer: {applied} applied, {rejected} rejected, 0 illegal states",
        bytes_total / 1024
    ))
}
