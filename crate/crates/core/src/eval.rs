//! Ranking metrics and benchmark runs over relevance judgements.
//!
//! Item ids are `module_name::kind::name` strings as produced by
//! [`Node::item_id`](crate::graph::Node::item_id).
//!
//! ```
//! use repograph::eval::{ndcg_at_k, mrr_at_k, Relevance};
//!
//! let rel = Relevance::from_pairs([("b", 1)]);
//! let ranking = ["a", "b", "c"];
//! assert!((ndcg_at_k(&ranking, &rel, 10).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-12);
//! assert_eq!(mrr_at_k(&ranking, &rel, 10).unwrap(), 0.5);
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cypher::run_entity_query;
use crate::encoders::{Embedder, Reranker};
use crate::graph::{CodeGraph, NodeId};
use crate::mcts::{search, SearchConfig, SearchError};
use crate::router::{route, QueryTranslator};

/// Cutoffs reported by benchmark runs.
pub const CUTOFFS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("query has no relevant items")]
pub struct NoRelevantItems;

/// Graded relevance per item id; only positive grades count as relevant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relevance(HashMap<String, u32>);

impl Relevance {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, u32)>) -> Self {
        Relevance(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn grade(&self, id: &str) -> u32 {
        self.0.get(id).copied().unwrap_or(0)
    }

    pub fn relevant_count(&self) -> usize {
        self.0.values().filter(|g| **g > 0).count()
    }

    fn check(&self) -> Result<(), NoRelevantItems> {
        if self.relevant_count() == 0 {
            Err(NoRelevantItems)
        } else {
            Ok(())
        }
    }
}

/// First occurrences only, truncated at `k`.
fn top_k<'a, S: AsRef<str>>(ranking: &'a [S], k: usize) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    ranking
        .iter()
        .map(|s| s.as_ref())
        .filter(|s| seen.insert(*s))
        .take(k)
        .collect()
}

/// DCG with gain `rel` and discount `1/log2(rank+1)`, over the ideal DCG at `k`.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], rel: &Relevance, k: usize) -> Result<f64, NoRelevantItems> {
    rel.check()?;
    let dcg: f64 = top_k(ranking, k)
        .iter()
        .enumerate()
        .map(|(i, id)| rel.grade(id) as f64 / ((i + 2) as f64).log2())
        .sum();
    let mut grades: Vec<u32> = rel.0.values().copied().filter(|g| *g > 0).collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let ideal: f64 = grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| *g as f64 / ((i + 2) as f64).log2())
        .sum();
    Ok(dcg / ideal)
}

pub fn recall_at_k<S: AsRef<str>>(ranking: &[S], rel: &Relevance, k: usize) -> Result<f64, NoRelevantItems> {
    rel.check()?;
    let hits = top_k(ranking, k).iter().filter(|id| rel.grade(id) > 0).count();
    Ok(hits as f64 / rel.relevant_count() as f64)
}

pub fn mrr_at_k<S: AsRef<str>>(ranking: &[S], rel: &Relevance, k: usize) -> Result<f64, NoRelevantItems> {
    rel.check()?;
    Ok(top_k(ranking, k)
        .iter()
        .position(|id| rel.grade(id) > 0)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64))
}

pub fn accuracy_at_k<S: AsRef<str>>(ranking: &[S], rel: &Relevance, k: usize) -> Result<f64, NoRelevantItems> {
    rel.check()?;
    Ok(if top_k(ranking, k).iter().any(|id| rel.grade(id) > 0) { 1.0 } else { 0.0 })
}

/// All metrics at [`CUTOFFS`], keyed like `ndcg@10`.
pub fn metric_block<S: AsRef<str>>(ranking: &[S], rel: &Relevance) -> Result<BTreeMap<String, f64>, NoRelevantItems> {
    let mut out = BTreeMap::new();
    for k in CUTOFFS {
        out.insert(format!("ndcg@{k}"), ndcg_at_k(ranking, rel, k)?);
        out.insert(format!("recall@{k}"), recall_at_k(ranking, rel, k)?);
        out.insert(format!("mrr@{k}"), mrr_at_k(ranking, rel, k)?);
        out.insert(format!("accuracy@{k}"), accuracy_at_k(ranking, rel, k)?);
    }
    Ok(out)
}

fn metric_names() -> Vec<String> {
    let mut names = Vec::new();
    for m in ["ndcg", "recall", "mrr", "accuracy"] {
        for k in CUTOFFS {
            names.push(format!("{m}@{k}"));
        }
    }
    names
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelItem {
    pub id: String,
    pub rel: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelQuery {
    pub qid: String,
    pub query: String,
    pub relevant: Vec<QrelItem>,
}

impl QrelQuery {
    pub fn relevance(&self) -> Relevance {
        Relevance::from_pairs(self.relevant.iter().map(|r| (r.id.clone(), r.rel)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Qrels {
    pub queries: Vec<QrelQuery>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("qrels line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("query {qid} lists item {id} twice")]
    DuplicateItem { qid: String, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Qrels {
    /// One JSON object per non-blank line.
    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let mut queries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let q: QrelQuery = serde_json::from_str(line).map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let mut seen = HashSet::new();
            for item in &q.relevant {
                if !seen.insert(&item.id) {
                    return Err(EvalError::DuplicateItem {
                        qid: q.qid.clone(),
                        id: item.id.clone(),
                    });
                }
            }
            queries.push(q);
        }
        Ok(Qrels { queries })
    }

    pub fn to_jsonl(&self) -> String {
        self.queries
            .iter()
            .map(|q| serde_json::to_string(q).expect("qrels serialize") + "\n")
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        Ok(std::fs::write(path, self.to_jsonl())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Mcts,
    Entity,
    Router,
}

/// Everything a benchmark run needs besides the graph and qrels.
pub struct Retrieval<'a> {
    pub mode: Mode,
    pub embedder: &'a dyn Embedder,
    pub reranker: &'a dyn Reranker,
    pub translator: &'a dyn QueryTranslator,
    pub config: SearchConfig,
    /// Record wall-clock timings in the report.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub qid: String,
    pub ranking: Vec<String>,
    /// Empty for queries without relevant items.
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub iterations: usize,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iteration_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub aggregate: BTreeMap<String, f64>,
    pub scored_queries: usize,
    /// Queries without any relevant item; not averaged.
    pub excluded_queries: Vec<String>,
    /// Queries whose retrieval failed; scored 0.
    pub failed_queries: Vec<String>,
    pub per_query: Vec<QueryResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Sweep curves as CSV: one row per iteration count.
    pub fn sweep_csv(&self) -> Option<String> {
        let sweep = self.sweep.as_ref()?;
        let names = metric_names();
        let mut out = format!("iterations,{}\n", names.join(","));
        for p in sweep {
            let cells: Vec<String> = names.iter().map(|n| format!("{}", p.metrics.get(n).copied().unwrap_or(0.0))).collect();
            out.push_str(&format!("{},{}\n", p.iterations, cells.join(",")));
        }
        Some(out)
    }
}

/// Mean of each metric over the scored queries.
pub fn macro_average(blocks: &[&BTreeMap<String, f64>]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if blocks.is_empty() {
        return out;
    }
    for name in metric_names() {
        let sum: f64 = blocks.iter().map(|b| b.get(&name).copied().unwrap_or(0.0)).sum();
        out.insert(name, sum / blocks.len() as f64);
    }
    out
}

fn retrieve(graph: &CodeGraph, query: &str, r: &Retrieval<'_>, config: &SearchConfig) -> Result<Vec<NodeId>, SearchError> {
    match r.mode {
        Mode::Mcts => Ok(search(graph, query, r.embedder, r.reranker, config)?.ids()),
        Mode::Entity => Ok(r
            .translator
            .translate(query, graph)
            .ok()
            .and_then(|text| run_entity_query(graph, &text).ok())
            .map(|t| t.ranked_nodes())
            .unwrap_or_default()),
        Mode::Router => Ok(route(graph, query, r.translator, r.embedder, r.reranker, config)?.ranking()),
    }
}

fn item_ids(graph: &CodeGraph, ids: &[NodeId]) -> Vec<String> {
    let mut seen = HashSet::new();
    ids.iter()
        .filter_map(|id| graph.node(*id))
        .map(|n| n.item_id())
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

struct Pass {
    results: Vec<QueryResult>,
    elapsed_ms: f64,
}

fn run_pass(graph: &CodeGraph, qrels: &Qrels, r: &Retrieval<'_>, config: &SearchConfig) -> Pass {
    let started = Instant::now();
    let results = qrels
        .queries
        .par_iter()
        .map(|q| {
            let (ranking, error) = match retrieve(graph, &q.query, r, config) {
                Ok(ids) => (item_ids(graph, &ids), None),
                Err(e) => {
                    log::warn!("query {} failed: {e}", q.qid);
                    (Vec::new(), Some(e.to_string()))
                }
            };
            let metrics = metric_block(&ranking, &q.relevance()).unwrap_or_default();
            QueryResult {
                qid: q.qid.clone(),
                ranking,
                metrics,
                error,
            }
        })
        .collect();
    Pass {
        results,
        elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
    }
}

fn aggregate(qrels: &Qrels, results: &[QueryResult]) -> BTreeMap<String, f64> {
    let blocks: Vec<&BTreeMap<String, f64>> = qrels
        .queries
        .iter()
        .zip(results)
        .filter(|(q, _)| q.relevance().relevant_count() > 0)
        .map(|(_, r)| &r.metrics)
        .collect();
    macro_average(&blocks)
}

/// Evaluate every query; with `sweep`, also rerun at each iteration count.
pub fn run_benchmark(graph: &CodeGraph, qrels: &Qrels, retrieval: &Retrieval<'_>, sweep: Option<&[usize]>) -> Report {
    let pass = run_pass(graph, qrels, retrieval, &retrieval.config);
    let excluded: Vec<String> = qrels
        .queries
        .iter()
        .filter(|q| q.relevance().relevant_count() == 0)
        .map(|q| q.qid.clone())
        .collect();
    let failed: Vec<String> = pass.results.iter().filter(|r| r.error.is_some()).map(|r| r.qid.clone()).collect();

    let sweep = sweep.map(|ts| {
        ts.iter()
            .map(|&t| {
                let config = SearchConfig {
                    iterations: t,
                    ..retrieval.config.clone()
                };
                let p = run_pass(graph, qrels, retrieval, &config);
                let per_iteration = if qrels.queries.is_empty() || t == 0 {
                    0.0
                } else {
                    p.elapsed_ms / (qrels.queries.len() * t) as f64
                };
                SweepPoint {
                    iterations: t,
                    metrics: aggregate(qrels, &p.results),
                    mean_iteration_ms: retrieval.timings.then_some(per_iteration),
                }
            })
            .collect()
    });

    Report {
        mode: retrieval.mode,
        aggregate: aggregate(qrels, &pass.results),
        scored_queries: qrels.queries.len() - excluded.len(),
        excluded_queries: excluded,
        failed_queries: failed,
        per_query: pass.results,
        sweep,
    }
}
