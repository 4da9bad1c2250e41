//! Monte Carlo tree search over the code graph.
//!
//! Each iteration selects a tree node by UCT, attaches its most query-similar
//! unvisited graph neighbors, scores all of them with one batched reranker
//! call and backpropagates the rewards. The final ranking mixes the mean
//! simulation reward with the bi-encoder similarity.
//!
//! ```
//! use repograph::annotate::{annotate_graph, embed_graph, DEFAULT_SIZE_LIMIT, DEFAULT_EMBED_BATCH};
//! use repograph::encoders::{LocalDescriber, LocalEmbedder, LocalReranker};
//! use repograph::fixtures::two_file_graph;
//! use repograph::mcts::{search, SearchConfig};
//!
//! let mut graph = two_file_graph();
//! annotate_graph(&mut graph, &LocalDescriber::default(), DEFAULT_SIZE_LIMIT).unwrap();
//! embed_graph(&mut graph, &LocalEmbedder::default(), DEFAULT_EMBED_BATCH).unwrap();
//!
//! let config = SearchConfig::defaults_for(&graph);
//! let result = search(&graph, "Where is the code for addition?", &LocalEmbedder::default(), &LocalReranker, &config).unwrap();
//! assert!(result.ranked.iter().take(3).any(|r| r.node.name == "add"));
//! ```

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoders::{cosine, Embedder, EncoderError, Reranker};
use crate::graph::{CodeGraph, Direction, NodeId, NodeKind};

pub const DEFAULT_K_MIN: usize = 20;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_ITERATIONS: usize = 200;
pub const DEFAULT_BUDGET: usize = 10;

/// Final ranking formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    /// `α·R_s/max(1,N_s) + (1−α)·sim·10`
    #[default]
    SimulationMean,
    /// `α·R/max(1,N) + (1−α)·sim`
    VisitMean,
}

/// How expansion picks among candidate neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionPolicy {
    /// Highest bi-encoder similarity first.
    #[default]
    Similarity,
    /// Uniform sample; a baseline for comparison.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    pub c: f64,
    pub alpha: f64,
    pub k_init: usize,
    pub k_min: usize,
    pub budget: usize,
    pub iterations: usize,
    /// Defaults to the Repo node.
    pub root: Option<NodeId>,
    pub extraction: Extraction,
    pub policy: ExpansionPolicy,
}

/// `1 / (8·√ln(2·max(N,1)))` for `N` modules.
pub fn default_exploration(modules: usize) -> f64 {
    1.0 / (8.0 * (2.0 * modules.max(1) as f64).ln().sqrt())
}

impl SearchConfig {
    /// Defaults derived from the graph's module count.
    pub fn defaults_for(graph: &CodeGraph) -> Self {
        let modules = graph.count_kind(NodeKind::Module);
        SearchConfig {
            c: default_exploration(modules),
            alpha: DEFAULT_ALPHA,
            k_init: (modules / 2).max(DEFAULT_K_MIN),
            k_min: DEFAULT_K_MIN,
            budget: DEFAULT_BUDGET,
            iterations: DEFAULT_ITERATIONS,
            root: None,
            extraction: Extraction::default(),
            policy: ExpansionPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.k_min < 1 {
            return bad("k_min must be at least 1");
        }
        if self.k_init < self.k_min {
            return bad("k_init must be at least k_min");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if self.budget < 1 {
            return bad("budget must be at least 1");
        }
        if !self.c.is_finite() || self.c < 0.0 {
            return bad("c must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("graph has no root node")]
    NoRoot,
    #[error("root {0} is not in the graph")]
    UnknownRoot(NodeId),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// `R/max(1,N) + c·√(2·ln max(1,N_parent) / max(1,N))`.
pub fn uct_score(total_reward: f64, visits: u64, parent_visits: u64, c: f64) -> f64 {
    let n = visits.max(1) as f64;
    let exploit = total_reward / n;
    let explore = (2.0 * (parent_visits.max(1) as f64).ln() / n).sqrt();
    exploit + c * explore
}

/// `α·R_s/max(1,N_s) + (1−α)·sim·10`.
pub fn retrieval_score(sim_reward: f64, sim_visits: u64, sim: f64, alpha: f64) -> f64 {
    alpha * (sim_reward / sim_visits.max(1) as f64) + (1.0 - alpha) * sim * 10.0
}

/// `α·R/max(1,N) + (1−α)·sim`.
pub fn visit_mean_score(total_reward: f64, visits: u64, sim: f64, alpha: f64) -> f64 {
    alpha * (total_reward / visits.max(1) as f64) + (1.0 - alpha) * sim
}

/// Map a raw reranker score to a reward in `[0, 10]`.
pub fn reward_from_raw(raw: f64) -> f64 {
    (raw * 10.0).clamp(0.0, 10.0)
}

/// Next expansion width.
pub fn halve_width(k: usize, k_min: usize) -> usize {
    (k / 2).max(k_min)
}

/// Score `texts` against `query` in one reranker call.
pub fn simulate_batch(reranker: &dyn Reranker, query: &str, texts: &[&str]) -> Result<Vec<f64>, EncoderError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let raw = reranker.rerank(query, texts)?;
    if raw.len() != texts.len() {
        return Err(EncoderError::LengthMismatch {
            expected: texts.len(),
            got: raw.len(),
        });
    }
    Ok(raw.into_iter().map(reward_from_raw).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub graph_node: NodeId,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub visits: u64,
    pub total_reward: f64,
    pub sim_visits: u64,
    pub sim_reward: f64,
    pub fully_expanded: bool,
    /// Fully expanded with every child exhausted.
    pub exhausted: bool,
    pub sim_to_query: f64,
}

/// Search tree stored as an arena; index 0 is the root.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<TreeNode>,
    members: HashSet<NodeId>,
}

impl SearchTree {
    pub fn new(root: NodeId, sim_to_query: f64) -> Self {
        let mut t = SearchTree {
            nodes: Vec::new(),
            members: HashSet::new(),
        };
        t.push(root, None, sim_to_query);
        t
    }

    fn push(&mut self, graph_node: NodeId, parent: Option<usize>, sim_to_query: f64) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(TreeNode {
            graph_node,
            parent,
            children: Vec::new(),
            visits: 0,
            total_reward: 0.0,
            sim_visits: 0,
            sim_reward: 0.0,
            fully_expanded: false,
            exhausted: false,
            sim_to_query,
        });
        self.members.insert(graph_node);
        if let Some(p) = parent {
            self.nodes[p].children.push(idx);
        }
        idx
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, idx: usize) -> &TreeNode {
        &self.nodes[idx]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.members.contains(&id)
    }

    /// Attach `graph_node` under `parent` without any checks on the graph.
    pub fn attach(&mut self, parent: usize, graph_node: NodeId, sim_to_query: f64) -> usize {
        assert!(!self.contains(graph_node), "{graph_node} is already in the tree");
        self.push(graph_node, Some(parent), sim_to_query)
    }

    /// UCT of a non-root node.
    pub fn uct(&self, idx: usize, c: f64) -> f64 {
        let n = &self.nodes[idx];
        let parent = n.parent.map_or(0, |p| self.nodes[p].visits);
        uct_score(n.total_reward, n.visits, parent, c)
    }

    /// Neighbors (both directions, any edge kind) not yet in the tree and carrying an embedding.
    pub fn candidates(&self, graph: &CodeGraph, idx: usize) -> Vec<NodeId> {
        let id = self.nodes[idx].graph_node;
        let mut out: Vec<NodeId> = graph
            .neighbors(id, Direction::Both, None)
            .unwrap_or_default()
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| !self.contains(*n))
            .filter(|n| graph.node(*n).is_some_and(|node| node.embedding.is_some()))
            .collect();
        out.dedup();
        out
    }

    fn mark_fully_expanded(&mut self, idx: usize) {
        self.nodes[idx].fully_expanded = true;
        let mut at = Some(idx);
        while let Some(i) = at {
            let n = &self.nodes[i];
            if n.exhausted || !n.fully_expanded || !n.children.iter().all(|c| self.nodes[*c].exhausted) {
                break;
            }
            self.nodes[i].exhausted = true;
            at = self.nodes[i].parent;
        }
    }

    /// Pick the node to expand next, or `None` when nothing reachable is left.
    ///
    /// Descends by argmax UCT (first child wins ties) through children that
    /// are not exhausted. At the bottom, a node without candidates is marked
    /// fully expanded and its ancestors are tried, nearest first.
    pub fn select(&mut self, graph: &CodeGraph, c: f64) -> Option<usize> {
        loop {
            if self.nodes[0].exhausted {
                return None;
            }
            let mut curr = 0;
            loop {
                let mut best: Option<(usize, f64)> = None;
                for &child in &self.nodes[curr].children {
                    if self.nodes[child].exhausted {
                        continue;
                    }
                    let u = self.uct(child, c);
                    if best.is_none_or(|(_, b)| u > b) {
                        best = Some((child, u));
                    }
                }
                match best {
                    Some((child, _)) => curr = child,
                    None => break,
                }
            }
            let mut at = Some(curr);
            while let Some(i) = at {
                if !self.nodes[i].fully_expanded {
                    if !self.candidates(graph, i).is_empty() {
                        return Some(i);
                    }
                    self.mark_fully_expanded(i);
                }
                at = self.nodes[i].parent;
            }
        }
    }

    /// Attach up to `k` candidates of `idx` as children; returns their tree indices.
    ///
    /// With no candidates the node is marked fully expanded.
    pub fn expand(
        &mut self,
        graph: &CodeGraph,
        idx: usize,
        query_embedding: &[f64],
        k: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Vec<usize> {
        let candidates = self.candidates(graph, idx);
        if candidates.is_empty() {
            self.mark_fully_expanded(idx);
            return Vec::new();
        }
        let sim = |id: NodeId| {
            graph
                .node(id)
                .and_then(|n| n.embedding.as_deref())
                .map_or(0.0, |e| cosine(query_embedding, e))
        };
        let mut scored: Vec<(NodeId, f64)> = candidates.into_iter().map(|id| (id, sim(id))).collect();
        let chosen: Vec<(NodeId, f64)> = match rng {
            Some(rng) => scored.choose_multiple(rng, k).copied().collect(),
            None => {
                scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                scored.truncate(k);
                scored
            }
        };
        chosen.into_iter().map(|(id, s)| self.attach(idx, id, s)).collect()
    }

    /// Add `reward` along the path to the root; the evaluated node also gets a simulation visit.
    pub fn backpropagate(&mut self, idx: usize, reward: f64) {
        self.nodes[idx].sim_visits += 1;
        self.nodes[idx].sim_reward += reward;
        let mut at = Some(idx);
        while let Some(i) = at {
            self.nodes[i].visits += 1;
            self.nodes[i].total_reward += reward;
            at = self.nodes[i].parent;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStub {
    pub kind: NodeKind,
    pub name: String,
    pub module_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedNode {
    #[serde(skip)]
    pub id: NodeId,
    pub node: NodeStub,
    pub score: f64,
    pub visits: u64,
    pub mean_sim_reward: f64,
    pub bi_encoder_sim: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResult {
    pub ranked: Vec<RankedNode>,
    pub iterations_run: usize,
    /// Expansion width used at each expansion.
    pub widths: Vec<usize>,
    pub reranker_calls: usize,
    /// Set when the reranker failed mid-search.
    pub partial: bool,
}

impl SearchResult {
    pub fn ids(&self) -> Vec<NodeId> {
        self.ranked.iter().map(|r| r.id).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.ranked).expect("ranking serializes")
    }
}

fn stub(graph: &CodeGraph, id: NodeId) -> NodeStub {
    let n = graph.node(id).expect("tree nodes exist in the graph");
    NodeStub {
        kind: n.kind,
        name: n.name.clone(),
        module_name: n.module_name.clone(),
    }
}

fn document(graph: &CodeGraph, id: NodeId) -> String {
    graph.node(id).and_then(|n| n.semantic_text()).unwrap_or_default()
}

/// Rank simulated tree nodes, best first, ties by node id.
pub fn extract(graph: &CodeGraph, tree: &SearchTree, config: &SearchConfig) -> Vec<RankedNode> {
    let mut ranked: Vec<RankedNode> = tree
        .nodes()
        .iter()
        .filter(|n| n.sim_visits > 0)
        .map(|n| {
            let score = match config.extraction {
                Extraction::SimulationMean => retrieval_score(n.sim_reward, n.sim_visits, n.sim_to_query, config.alpha),
                Extraction::VisitMean => visit_mean_score(n.total_reward, n.visits, n.sim_to_query, config.alpha),
            };
            RankedNode {
                id: n.graph_node,
                node: stub(graph, n.graph_node),
                score,
                visits: n.visits,
                mean_sim_reward: n.sim_reward / n.sim_visits.max(1) as f64,
                bi_encoder_sim: n.sim_to_query,
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    ranked.truncate(config.budget);
    ranked
}

/// Run the search and return the top `budget` visited nodes.
pub fn search(
    graph: &CodeGraph,
    query: &str,
    embedder: &dyn Embedder,
    reranker: &dyn Reranker,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let root = match config.root {
        Some(r) if graph.contains(r) => r,
        Some(r) => return Err(SearchError::UnknownRoot(r)),
        None => graph.repo_id().ok_or(SearchError::NoRoot)?,
    };
    let query_embedding = embedder
        .embed(&[query])?
        .into_iter()
        .next()
        .ok_or(EncoderError::LengthMismatch { expected: 1, got: 0 })?;
    let sim_of = |id: NodeId| {
        graph
            .node(id)
            .and_then(|n| n.embedding.as_deref())
            .map(|e| cosine(&query_embedding, e))
    };

    let mut result = SearchResult::default();
    let mut tree = SearchTree::new(root, sim_of(root).unwrap_or(0.0));
    let mut rng = match config.policy {
        ExpansionPolicy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        ExpansionPolicy::Similarity => None,
    };

    if sim_of(root).is_some() {
        let doc = document(graph, root);
        result.reranker_calls += 1;
        let reward = simulate_batch(reranker, query, &[&doc])?;
        tree.backpropagate(0, reward[0]);
    }

    let mut k = config.k_init;
    for _ in 0..config.iterations {
        let Some(leaf) = tree.select(graph, config.c) else {
            log::debug!("search exhausted after {} iterations", result.iterations_run);
            break;
        };
        result.iterations_run += 1;
        let children = tree.expand(graph, leaf, &query_embedding, k, rng.as_mut());
        if children.is_empty() {
            continue;
        }
        result.widths.push(k);
        k = halve_width(k, config.k_min);

        let docs: Vec<String> = children.iter().map(|c| document(graph, tree.node(*c).graph_node)).collect();
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        result.reranker_calls += 1;
        match simulate_batch(reranker, query, &refs) {
            Ok(rewards) => {
                for (child, reward) in children.into_iter().zip(rewards) {
                    tree.backpropagate(child, reward);
                }
            }
            Err(e) => {
                log::warn!("reranker failed, returning partial results: {e}");
                result.partial = true;
                break;
            }
        }
    }
    result.ranked = extract(graph, &tree, config);
    Ok(result)
}
