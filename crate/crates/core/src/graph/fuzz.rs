//! Randomized mutation driver. Draws legal and illegal mutations alike so
//! callers can check that rejected ones leave no trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CodeGraph, EdgeKind, GraphError, Node, NodeId, NodeKind};

pub const ALL_NODE_KINDS: [NodeKind; 8] = [
    NodeKind::Repo,
    NodeKind::Module,
    NodeKind::Class,
    NodeKind::Function,
    NodeKind::Method,
    NodeKind::Field,
    NodeKind::GlobalVariable,
    NodeKind::Import,
];

pub const ALL_EDGE_KINDS: [EdgeKind; 5] =
    [EdgeKind::Contains, EdgeKind::HasMethod, EdgeKind::HasField, EdgeKind::Inherits, EdgeKind::Uses];

const EMBED_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Mutation {
    AddNode(Node),
    AddEdge(NodeId, NodeId, EdgeKind),
    RemoveEdge(NodeId, NodeId, EdgeKind),
    RemoveNode(NodeId),
    Redirect(NodeId, NodeId),
    SetDescriptions(NodeId, Option<String>, Option<String>),
    SetEmbedding(NodeId, Vec<f64>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FuzzStats {
    pub applied: usize,
    pub rejected: usize,
}

pub struct MutationFuzzer {
    graph: CodeGraph,
    rng: ChaCha8Rng,
    counter: u64,
    pub stats: FuzzStats,
}

impl MutationFuzzer {
    pub fn new(seed: u64) -> Self {
        MutationFuzzer { graph: CodeGraph::new(), rng: ChaCha8Rng::seed_from_u64(seed), counter: 0, stats: FuzzStats::default() }
    }

    pub fn graph(&self) -> &CodeGraph {
        &self.graph
    }

    fn any_id(&mut self) -> NodeId {
        // One past the end, so missing endpoints are drawn too.
        NodeId(self.rng.random_range(0..=self.graph.next_id()))
    }

    fn node_for(&mut self, kind: NodeKind) -> Node {
        self.counter += 1;
        let key = if self.counter > 1 && self.rng.random_bool(0.05) {
            format!("k{}", self.rng.random_range(1..self.counter))
        } else {
            format!("k{}", self.counter)
        };
        let name = if self.rng.random_bool(0.03) { String::new() } else { format!("n{}", self.counter % 17) };
        let required: &[&str] = match kind {
            NodeKind::Repo => &[],
            NodeKind::Module => &["local_name"],
            NodeKind::Class | NodeKind::Function => &["code", "signature", "module_name"],
            NodeKind::Method => &["code", "signature", "module_name", "class"],
            NodeKind::Field => &["code", "class"],
            NodeKind::GlobalVariable => &["code", "module_name"],
            NodeKind::Import => &["module"],
        };
        let mut node = Node::new(kind, key, name);
        let skip = if self.rng.random_bool(0.05) && !required.is_empty() {
            Some(required[self.rng.random_range(0..required.len())])
        } else {
            None
        };
        for p in required.iter().filter(|p| Some(**p) != skip) {
            node = node.with(p, "x");
        }
        if self.rng.random_bool(0.05) {
            node = node.with("alias", "stray");
        }
        if self.rng.random_bool(0.1) {
            node = node.with("description", "d");
        }
        node
    }

    fn vector(&mut self) -> Vec<f64> {
        let dim = if self.rng.random_bool(0.9) { EMBED_DIM } else { EMBED_DIM + 1 };
        let mut v: Vec<f64> = (0..dim).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        if self.rng.random_bool(0.9) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn next_mutation(&mut self) -> Mutation {
        let roll: f64 = self.rng.random();
        if roll < 0.25 {
            let kind = ALL_NODE_KINDS[self.rng.random_range(0..ALL_NODE_KINDS.len())];
            Mutation::AddNode(self.node_for(kind))
        } else if roll < 0.6 {
            let kind = ALL_EDGE_KINDS[self.rng.random_range(0..ALL_EDGE_KINDS.len())];
            Mutation::AddEdge(self.any_id(), self.any_id(), kind)
        } else if roll < 0.7 {
            let edges: Vec<_> = self.graph.edges().collect();
            if edges.is_empty() || self.rng.random_bool(0.2) {
                let kind = ALL_EDGE_KINDS[self.rng.random_range(0..ALL_EDGE_KINDS.len())];
                Mutation::RemoveEdge(self.any_id(), self.any_id(), kind)
            } else {
                let (s, d, k) = edges[self.rng.random_range(0..edges.len())];
                Mutation::RemoveEdge(s, d, k)
            }
        } else if roll < 0.78 {
            Mutation::RemoveNode(self.any_id())
        } else if roll < 0.86 {
            Mutation::Redirect(self.any_id(), self.any_id())
        } else if roll < 0.93 {
            let d = self.rng.random_bool(0.8).then(|| "about".to_string());
            let m = self.rng.random_bool(0.5).then(|| "members".to_string());
            Mutation::SetDescriptions(self.any_id(), d, m)
        } else {
            let v = self.vector();
            Mutation::SetEmbedding(self.any_id(), v)
        }
    }

    pub fn apply(&mut self, m: &Mutation) -> Result<(), GraphError> {
        let g = &mut self.graph;
        let result = match m.clone() {
            Mutation::AddNode(n) => g.add_node(n).map(|_| ()),
            Mutation::AddEdge(s, d, k) => g.add_edge(s, d, k).map(|_| ()),
            Mutation::RemoveEdge(s, d, k) => g.remove_edge(s, d, k).map(|_| ()),
            Mutation::RemoveNode(id) => g.remove_node(id),
            Mutation::Redirect(from, to) => g.redirect_incoming_edges(from, to).map(|_| ()),
            Mutation::SetDescriptions(id, d, md) => g.set_descriptions(id, d, md),
            Mutation::SetEmbedding(id, v) => g.set_embedding(id, v),
        };
        match result {
            Ok(()) => self.stats.applied += 1,
            Err(_) => self.stats.rejected += 1,
        }
        result
    }

    pub fn step(&mut self) -> (Mutation, Result<(), GraphError>) {
        let m = self.next_mutation();
        let r = self.apply(&m);
        (m, r)
    }
}
