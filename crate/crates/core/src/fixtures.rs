//! Small built-in inputs used by tests, examples and benchmarks.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::builder::{ingest, resolve_imports};
use crate::encoders::NO_MEMBERS;
use crate::eval::{QrelItem, QrelQuery, Qrels};
use crate::graph::{CodeGraph, EdgeKind, Node, NodeId, NodeKind};
use crate::parser::{parse_source, Grammar};

pub const BASE_PY: &str = include_str!("../../../fixtures/two_file/base.py");
pub const EXTENDED_PY: &str = include_str!("../../../fixtures/two_file/extended.py");

/// The two-file calculator repository as `(path, text)` pairs.
pub fn two_file_fixture() -> [(&'static str, &'static str); 2] {
    [("base.py", BASE_PY), ("extended.py", EXTENDED_PY)]
}

/// Materialise the two-file repository under `dir`.
pub fn write_two_file_fixture(dir: &Path) -> std::io::Result<()> {
    for (path, text) in two_file_fixture() {
        std::fs::write(dir.join(path), text)?;
    }
    Ok(())
}

/// The two-file repository parsed, stitched and frozen under the repo name `calc`.
pub fn two_file_graph() -> CodeGraph {
    let grammar = Grammar::python();
    let transfers: Vec<_> = two_file_fixture()
        .iter()
        .map(|(path, text)| parse_source(path, text.as_bytes().to_vec(), &grammar).expect("fixture parses"))
        .collect();
    let mut graph = ingest(&transfers, "calc").expect("fixture ingests");
    resolve_imports(&mut graph).expect("fixture resolves");
    graph.freeze();
    graph
}

const TOPIC_WORDS: &[&str] = &[
    "matrix", "vector", "tensor", "kernel", "socket", "packet", "router", "buffer", "cursor",
    "ledger", "invoice", "payment", "account", "ticket", "schema", "column", "index", "shard",
    "pixel", "shader", "texture", "sprite", "camera", "mesh", "token", "parser", "lexer", "grammar",
    "cipher", "hash", "nonce", "signature", "queue", "worker", "thread", "mutex", "sensor", "signal",
    "filter", "sample", "weather", "forecast", "climate", "storm", "garden", "flower", "seed", "soil",
    "planet", "orbit", "rocket", "engine", "ferry", "tariff", "grid", "voltage", "battery", "charge",
];

const COMMON_WORDS: &[&str] = &[
    "helper", "utility", "value", "result", "config", "option", "record", "entry", "state", "cache",
];

/// A seeded schema-legal graph with `n_nodes` nodes besides the Repo.
///
/// Nodes are named `mod_i`, `cls_i`, `func_i`, `meth_i`, `field_i`, `var_i`.
/// Each module draws a small topic vocabulary and every annotatable node gets a
/// description built from it. `edge_density` is the probability of a `USES`
/// edge per ordered pair of eligible nodes (and of `INHERITS` per class pair).
/// The returned graph is frozen and carries no embeddings.
pub fn random_graph(seed: u64, n_nodes: usize, edge_density: f64) -> CodeGraph {
    let mut g = random_graph_unfrozen(seed, n_nodes, edge_density);
    g.freeze();
    g
}

pub(crate) fn random_graph_unfrozen(seed: u64, n_nodes: usize, edge_density: f64) -> CodeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = CodeGraph::new();
    let repo = g.add_node(Node::new(NodeKind::Repo, "random", "random")).expect("repo");
    if n_nodes == 0 {
        return g;
    }

    let n_modules = (n_nodes / 8).max(1);
    let mut modules = Vec::new();
    for i in 0..n_modules {
        let name = format!("mod_{i}");
        let topic: Vec<&str> = TOPIC_WORDS.choose_multiple(&mut rng, 6).copied().collect();
        let id = g
            .add_node(Node::new(NodeKind::Module, &name, &name).with("local_name", &name))
            .expect("module");
        g.add_edge(repo, id, EdgeKind::Contains).expect("repo edge");
        modules.push((id, name, topic));
    }

    let mut classes: Vec<(NodeId, String, usize)> = Vec::new();
    let mut users: Vec<NodeId> = Vec::new();
    let mut children: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let mut home: HashMap<NodeId, usize> = HashMap::new();
    for i in 0..n_nodes - n_modules {
        let roll: f64 = rng.random();
        let m = rng.random_range(0..n_modules);
        let (kind, prefix) = match roll {
            r if r < 0.25 => (NodeKind::Class, "cls"),
            r if r < 0.5 => (NodeKind::Function, "func"),
            r if r < 0.75 && !classes.is_empty() => (NodeKind::Method, "meth"),
            r if r < 0.85 && !classes.is_empty() => (NodeKind::Field, "field"),
            _ => (NodeKind::GlobalVariable, "var"),
        };
        let name = format!("{prefix}_{i}");
        let (parent, module_idx, owner) = match kind {
            NodeKind::Method | NodeKind::Field => {
                let (cid, cname, cm) = classes.choose(&mut rng).expect("class exists").clone();
                (cid, cm, Some(cname))
            }
            _ => (modules[m].0, m, None),
        };
        let module_name = modules[module_idx].1.clone();
        let key = match &owner {
            Some(c) => format!("{module_name}.{c}.{name}"),
            None => format!("{module_name}.{name}"),
        };
        let mut node = Node::new(kind, key, &name).with("code", format!("{name} = {i}"));
        match kind {
            NodeKind::Field => node = node.with("class", owner.clone().unwrap_or_default()),
            NodeKind::GlobalVariable => node = node.with("module_name", &module_name),
            _ => {
                node = node
                    .with("signature", format!("{name}()"))
                    .with("module_name", &module_name);
                if let Some(c) = &owner {
                    node = node.with("class", c);
                }
            }
        }
        if kind == NodeKind::Field {
            node = node.with("module_name", &module_name);
        }
        let id = g.add_node(node).expect("random node");
        let edge = match kind {
            NodeKind::Method => EdgeKind::HasMethod,
            NodeKind::Field => EdgeKind::HasField,
            _ => EdgeKind::Contains,
        };
        g.add_edge(parent, id, edge).expect("hierarchy edge");
        children.entry(parent).or_default().push(id);
        home.insert(id, module_idx);
        if kind == NodeKind::Class {
            classes.push((id, name, module_idx));
        }
        if kind != NodeKind::Field {
            users.push(id);
        }
    }

    for &a in &users {
        for &b in &users {
            if a != b && rng.random_bool(edge_density) {
                g.add_edge(a, b, EdgeKind::Uses).expect("uses edge");
            }
        }
    }
    for (a, _, _) in &classes {
        for (b, _, _) in &classes {
            if a != b && rng.random_bool(edge_density / 2.0) {
                g.add_edge(*a, *b, EdgeKind::Inherits).expect("inherits edge");
            }
        }
    }

    let ids: Vec<NodeId> = g.node_ids().collect();
    let mut descriptions: HashMap<NodeId, String> = HashMap::new();
    for &id in &ids {
        let kind = g.node(id).expect("node").kind;
        if !kind.is_annotatable() {
            continue;
        }
        let topic = match kind {
            NodeKind::Module => &modules.iter().find(|m| m.0 == id).expect("module").2,
            _ => &modules[home[&id]].2,
        };
        let mut words: Vec<&str> = topic.choose_multiple(&mut rng, 3).copied().collect();
        words.push(COMMON_WORDS.choose(&mut rng).copied().expect("words"));
        descriptions.insert(id, words.join(" "));
    }
    for &id in &ids {
        let Some(desc) = descriptions.get(&id).cloned() else { continue };
        let members = match children.get(&id) {
            Some(kids) => kids
                .iter()
                .map(|k| format!("{} - {}", g.node(*k).expect("child").name, descriptions[k]))
                .collect::<Vec<_>>()
                .join("\n"),
            None => NO_MEMBERS.to_string(),
        };
        g.set_descriptions(id, Some(desc), Some(members)).expect("descriptions");
    }
    g
}

/// Plant `n_queries` answers in `graph` and return their judgements.
///
/// Each query picks a distinct described node, appends a fresh nonce token to
/// its description and asks for the nonce plus two words of the original
/// description. Embeddings must be recomputed afterwards.
pub fn planted_qrels(graph: &mut CodeGraph, n_queries: usize, seed: u64) -> Qrels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let described: Vec<NodeId> = graph
        .nodes()
        .filter(|n| n.description.is_some())
        .map(|n| n.id)
        .collect();
    let chosen: Vec<NodeId> = described.choose_multiple(&mut rng, n_queries).copied().collect();
    let mut queries = Vec::new();
    for (i, id) in chosen.into_iter().enumerate() {
        let node = graph.node(id).expect("chosen node");
        let description = node.description.clone().unwrap_or_default();
        let members = node.member_descriptions.clone();
        let item = node.item_id();
        let letter = (b'a' + rng.random_range(0..26u8)) as char;
        let nonce = format!("zq{i}{letter}x");
        let words: Vec<&str> = description.split_whitespace().collect();
        let picked: Vec<&str> = words.choose_multiple(&mut rng, 2).copied().collect();
        graph
            .set_descriptions(id, Some(format!("{description} {nonce}")), members)
            .expect("described nodes are annotatable");
        queries.push(QrelQuery {
            qid: format!("q{i}"),
            query: format!("{nonce} {}", picked.join(" ")),
            relevant: vec![QrelItem { id: item, rel: 1 }],
        });
    }
    Qrels { queries }
}
