//! Typed property graph of code entities.
//!
//! Nodes live in a dense id-indexed arena; ids are assigned at insertion and
//! never reused. Every mutation checks the schema: property presence per node
//! kind and the legal `(source kind, edge kind, target kind)` triples.

pub mod fuzz;
mod io;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{read_jsonl, write_jsonl, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Repo,
    Module,
    Class,
    Function,
    Method,
    Field,
    GlobalVariable,
    Import,
}

impl NodeKind {
    pub const ALL: [NodeKind; 8] = [
        NodeKind::Repo,
        NodeKind::Module,
        NodeKind::Class,
        NodeKind::Function,
        NodeKind::Method,
        NodeKind::Field,
        NodeKind::GlobalVariable,
        NodeKind::Import,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Repo => "Repo",
            NodeKind::Module => "Module",
            NodeKind::Class => "Class",
            NodeKind::Function => "Function",
            NodeKind::Method => "Method",
            NodeKind::Field => "Field",
            NodeKind::GlobalVariable => "GlobalVariable",
            NodeKind::Import => "Import",
        }
    }

    pub fn parse(label: &str) -> Option<NodeKind> {
        NodeKind::ALL.into_iter().find(|k| k.as_str() == label)
    }

    /// Kinds that receive descriptions and embeddings.
    pub fn is_annotatable(self) -> bool {
        !matches!(self, NodeKind::Repo | NodeKind::Import)
    }
}

impl From<crate::parser::EntityKind> for NodeKind {
    fn from(k: crate::parser::EntityKind) -> Self {
        use crate::parser::EntityKind as E;
        match k {
            E::Module => NodeKind::Module,
            E::Class => NodeKind::Class,
            E::Function => NodeKind::Function,
            E::Method => NodeKind::Method,
            E::Field => NodeKind::Field,
            E::GlobalVariable => NodeKind::GlobalVariable,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    Contains,
    HasMethod,
    HasField,
    Inherits,
    Uses,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 5] = [
        EdgeKind::Contains,
        EdgeKind::HasMethod,
        EdgeKind::HasField,
        EdgeKind::Inherits,
        EdgeKind::Uses,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Contains => "CONTAINS",
            EdgeKind::HasMethod => "HAS_METHOD",
            EdgeKind::HasField => "HAS_FIELD",
            EdgeKind::Inherits => "INHERITS",
            EdgeKind::Uses => "USES",
        }
    }

    pub fn parse(label: &str) -> Option<EdgeKind> {
        EdgeKind::ALL.into_iter().find(|k| k.as_str() == label)
    }

    /// Edges forming the containment hierarchy used for bottom-up annotation.
    pub fn is_hierarchical(self) -> bool {
        matches!(self, EdgeKind::Contains | EdgeKind::HasMethod | EdgeKind::HasField)
    }
}

impl From<crate::parser::RelationKind> for EdgeKind {
    fn from(k: crate::parser::RelationKind) -> Self {
        use crate::parser::RelationKind as R;
        match k {
            R::Contains => EdgeKind::Contains,
            R::HasMethod => EdgeKind::HasMethod,
            R::HasField => EdgeKind::HasField,
            R::Inherits => EdgeKind::Inherits,
            R::Uses => EdgeKind::Uses,
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether `src -[kind]-> dst` is allowed by the schema.
pub fn edge_legal(src: NodeKind, kind: EdgeKind, dst: NodeKind) -> bool {
    use EdgeKind::*;
    use NodeKind::*;
    match kind {
        Contains => matches!(
            (src, dst),
            (Repo, Module)
                | (Module, Module | Class | Function | GlobalVariable)
                | (Class, Class)
                | (Function | Method, Function | Class)
        ),
        HasMethod => src == Class && dst == Method,
        HasField => src == Class && dst == Field,
        Inherits => src == Class && matches!(dst, Class | Import),
        Uses => {
            matches!(src, Class | Function | Method | GlobalVariable)
                && matches!(dst, Class | Function | Method | GlobalVariable | Module | Import)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

/// A graph node with its schema properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Logical key: qualified name, unique per kind.
    pub key: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dotted_folder_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_descriptions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// Property values reachable from query languages.
#[derive(Debug, Clone, PartialEq)]
pub enum PropValue<'a> {
    Str(&'a str),
    Vector(&'a [f64]),
}

impl Node {
    /// A bare node of `kind`; the id is assigned by [`CodeGraph::add_node`].
    pub fn new(kind: NodeKind, key: impl Into<String>, name: impl Into<String>) -> Self {
        Node {
            id: NodeId(u32::MAX),
            kind,
            key: key.into(),
            name: name.into(),
            local_name: None,
            code: None,
            signature: None,
            module_name: None,
            class: None,
            alias: None,
            module: None,
            dotted_folder_name: None,
            description: None,
            member_descriptions: None,
            embedding: None,
        }
    }

    pub fn with(mut self, prop: &str, value: impl Into<String>) -> Self {
        let value = Some(value.into());
        match prop {
            "local_name" => self.local_name = value,
            "code" => self.code = value,
            "signature" => self.signature = value,
            "module_name" => self.module_name = value,
            "class" => self.class = value,
            "alias" => self.alias = value,
            "module" => self.module = value,
            "dotted_folder_name" => self.dotted_folder_name = value,
            "description" => self.description = value,
            "member_descriptions" => self.member_descriptions = value,
            other => panic!("unknown node property {other}"),
        }
        self
    }

    pub fn property(&self, prop: &str) -> Option<PropValue<'_>> {
        fn s(v: &Option<String>) -> Option<PropValue<'_>> {
            v.as_deref().map(PropValue::Str)
        }
        match prop {
            "name" => Some(PropValue::Str(&self.name)),
            "local_name" => s(&self.local_name),
            "code" => s(&self.code),
            "signature" => s(&self.signature),
            "module_name" => s(&self.module_name),
            "class" => s(&self.class),
            "alias" => s(&self.alias),
            "module" => s(&self.module),
            "dotted_folder_name" => s(&self.dotted_folder_name),
            "description" => s(&self.description),
            "member_descriptions" => s(&self.member_descriptions),
            "embedding" => self.embedding.as_deref().map(PropValue::Vector),
            _ => None,
        }
    }

    /// Text fed to the reranker and the embedder: description, newline, member descriptions.
    pub fn semantic_text(&self) -> Option<String> {
        match (&self.description, &self.member_descriptions) {
            (None, None) => None,
            (d, m) => Some(format!(
                "{}\n{}",
                d.as_deref().unwrap_or(""),
                m.as_deref().unwrap_or("")
            )),
        }
    }

    /// Evaluation item id: `module_name::kind::name`.
    pub fn item_id(&self) -> String {
        let module = match self.kind {
            NodeKind::Module => self.name.as_str(),
            _ => self.module_name.as_deref().unwrap_or(""),
        };
        format!("{}::{}::{}", module, self.kind, self.name)
    }

    fn check_properties(&self) -> Result<(), String> {
        use NodeKind::*;
        const ANNOT: &[&str] = &["description", "member_descriptions", "embedding"];
        let (required, optional): (&[&str], &[&str]) = match self.kind {
            Repo => (&[], &[]),
            Module => (&["local_name"], &["code", "signature"]),
            Class | Function => (&["code", "signature", "module_name"], &[]),
            Method => (&["code", "signature", "module_name", "class"], &[]),
            Field => (&["code", "class"], &["module_name"]),
            GlobalVariable => (&["code", "module_name"], &[]),
            Import => (&["module"], &["alias", "dotted_folder_name"]),
        };
        let present = [
            ("local_name", self.local_name.is_some()),
            ("code", self.code.is_some()),
            ("signature", self.signature.is_some()),
            ("module_name", self.module_name.is_some()),
            ("class", self.class.is_some()),
            ("alias", self.alias.is_some()),
            ("module", self.module.is_some()),
            ("dotted_folder_name", self.dotted_folder_name.is_some()),
            ("description", self.description.is_some()),
            ("member_descriptions", self.member_descriptions.is_some()),
            ("embedding", self.embedding.is_some()),
        ];
        if self.name.is_empty() {
            return Err("empty name".into());
        }
        for (prop, is_set) in present {
            let annot_ok = self.kind.is_annotatable() && ANNOT.contains(&prop);
            if required.contains(&prop) && !is_set {
                return Err(format!("missing required property `{prop}`"));
            }
            if is_set && !required.contains(&prop) && !optional.contains(&prop) && !annot_ok {
                return Err(format!("property `{prop}` not allowed"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("illegal edge {src_kind} -[{kind}]-> {dst_kind}")]
    IllegalEndpointKind {
        src_kind: NodeKind,
        kind: EdgeKind,
        dst_kind: NodeKind,
    },
    #[error("edge endpoint {0} does not exist")]
    MissingEndpoint(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("source and target are the same node {0}")]
    SameNode(NodeId),
    #[error("graph is frozen")]
    Frozen,
    #[error("invalid {kind} node: {message}")]
    InvalidProperties { kind: NodeKind, message: String },
    #[error("duplicate {kind} key {key:?}")]
    DuplicateKey { kind: NodeKind, key: String },
    #[error("embedding has dimension {got}, graph uses {expected}")]
    EmbeddingDimension { expected: usize, got: usize },
    #[error("embedding is not unit-normalised (norm {0})")]
    EmbeddingNotUnit(f64),
    #[error("import node {0} still has incoming edges")]
    ImportStillReferenced(NodeId),
    #[error("corrupt graph stream: {0}")]
    CorruptStream(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Adjacency = BTreeSet<(NodeId, EdgeKind)>;

#[derive(Debug, Clone, Default)]
pub struct CodeGraph {
    nodes: Vec<Option<Node>>,
    out: Vec<Adjacency>,
    inc: Vec<Adjacency>,
    by_name: HashMap<(NodeKind, String), BTreeSet<NodeId>>,
    by_key: HashMap<(NodeKind, String), NodeId>,
    embedding_dim: Option<usize>,
    edge_count: usize,
    frozen: bool,
}

pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

impl CodeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_embedding_dim(dim: usize) -> Self {
        CodeGraph {
            embedding_dim: Some(dim),
            ..Self::default()
        }
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    /// Lock the topology. Annotation properties stay writable.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn check_mutable(&self) -> Result<(), GraphError> {
        if self.frozen {
            Err(GraphError::Frozen)
        } else {
            Ok(())
        }
    }

    fn check_embedding(&mut self, embedding: &[f64]) -> Result<(), GraphError> {
        if let Some(dim) = self.embedding_dim {
            if dim != embedding.len() {
                return Err(GraphError::EmbeddingDimension {
                    expected: dim,
                    got: embedding.len(),
                });
            }
        }
        let norm = embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(GraphError::EmbeddingNotUnit(norm));
        }
        self.embedding_dim = Some(embedding.len());
        Ok(())
    }

    pub fn add_node(&mut self, mut node: Node) -> Result<NodeId, GraphError> {
        self.check_mutable()?;
        node.check_properties()
            .map_err(|message| GraphError::InvalidProperties {
                kind: node.kind,
                message,
            })?;
        if self.by_key.contains_key(&(node.kind, node.key.clone())) {
            return Err(GraphError::DuplicateKey {
                kind: node.kind,
                key: node.key,
            });
        }
        if let Some(e) = &node.embedding {
            self.check_embedding(&e.clone())?;
        }
        let id = NodeId(self.nodes.len() as u32);
        node.id = id;
        self.insert_at(node);
        Ok(id)
    }

    fn insert_at(&mut self, node: Node) {
        let idx = node.id.idx();
        if self.nodes.len() <= idx {
            self.nodes.resize(idx + 1, None);
            self.out.resize(idx + 1, BTreeSet::new());
            self.inc.resize(idx + 1, BTreeSet::new());
        }
        self.by_name
            .entry((node.kind, node.name.clone()))
            .or_default()
            .insert(node.id);
        self.by_key.insert((node.kind, node.key.clone()), node.id);
        self.nodes[idx] = Some(node);
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.idx()).and_then(|n| n.as_ref())
    }

    fn require(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.node(id).ok_or(GraphError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.node(id).is_some()
    }

    /// Live nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().flatten()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().map(|n| n.id)
    }

    /// All edges as `(src, dst, kind)`, sorted by source then target.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, EdgeKind)> + '_ {
        self.out.iter().enumerate().flat_map(|(src, adj)| {
            adj.iter()
                .map(move |&(dst, kind)| (NodeId(src as u32), dst, kind))
        })
    }

    pub fn node_count(&self) -> usize {
        self.by_key.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes().filter(|n| n.kind == kind).count()
    }

    /// Next id that `add_node` will hand out. Ids below it are never reused.
    pub fn next_id(&self) -> u32 {
        self.nodes.len() as u32
    }

    /// Nodes whose `(kind, name)` match, in id order.
    pub fn lookup(&self, kind: NodeKind, name: &str) -> Vec<NodeId> {
        self.by_name
            .get(&(kind, name.to_string()))
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn lookup_key(&self, kind: NodeKind, key: &str) -> Option<NodeId> {
        self.by_key.get(&(kind, key.to_string())).copied()
    }

    /// Every name in the index with the kinds it appears under.
    pub fn names(&self) -> impl Iterator<Item = (NodeKind, &str)> {
        self.by_name
            .iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|((k, n), _)| (*k, n.as_str()))
    }

    pub fn repo_id(&self) -> Option<NodeId> {
        self.nodes().find(|n| n.kind == NodeKind::Repo).map(|n| n.id)
    }

    /// Add an edge. Returns `false` when the identical edge already exists.
    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) -> Result<bool, GraphError> {
        self.check_mutable()?;
        let src_kind = self.node(src).ok_or(GraphError::MissingEndpoint(src))?.kind;
        let dst_kind = self.node(dst).ok_or(GraphError::MissingEndpoint(dst))?.kind;
        if src == dst {
            return Err(GraphError::SameNode(src));
        }
        if !edge_legal(src_kind, kind, dst_kind) {
            return Err(GraphError::IllegalEndpointKind {
                src_kind,
                kind,
                dst_kind,
            });
        }
        Ok(self.insert_edge(src, dst, kind))
    }

    fn insert_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) -> bool {
        let inserted = self.out[src.idx()].insert((dst, kind));
        if inserted {
            self.inc[dst.idx()].insert((src, kind));
            self.edge_count += 1;
        }
        inserted
    }

    pub fn remove_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) -> Result<bool, GraphError> {
        self.check_mutable()?;
        self.require(src)?;
        self.require(dst)?;
        Ok(self.delete_edge(src, dst, kind))
    }

    fn delete_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) -> bool {
        let removed = self.out[src.idx()].remove(&(dst, kind));
        if removed {
            self.inc[dst.idx()].remove(&(src, kind));
            self.edge_count -= 1;
        }
        removed
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, kind: EdgeKind) -> bool {
        self.out
            .get(src.idx())
            .is_some_and(|adj| adj.contains(&(dst, kind)))
    }

    /// Adjacent nodes matching `direction` and the optional edge-kind filter,
    /// sorted by node id (then edge kind).
    pub fn neighbors(
        &self,
        id: NodeId,
        direction: Direction,
        kinds: Option<&[EdgeKind]>,
    ) -> Result<Vec<(NodeId, EdgeKind)>, GraphError> {
        self.require(id)?;
        let keep = |k: &EdgeKind| kinds.is_none_or(|ks| ks.contains(k));
        let mut result: Vec<(NodeId, EdgeKind)> = Vec::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            result.extend(self.out[id.idx()].iter().filter(|(_, k)| keep(k)));
        }
        if matches!(direction, Direction::In | Direction::Both) {
            result.extend(self.inc[id.idx()].iter().filter(|(_, k)| keep(k)));
        }
        if direction == Direction::Both {
            result.sort();
            result.dedup();
        }
        Ok(result)
    }

    pub fn in_degree(&self, id: NodeId) -> usize {
        self.inc.get(id.idx()).map_or(0, |s| s.len())
    }

    pub fn out_degree(&self, id: NodeId) -> usize {
        self.out.get(id.idx()).map_or(0, |s| s.len())
    }

    /// Move every edge `(x, from, k)` to `(x, to, k)`. Duplicates collapse and
    /// would-be self loops are dropped. Returns the number of edges moved.
    ///
    /// All moved edges are checked against the schema first; on error the
    /// graph is untouched.
    pub fn redirect_incoming_edges(&mut self, from: NodeId, to: NodeId) -> Result<usize, GraphError> {
        self.check_mutable()?;
        self.require(from)?;
        let to_kind = self.require(to)?.kind;
        if from == to {
            return Err(GraphError::SameNode(from));
        }
        let incoming: Vec<(NodeId, EdgeKind)> = self.inc[from.idx()].iter().copied().collect();
        for &(src, kind) in &incoming {
            let src_kind = self.nodes[src.idx()].as_ref().map(|n| n.kind).unwrap_or(NodeKind::Repo);
            if src != to && !edge_legal(src_kind, kind, to_kind) {
                return Err(GraphError::IllegalEndpointKind {
                    src_kind,
                    kind,
                    dst_kind: to_kind,
                });
            }
        }
        for &(src, kind) in &incoming {
            self.delete_edge(src, from, kind);
            if src != to {
                self.insert_edge(src, to, kind);
            }
        }
        Ok(incoming.len())
    }

    /// Remove a node with all its edges. Import nodes must have no incoming
    /// edges left (redirect or drop them first).
    pub fn remove_node(&mut self, id: NodeId) -> Result<(), GraphError> {
        self.check_mutable()?;
        let node = self.require(id)?;
        if node.kind == NodeKind::Import && self.in_degree(id) > 0 {
            return Err(GraphError::ImportStillReferenced(id));
        }
        let node = self.nodes[id.idx()].take().expect("checked above");
        let outgoing: Vec<_> = self.out[id.idx()].iter().copied().collect();
        for (dst, kind) in outgoing {
            self.delete_edge(id, dst, kind);
        }
        let incoming: Vec<_> = self.inc[id.idx()].iter().copied().collect();
        for (src, kind) in incoming {
            self.delete_edge(src, id, kind);
        }
        if let Some(set) = self.by_name.get_mut(&(node.kind, node.name.clone())) {
            set.remove(&id);
            if set.is_empty() {
                self.by_name.remove(&(node.kind, node.name.clone()));
            }
        }
        self.by_key.remove(&(node.kind, node.key));
        Ok(())
    }

    /// Set description texts on an annotatable node.
    pub fn set_descriptions(
        &mut self,
        id: NodeId,
        description: Option<String>,
        member_descriptions: Option<String>,
    ) -> Result<(), GraphError> {
        let kind = self.require(id)?.kind;
        if !kind.is_annotatable() {
            return Err(GraphError::InvalidProperties {
                kind,
                message: "node kind carries no descriptions".into(),
            });
        }
        let node = self.nodes[id.idx()].as_mut().expect("checked");
        node.description = description;
        node.member_descriptions = member_descriptions;
        Ok(())
    }

    pub fn set_embedding(&mut self, id: NodeId, embedding: Vec<f64>) -> Result<(), GraphError> {
        let kind = self.require(id)?.kind;
        if !kind.is_annotatable() {
            return Err(GraphError::InvalidProperties {
                kind,
                message: "node kind carries no embedding".into(),
            });
        }
        self.check_embedding(&embedding)?;
        self.nodes[id.idx()].as_mut().expect("checked").embedding = Some(embedding);
        Ok(())
    }

    /// Full consistency check: properties, adjacency symmetry, edge legality, indices.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut edges = 0;
        for node in self.nodes() {
            node.check_properties()
                .map_err(|message| GraphError::InvalidProperties {
                    kind: node.kind,
                    message,
                })?;
            if let Some(e) = &node.embedding {
                if self.embedding_dim.is_some_and(|d| d != e.len()) {
                    return Err(GraphError::EmbeddingDimension {
                        expected: self.embedding_dim.unwrap_or(0),
                        got: e.len(),
                    });
                }
            }
            if self.by_key.get(&(node.kind, node.key.clone())) != Some(&node.id) {
                return Err(GraphError::CorruptStream(format!("key index out of sync for {}", node.id)));
            }
        }
        for (src, dst, kind) in self.edges() {
            let s = self.node(src).ok_or(GraphError::MissingEndpoint(src))?;
            let d = self.node(dst).ok_or(GraphError::MissingEndpoint(dst))?;
            if src == dst {
                return Err(GraphError::SameNode(src));
            }
            if !edge_legal(s.kind, kind, d.kind) {
                return Err(GraphError::IllegalEndpointKind {
                    src_kind: s.kind,
                    kind,
                    dst_kind: d.kind,
                });
            }
            if !self.inc[dst.idx()].contains(&(src, kind)) {
                return Err(GraphError::CorruptStream(format!("missing reverse adjacency {src}->{dst}")));
            }
            edges += 1;
        }
        let reverse: usize = self.inc.iter().map(|s| s.len()).sum();
        if edges != self.edge_count || reverse != edges {
            return Err(GraphError::CorruptStream("edge count mismatch".into()));
        }
        let indexed: usize = self.by_name.values().map(|s| s.len()).sum();
        if indexed != self.node_count() {
            return Err(GraphError::CorruptStream("name index out of sync".into()));
        }
        Ok(())
    }
}
