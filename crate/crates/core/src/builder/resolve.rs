use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::import_importer;
use crate::graph::{edge_legal, CodeGraph, Direction, EdgeKind, GraphError, NodeId, NodeKind};

const REEXPORT_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedImport {
    pub name: String,
    pub module: String,
    pub importer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub resolved: usize,
    pub unresolved: Vec<UnresolvedImport>,
    /// Edges moved onto resolved targets.
    #[serde(skip)]
    pub redirected_edges: usize,
    /// Edges discarded: into unresolved imports, or illegal for the resolved target kind.
    #[serde(skip)]
    pub dropped_edges: usize,
}

impl ResolutionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

struct Resolver<'g> {
    graph: &'g CodeGraph,
    by_importer: HashMap<&'g str, Vec<NodeId>>,
}

impl<'g> Resolver<'g> {
    fn new(graph: &'g CodeGraph) -> Self {
        let mut by_importer: HashMap<&str, Vec<NodeId>> = HashMap::new();
        for n in graph.nodes().filter(|n| n.kind == NodeKind::Import) {
            by_importer.entry(import_importer(&n.key)).or_default().push(n.id);
        }
        Resolver { graph, by_importer }
    }

    fn module(&self, name: &str) -> Option<NodeId> {
        self.graph.lookup_key(NodeKind::Module, name)
    }

    fn binding(&self, id: NodeId) -> &str {
        let n = self.graph.node(id).expect("import exists");
        if let Some(a) = &n.alias {
            return a;
        }
        match &n.dotted_folder_name {
            Some(d) => d.split('.').next().unwrap_or(d),
            None => &n.name,
        }
    }

    fn target(&self, import: NodeId) -> Option<NodeId> {
        let n = self.graph.node(import)?;
        let module = n.module.as_deref().unwrap_or("");
        let mut visited = HashSet::new();
        self.find(module, &n.name, 0, &mut visited)
    }

    fn find(&self, module: &str, name: &str, depth: usize, visited: &mut HashSet<(String, String)>) -> Option<NodeId> {
        if !visited.insert((module.to_string(), name.to_string())) {
            return None;
        }
        if name == "*" || name == module {
            return self.module(module).or_else(|| self.unique_suffix_module(module));
        }
        if let Some(m) = self.module(module) {
            return self.member(m, module, name, depth, visited);
        }
        if let Some(sub) = self.module(&format!("{module}.{name}")) {
            return Some(sub);
        }
        // The module path does not exist verbatim; tolerate a differing root.
        if let Some(m) = self.unique_suffix_module(module) {
            let full = self.graph.node(m)?.key.clone();
            return self.member(m, &full, name, depth, visited);
        }
        self.unique_name(module, name)
    }

    fn member(
        &self,
        m: NodeId,
        module: &str,
        name: &str,
        depth: usize,
        visited: &mut HashSet<(String, String)>,
    ) -> Option<NodeId> {
        let children = self.graph.neighbors(m, Direction::Out, Some(&[EdgeKind::Contains])).ok()?;
        let child = children.iter().map(|(c, _)| *c).find(|c| {
            self.graph.node(*c).is_some_and(|n| {
                n.name == name
                    && matches!(n.kind, NodeKind::Class | NodeKind::Function | NodeKind::GlobalVariable)
            })
        });
        if child.is_some() {
            return child;
        }
        if let Some(sub) = self.module(&format!("{module}.{name}")) {
            return Some(sub);
        }
        if depth >= REEXPORT_DEPTH {
            return None;
        }
        for &imp in self.by_importer.get(module).into_iter().flatten() {
            if self.binding(imp) != name {
                continue;
            }
            let n = self.graph.node(imp)?;
            let target_module = n.module.as_deref().unwrap_or("");
            if let Some(t) = self.find(target_module, &n.name, depth + 1, visited) {
                return Some(t);
            }
        }
        None
    }

    fn unique_suffix_module(&self, module: &str) -> Option<NodeId> {
        let suffix = format!(".{module}");
        let hits: Vec<NodeId> = self
            .graph
            .nodes()
            .filter(|n| n.kind == NodeKind::Module && n.key.ends_with(&suffix))
            .map(|n| n.id)
            .collect();
        (hits.len() == 1).then(|| hits[0])
    }

    /// Last resort: exactly one top-level entity of that name in a module
    /// whose final path segment agrees with the import.
    fn unique_name(&self, module: &str, name: &str) -> Option<NodeId> {
        let last = module.rsplit('.').next().unwrap_or(module);
        let mut hits = Vec::new();
        for kind in [NodeKind::Class, NodeKind::Function, NodeKind::GlobalVariable] {
            for id in self.graph.lookup(kind, name) {
                let n = self.graph.node(id)?;
                let m = n.module_name.as_deref().unwrap_or("");
                let top_level = n.key == format!("{m}.{name}");
                if top_level && m.rsplit('.').next() == Some(last) {
                    hits.push(id);
                }
            }
        }
        (hits.len() == 1).then(|| hits[0])
    }
}

/// Replace every Import node by the entity it names. Unmatched imports are
/// removed together with their incoming edges and listed in the report.
pub fn resolve_imports(graph: &mut CodeGraph) -> Result<ResolutionReport, GraphError> {
    let plan: Vec<(NodeId, Option<NodeId>)> = {
        let resolver = Resolver::new(graph);
        graph
            .nodes()
            .filter(|n| n.kind == NodeKind::Import)
            .map(|n| (n.id, resolver.target(n.id)))
            .collect()
    };

    let mut report = ResolutionReport::default();
    for (import, target) in plan {
        let incoming = graph.neighbors(import, Direction::In, None)?;
        match target {
            Some(to) => {
                let to_kind = graph.node(to).expect("target exists").kind;
                for (src, kind) in incoming {
                    let src_kind = graph.node(src).expect("source exists").kind;
                    if src != to && !edge_legal(src_kind, kind, to_kind) {
                        log::debug!("dropping {src_kind} -[{kind}]-> {to_kind} after resolution");
                        graph.remove_edge(src, import, kind)?;
                        report.dropped_edges += 1;
                    }
                }
                report.redirected_edges += graph.redirect_incoming_edges(import, to)?;
                report.resolved += 1;
            }
            None => {
                for (src, kind) in incoming {
                    graph.remove_edge(src, import, kind)?;
                    report.dropped_edges += 1;
                }
                let n = graph.node(import).expect("import exists");
                report.unresolved.push(UnresolvedImport {
                    name: n.name.clone(),
                    module: n.module.clone().unwrap_or_default(),
                    importer: import_importer(&n.key).to_string(),
                });
            }
        }
        graph.remove_node(import)?;
    }
    Ok(report)
}
