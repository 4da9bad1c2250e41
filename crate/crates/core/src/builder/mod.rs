//! From per-file records to a repository graph.
//!
//! [`ingest`] materialises every file on its own, pointing cross-file
//! references at temporary `Import` nodes. [`resolve_imports`] then matches
//! each `Import` node to the entity it names, moves its incoming edges there
//! and deletes it.

mod resolve;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::graph::{CodeGraph, EdgeKind, GraphError, Node, NodeId, NodeKind};
use crate::parser::{
    scan_repository, Diagnostic, EntityKind, EntityRecord, FileTransfer, Grammar, ImportRecord,
    RelationKind, ScanError, ScanOptions,
};

pub use resolve::{resolve_imports, ResolutionReport, UnresolvedImport};

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("qualified name {0:?} defined by more than one file")]
    DuplicateQualifiedName(String),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Separator inside Import node keys: `importer|module|name|alias`.
const KEY_SEP: char = '|';

pub(crate) fn import_key(importer: &str, module: &str, name: &str, alias: Option<&str>) -> String {
    format!(
        "{importer}{KEY_SEP}{module}{KEY_SEP}{name}{KEY_SEP}{}",
        alias.unwrap_or("")
    )
}

/// Module that owns an Import node, recovered from its key.
pub(crate) fn import_importer(key: &str) -> &str {
    key.split(KEY_SEP).next().unwrap_or("")
}

/// Absolute dotted module for a possibly relative import, seen from `package`.
pub fn normalize_module(module: &str, package: &str) -> String {
    let dots = module.chars().take_while(|c| *c == '.').count();
    if dots == 0 {
        return module.to_string();
    }
    let rest = &module[dots..];
    let mut parts: Vec<&str> = package.split('.').filter(|p| !p.is_empty()).collect();
    for _ in 1..dots {
        parts.pop();
    }
    if !rest.is_empty() {
        parts.push(rest);
    }
    parts.join(".")
}

fn entity_node(e: &EntityRecord) -> Node {
    let node = Node::new(e.kind.into(), e.key.clone(), e.name.clone());
    match e.kind {
        EntityKind::Module => {
            let local = e.name.rsplit('.').next().unwrap_or(&e.name).to_string();
            node.with("local_name", local).with("code", e.code.clone())
        }
        EntityKind::Class | EntityKind::Function => node
            .with("signature", e.signature.clone())
            .with("code", e.code.clone())
            .with("module_name", e.module_name.clone()),
        EntityKind::Method => node
            .with("signature", e.signature.clone())
            .with("code", e.code.clone())
            .with("module_name", e.module_name.clone())
            .with("class", e.class_name.clone().unwrap_or_default()),
        EntityKind::Field => node
            .with("code", e.code.clone())
            .with("class", e.class_name.clone().unwrap_or_default())
            .with("module_name", e.module_name.clone()),
        EntityKind::GlobalVariable => node
            .with("code", e.code.clone())
            .with("module_name", e.module_name.clone()),
    }
}

/// An import after relative-path normalisation.
struct Binding<'a> {
    record: &'a ImportRecord,
    module: String,
}

impl Binding<'_> {
    /// Plain `import a.b` style statement: binds a module, not a member.
    fn is_module_import(&self) -> bool {
        self.record.dotted_folder_name.is_some()
    }

    /// `(module, name)` of the entity reached by the dotted reference `segs`,
    /// whose first segment is this import's binding.
    fn target_of(&self, segs: &[&str]) -> (String, String) {
        if !self.is_module_import() {
            return (self.module.clone(), self.record.name.clone());
        }
        let dotted: Vec<&str> = self.module.split('.').collect();
        if self.record.alias.is_some() {
            return match segs.get(1) {
                Some(member) => (self.module.clone(), member.to_string()),
                None => (self.module.clone(), self.module.clone()),
            };
        }
        // `import a.b` binds `a`; the reference walks down from there.
        let shared = segs.iter().zip(&dotted).take_while(|(x, y)| x == y).count();
        if shared >= segs.len() || shared == 0 {
            return (self.module.clone(), self.module.clone());
        }
        (segs[..shared].join("."), segs[shared].to_string())
    }
}

struct Ingest {
    graph: CodeGraph,
    /// Public module-level names per module, for star imports.
    public_names: HashMap<String, BTreeSet<String>>,
}

impl Ingest {
    fn import_node(
        &mut self,
        importer: &str,
        module: &str,
        name: &str,
        record: Option<&ImportRecord>,
    ) -> Result<NodeId, GraphError> {
        let alias = record.and_then(|r| r.alias.as_deref());
        let key = import_key(importer, module, name, alias);
        if let Some(id) = self.graph.lookup_key(NodeKind::Import, &key) {
            return Ok(id);
        }
        let mut node = Node::new(NodeKind::Import, key, name).with("module", module);
        if let Some(a) = alias {
            node = node.with("alias", a);
        }
        if let Some(d) = record.and_then(|r| r.dotted_folder_name.as_deref()) {
            node = node.with("dotted_folder_name", d);
        }
        self.graph.add_node(node)
    }
}

/// Materialise every transfer into one graph with temporary Import nodes.
pub fn ingest(transfers: &[FileTransfer], repo_name: &str) -> Result<CodeGraph, BuildError> {
    let mut st = Ingest {
        graph: CodeGraph::new(),
        public_names: HashMap::new(),
    };
    let repo = st.graph.add_node(Node::new(NodeKind::Repo, repo_name, repo_name))?;

    let mut seen_keys: HashMap<&str, &str> = HashMap::new();
    for t in transfers {
        for e in &t.entities {
            if let Some(other) = seen_keys.insert(&e.key, &t.source.path) {
                if other != t.source.path {
                    return Err(BuildError::DuplicateQualifiedName(e.key.clone()));
                }
            }
        }
        let module = &t.source.module_name;
        let names = st.public_names.entry(module.clone()).or_default();
        for e in &t.entities {
            let top_level = e.key.strip_prefix(module.as_str()).is_some_and(|rest| {
                rest.strip_prefix('.').is_some_and(|n| !n.contains('.'))
            });
            if top_level && !e.name.starts_with('_') {
                names.insert(e.name.clone());
            }
        }
    }

    for t in transfers {
        let mut ids: HashMap<&str, NodeId> = HashMap::new();
        for e in &t.entities {
            let id = st.graph.add_node(entity_node(e)).map_err(|err| match err {
                GraphError::DuplicateKey { key, .. } => BuildError::DuplicateQualifiedName(key),
                other => other.into(),
            })?;
            ids.insert(&e.key, id);
            if e.kind == EntityKind::Module {
                st.graph.add_edge(repo, id, EdgeKind::Contains)?;
            }
        }
        for r in &t.relations {
            let (Some(&s), Some(&d)) = (ids.get(r.source.as_str()), ids.get(r.target.as_str())) else {
                log::warn!("{}: relation with unknown endpoint {} -> {}", t.source.path, r.source, r.target);
                continue;
            };
            st.graph.add_edge(s, d, r.kind.into())?;
        }
        ingest_imports(&mut st, t, &ids)?;
    }
    Ok(st.graph)
}

fn ingest_imports(st: &mut Ingest, t: &FileTransfer, ids: &HashMap<&str, NodeId>) -> Result<(), BuildError> {
    let importer = t.source.module_name.as_str();
    let package = t.source.package();
    let bindings: Vec<Binding> = t
        .imports
        .iter()
        .map(|r| Binding {
            record: r,
            module: normalize_module(&r.module, &package),
        })
        .collect();

    for b in &bindings {
        let name = if b.is_module_import() { b.module.as_str() } else { b.record.name.as_str() };
        st.import_node(importer, &b.module, name, Some(b.record))?;
    }

    for r in &t.uses_refs {
        let Some(&src) = ids.get(r.source.as_str()) else { continue };
        let segs: Vec<&str> = r.name.split('.').collect();
        let head = segs[0];
        let by_alias = bindings.iter().find(|b| !b.record.is_star() && b.record.alias.as_deref() == Some(head));
        let by_name = || {
            bindings
                .iter()
                .find(|b| !b.record.is_star() && b.record.alias.is_none() && b.record.binding() == head)
        };
        let target = match by_alias.or_else(by_name) {
            Some(b) => {
                let (module, name) = b.target_of(&segs);
                let record = (module == b.module
                    && (name == b.record.name || (b.is_module_import() && name == b.module)))
                    .then_some(b.record);
                Some((module, name, record))
            }
            None => bindings
                .iter()
                .filter(|b| b.record.is_star())
                .find(|b| st.public_names.get(&b.module).is_some_and(|n| n.contains(head)))
                .map(|b| (b.module.clone(), head.to_string(), None)),
        };
        let Some((module, name, record)) = target else { continue };
        let imp = st.import_node(importer, &module, &name, record)?;
        let kind = match r.kind {
            RelationKind::Inherits => EdgeKind::Inherits,
            _ => EdgeKind::Uses,
        };
        if let Err(err) = st.graph.add_edge(src, imp, kind) {
            log::debug!("{}: skipping reference {}: {err}", t.source.path, r.name);
        }
    }
    Ok(())
}

/// Everything produced by [`build`].
#[derive(Debug)]
pub struct BuildOutput {
    pub graph: CodeGraph,
    pub report: ResolutionReport,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub scan: ScanOptions,
}

/// Scan, ingest and resolve a repository directory. The graph comes back frozen.
pub fn build(root: &Path, repo_name: &str, options: &BuildOptions) -> Result<BuildOutput, BuildError> {
    let scanned = scan_repository(root, &options.scan, &Grammar::python())?;
    let mut graph = ingest(&scanned.transfers, repo_name)?;
    let report = resolve_imports(&mut graph)?;
    graph.freeze();
    log::info!(
        "built graph: {} nodes, {} edges, {} imports resolved, {} unresolved",
        graph.node_count(),
        graph.edge_count(),
        report.resolved,
        report.unresolved.len()
    );
    Ok(BuildOutput {
        graph,
        report,
        diagnostics: scanned.diagnostics,
    })
}

/// Count of nodes per kind, in kind order. Handy for summaries.
pub fn kind_histogram(graph: &CodeGraph) -> BTreeMap<NodeKind, usize> {
    let mut out = BTreeMap::new();
    for n in graph.nodes() {
        *out.entry(n.kind).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_file_fixture;
    use crate::graph::Direction;
    use crate::parser::parse_source;

    fn transfers(files: &[(&str, &str)]) -> Vec<FileTransfer> {
        files
            .iter()
            .map(|(p, t)| parse_source(p, t.as_bytes().to_vec(), &Grammar::python()).unwrap())
            .collect()
    }

    fn id(g: &CodeGraph, kind: NodeKind, name: &str) -> NodeId {
        g.lookup(kind, name)[0]
    }

    #[test]
    fn normalize_relative() {
        assert_eq!(normalize_module(".", "pkg.sub"), "pkg.sub");
        assert_eq!(normalize_module(".util", "pkg.sub"), "pkg.sub.util");
        assert_eq!(normalize_module("..util", "pkg.sub"), "pkg.util");
        assert_eq!(normalize_module("abs.x", "pkg"), "abs.x");
        assert_eq!(normalize_module(".m", ""), "m");
    }

    #[test]
    fn fixture_ingest_creates_placeholders() {
        let g = ingest(&transfers(&two_file_fixture()), "calc").unwrap();
        assert_eq!(g.count_kind(NodeKind::Import), 3);
        let calc_imp = id(&g, NodeKind::Import, "Calculator");
        let incoming = g.neighbors(calc_imp, Direction::In, None).unwrap();
        let sources: Vec<&str> = incoming.iter().map(|(n, _)| g.node(*n).unwrap().name.as_str()).collect();
        assert!(sources.contains(&"Scientific"));
        assert!(sources.contains(&"quick_add"));
        assert!(incoming.contains(&(id(&g, NodeKind::Class, "Scientific"), EdgeKind::Inherits)));
        for name in ["precision", "format_result"] {
            assert_eq!(g.in_degree(id(&g, NodeKind::Import, name)), 1);
        }
    }

    #[test]
    fn empty_ingest_is_repo_only() {
        let g = ingest(&[], "r").unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.count_kind(NodeKind::Repo), 1);
    }

    #[test]
    fn unknown_names_make_no_edges() {
        let g = ingest(&transfers(&[("a.py", "def f():\n    return mystery()\n")]), "r").unwrap();
        let f = id(&g, NodeKind::Function, "f");
        assert_eq!(g.out_degree(f), 0);
    }

    #[test]
    fn duplicate_module_paths_rejected() {
        let t = transfers(&[("pkg.py", "x = 1\n"), ("pkg/__init__.py", "y = 2\n")]);
        assert!(matches!(ingest(&t, "r"), Err(BuildError::DuplicateQualifiedName(_))));
    }

    #[test]
    fn aliases_win_over_names() {
        let t = transfers(&[
            ("a.py", "def helper():\n    pass\n"),
            ("b.py", "def helper():\n    pass\n"),
            ("c.py", "from a import helper as h\nfrom b import helper\n\ndef run():\n    return h() + helper()\n"),
        ]);
        let mut g = ingest(&t, "r").unwrap();
        resolve_imports(&mut g).unwrap();
        let run = id(&g, NodeKind::Function, "run");
        let targets: BTreeSet<String> = g
            .neighbors(run, Direction::Out, Some(&[EdgeKind::Uses]))
            .unwrap()
            .into_iter()
            .map(|(n, _)| g.node(n).unwrap().key.clone())
            .collect();
        assert_eq!(targets, BTreeSet::from(["a.helper".to_string(), "b.helper".to_string()]));
    }

    #[test]
    fn module_attribute_references() {
        let t = transfers(&[
            ("base.py", crate::fixtures::BASE_PY),
            ("user.py", "import base\n\nclass Mine(base.Calculator):\n    pass\n\ndef f():\n    return base\n"),
        ]);
        let mut g = ingest(&t, "r").unwrap();
        let report = resolve_imports(&mut g).unwrap();
        assert!(report.unresolved.is_empty(), "{report:?}");
        let mine = id(&g, NodeKind::Class, "Mine");
        assert!(g.has_edge(mine, id(&g, NodeKind::Class, "Calculator"), EdgeKind::Inherits));
        assert!(g.has_edge(id(&g, NodeKind::Function, "f"), id(&g, NodeKind::Module, "base"), EdgeKind::Uses));
    }

    #[test]
    fn star_imports_follow_public_names() {
        let t = transfers(&[
            ("lib.py", "def shout():\n    pass\n\ndef _quiet():\n    pass\n"),
            ("app.py", "from lib import *\n\ndef main():\n    shout()\n    _quiet()\n"),
        ]);
        let mut g = ingest(&t, "r").unwrap();
        resolve_imports(&mut g).unwrap();
        let main = id(&g, NodeKind::Function, "main");
        let out = g.neighbors(main, Direction::Out, None).unwrap();
        assert_eq!(out, vec![(id(&g, NodeKind::Function, "shout"), EdgeKind::Uses)]);
    }

    #[test]
    fn build_fixture_end_state() {
        let dir = tempfile::tempdir().unwrap();
        crate::fixtures::write_two_file_fixture(dir.path()).unwrap();
        let out = build(dir.path(), "calc", &BuildOptions::default()).unwrap();
        let g = &out.graph;
        assert!(g.is_frozen());
        let hist = kind_histogram(g);
        assert_eq!(hist.get(&NodeKind::Repo), Some(&1));
        assert_eq!(hist.get(&NodeKind::Module), Some(&2));
        assert_eq!(hist.get(&NodeKind::Class), Some(&2));
        assert_eq!(hist.get(&NodeKind::Method), Some(&3));
        assert_eq!(hist.get(&NodeKind::Function), Some(&3));
        assert_eq!(hist.get(&NodeKind::GlobalVariable), Some(&1));
        assert_eq!(hist.get(&NodeKind::Import), None);
        assert_eq!(g.node_count(), 12);
        assert_eq!(g.edge_count(), 16);
        assert_eq!(out.report.resolved, 3);

        let again = build(dir.path(), "calc", &BuildOptions::default()).unwrap();
        assert_eq!(again.graph.to_jsonl_bytes(), g.to_jsonl_bytes());
    }

    #[test]
    fn build_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let out = build(dir.path(), "empty", &BuildOptions::default()).unwrap();
        assert_eq!(out.graph.node_count(), 1);
    }
}
