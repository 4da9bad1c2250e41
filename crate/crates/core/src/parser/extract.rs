use std::collections::{HashMap, HashSet};

use tree_sitter::Node;

use super::{
    EntityKind, EntityRecord, FileTransfer, ImportRecord, Relation, RelationKind, SourceFile, Span,
    SyntaxTree, UsesRef,
};

const PY_BUILTINS: &[&str] = &[
    "__import__", "__name__", "__file__", "__doc__", "abs", "all", "any", "ascii", "bin", "bool",
    "breakpoint", "bytearray", "bytes", "callable", "chr", "classmethod", "compile", "complex",
    "delattr", "dict", "dir", "divmod", "enumerate", "eval", "exec", "filter", "float", "format",
    "frozenset", "getattr", "globals", "hasattr", "hash", "help", "hex", "id", "input", "int",
    "isinstance", "issubclass", "iter", "len", "list", "locals", "map", "max", "memoryview", "min",
    "next", "object", "oct", "open", "ord", "pow", "print", "property", "range", "repr",
    "reversed", "round", "set", "setattr", "slice", "sorted", "staticmethod", "str", "sum",
    "super", "tuple", "type", "vars", "zip", "NotImplemented", "Ellipsis", "BaseException",
    "Exception", "ArithmeticError", "AssertionError", "AttributeError", "ImportError",
    "IndexError", "KeyError", "KeyboardInterrupt", "LookupError", "NameError",
    "NotImplementedError", "OSError", "IOError", "RuntimeError", "StopIteration", "SystemExit",
    "TypeError", "ValueError", "ZeroDivisionError", "FileNotFoundError", "PermissionError",
    "UnicodeDecodeError", "Warning", "DeprecationWarning", "UserWarning",
];

const DEFINITION_KINDS: &[&str] = &["function_definition", "class_definition", "decorated_definition"];

/// Statements whose nested blocks are transparent for definition scope
/// (`if TYPE_CHECKING:` imports, `try:` fallbacks and so on).
const COMPOUND_KINDS: &[&str] = &[
    "if_statement",
    "elif_clause",
    "else_clause",
    "try_statement",
    "except_clause",
    "except_group_clause",
    "finally_clause",
    "with_statement",
    "for_statement",
    "while_statement",
    "match_statement",
    "case_clause",
    "block",
    "ERROR",
];

#[derive(Clone)]
enum Scope {
    Module { key: String },
    Class { key: String, name: String },
    Function { key: String },
}

impl Scope {
    fn key(&self) -> &str {
        match self {
            Scope::Module { key } | Scope::Class { key, .. } | Scope::Function { key } => key,
        }
    }
}

struct RawRef {
    source: String,
    name: String,
    kind: RelationKind,
}

struct Extractor<'a> {
    src: &'a str,
    file: &'a SourceFile,
    entities: Vec<EntityRecord>,
    index: HashMap<String, usize>,
    parents: HashMap<String, String>,
    relations: Vec<Relation>,
    refs: Vec<RawRef>,
}

/// Walk a syntax tree and collect everything graph ingestion needs from one file.
pub fn extract_entities(tree: &SyntaxTree, file: &SourceFile) -> FileTransfer {
    let root = tree.root();
    let mut ex = Extractor {
        src: &file.text,
        file,
        entities: Vec::new(),
        index: HashMap::new(),
        parents: HashMap::new(),
        relations: Vec::new(),
        refs: Vec::new(),
    };

    let module_key = file.module_name.clone();
    let line_count = file.text.lines().count().max(1);
    ex.entities.push(EntityRecord {
        kind: EntityKind::Module,
        name: file.module_name.clone(),
        key: module_key.clone(),
        signature: String::new(),
        code: file.text.clone(),
        module_name: file.module_name.clone(),
        class_name: None,
        span: Span {
            start_line: 1,
            end_line: line_count,
            start_byte: 0,
            end_byte: file.text.len(),
        },
    });
    ex.index.insert(module_key.clone(), 0);

    ex.visit_block(root, &Scope::Module { key: module_key.clone() });

    let mut imports = Vec::new();
    collect_imports(root, ex.src, &mut imports);

    ex.finish(module_key, imports)
}

impl<'a> Extractor<'a> {
    fn text(&self, node: Node) -> &'a str {
        &self.src[node.start_byte()..node.end_byte()]
    }

    fn span(node: Node) -> Span {
        Span {
            start_line: node.start_position().row + 1,
            end_line: node.end_position().row + 1,
            start_byte: node.start_byte(),
            end_byte: node.end_byte(),
        }
    }

    fn visit_block(&mut self, block: Node, scope: &Scope) {
        let mut cursor = block.walk();
        let children: Vec<Node> = block.named_children(&mut cursor).collect();
        for stmt in children {
            self.visit_statement(stmt, scope);
        }
    }

    fn visit_statement(&mut self, stmt: Node, scope: &Scope) {
        match stmt.kind() {
            "decorated_definition" => {
                if let Some(def) = stmt.child_by_field_name("definition") {
                    self.visit_definition(stmt, def, scope);
                }
            }
            "function_definition" | "class_definition" => self.visit_definition(stmt, stmt, scope),
            "expression_statement" => {
                if !matches!(scope, Scope::Function { .. }) {
                    self.visit_assignment_statement(stmt, scope);
                }
            }
            kind if COMPOUND_KINDS.contains(&kind) => {
                let mut cursor = stmt.walk();
                let children: Vec<Node> = stmt.named_children(&mut cursor).collect();
                for child in children {
                    if child.kind() == "block" || COMPOUND_KINDS.contains(&child.kind()) {
                        self.visit_block(child, scope);
                    } else if DEFINITION_KINDS.contains(&child.kind())
                        || child.kind() == "expression_statement"
                    {
                        self.visit_statement(child, scope);
                    }
                }
            }
            _ => {}
        }
    }

    /// `outer` is the decorated wrapper when present, `def` the bare definition.
    fn visit_definition(&mut self, outer: Node, def: Node, scope: &Scope) {
        let Some(name_node) = def.child_by_field_name("name") else {
            return;
        };
        let name = self.text(name_node).to_string();
        let key = format!("{}.{}", scope.key(), name);
        let body = def.child_by_field_name("body");
        let header_end = body.map_or(def.end_byte(), |b| b.start_byte());
        let signature = self.src[def.start_byte()..header_end].trim_end().to_string();

        let is_class = def.kind() == "class_definition";
        let (kind, relation, class_name) = match (is_class, scope) {
            (true, _) => (EntityKind::Class, RelationKind::Contains, None),
            (false, Scope::Class { name, .. }) => {
                (EntityKind::Method, RelationKind::HasMethod, Some(name.clone()))
            }
            (false, _) => (EntityKind::Function, RelationKind::Contains, None),
        };

        self.add_entity(
            EntityRecord {
                kind,
                name: name.clone(),
                key: key.clone(),
                signature,
                code: self.text(outer).to_string(),
                module_name: self.file.module_name.clone(),
                class_name,
                span: Self::span(outer),
            },
            scope.key(),
            relation,
        );

        let mut scan = RefScan::new(self.src);
        if outer.kind() == "decorated_definition" {
            let mut cursor = outer.walk();
            for dec in outer.named_children(&mut cursor).filter(|n| n.kind() == "decorator") {
                scan.walk(dec);
            }
        }
        if is_class {
            if let Some(bases) = def.child_by_field_name("superclasses") {
                let mut cursor = bases.walk();
                for arg in bases.named_children(&mut cursor) {
                    match arg.kind() {
                        "identifier" | "attribute" => match dotted_chain(arg, self.src) {
                            Some(chain) => scan.push(chain, RelationKind::Inherits),
                            None => scan.walk(arg),
                        },
                        _ => scan.walk(arg),
                    }
                }
            }
            if let Some(body) = body {
                scan.walk_class_body(body);
            }
        } else {
            scan.walk_function(def);
        }
        for (name, kind) in scan.free_refs() {
            self.refs.push(RawRef {
                source: key.clone(),
                name,
                kind,
            });
        }

        if let Some(body) = body {
            let inner = if is_class {
                Scope::Class {
                    key: key.clone(),
                    name,
                }
            } else {
                Scope::Function { key: key.clone() }
            };
            self.visit_block(body, &inner);
        }
    }

    fn visit_assignment_statement(&mut self, stmt: Node, scope: &Scope) {
        let Some(assign) = stmt.named_child(0).filter(|n| n.kind() == "assignment") else {
            return;
        };
        let mut targets = Vec::new();
        let mut values = Vec::new();
        let mut signature_end = assign.end_byte();
        let mut current = Some(assign);
        let mut first = true;
        while let Some(a) = current {
            if let Some(left) = a.child_by_field_name("left") {
                collect_target_names(left, self.src, &mut targets);
                if first {
                    signature_end = a
                        .child_by_field_name("type")
                        .map_or(left.end_byte(), |t| t.end_byte());
                }
            }
            if let Some(ty) = a.child_by_field_name("type") {
                values.push(ty);
            }
            first = false;
            current = None;
            if let Some(right) = a.child_by_field_name("right") {
                if right.kind() == "assignment" {
                    current = Some(right);
                } else {
                    values.push(right);
                }
            }
        }
        if targets.is_empty() {
            return;
        }
        let signature = self.src[stmt.start_byte()..signature_end].trim().to_string();

        let (kind, relation, class_name) = match scope {
            Scope::Module { .. } => (EntityKind::GlobalVariable, RelationKind::Contains, None),
            Scope::Class { name, .. } => {
                (EntityKind::Field, RelationKind::HasField, Some(name.clone()))
            }
            Scope::Function { .. } => return,
        };

        let mut scan = RefScan::new(self.src);
        for v in &values {
            scan.walk(*v);
        }
        let free = scan.free_refs();

        for target in targets {
            let key = format!("{}.{}", scope.key(), target);
            self.add_entity(
                EntityRecord {
                    kind,
                    name: target,
                    key: key.clone(),
                    signature: signature.clone(),
                    code: self.text(stmt).to_string(),
                    module_name: self.file.module_name.clone(),
                    class_name: class_name.clone(),
                    span: Self::span(stmt),
                },
                scope.key(),
                relation,
            );
            // Field references belong to the owning class.
            let source = if kind == EntityKind::Field {
                scope.key().to_string()
            } else {
                key
            };
            for (name, kind) in &free {
                self.refs.push(RawRef {
                    source: source.clone(),
                    name: name.clone(),
                    kind: *kind,
                });
            }
        }
    }

    fn add_entity(&mut self, record: EntityRecord, parent: &str, relation: RelationKind) {
        if self.index.contains_key(&record.key) {
            self.drop_subtree(&record.key);
        }
        self.index.insert(record.key.clone(), self.entities.len());
        self.parents.insert(record.key.clone(), parent.to_string());
        self.relations.push(Relation {
            source: parent.to_string(),
            kind: relation,
            target: record.key.clone(),
        });
        self.entities.push(record);
    }

    /// Later definitions replace earlier ones with the same qualified name.
    fn drop_subtree(&mut self, key: &str) {
        let prefix = format!("{key}.");
        let doomed: HashSet<String> = self
            .entities
            .iter()
            .filter(|e| e.key == key || e.key.starts_with(&prefix))
            .map(|e| e.key.clone())
            .collect();
        self.entities.retain(|e| !doomed.contains(&e.key));
        self.relations
            .retain(|r| !doomed.contains(&r.source) && !doomed.contains(&r.target));
        self.refs.retain(|r| !doomed.contains(&r.source));
        for k in &doomed {
            self.parents.remove(k);
        }
        self.index = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key.clone(), i))
            .collect();
    }

    fn finish(self, module_key: String, imports: Vec<ImportRecord>) -> FileTransfer {
        let Extractor {
            file,
            entities,
            index,
            parents,
            mut relations,
            refs,
            ..
        } = self;

        // Names visible at module scope.
        let module_scope: HashMap<&str, usize> = entities
            .iter()
            .enumerate()
            .filter(|(_, e)| parents.get(&e.key).is_some_and(|p| *p == module_key))
            .map(|(i, e)| (e.name.as_str(), i))
            .collect();
        let import_bindings: HashSet<&str> = imports.iter().map(|i| i.binding()).collect();

        let mut uses_refs: Vec<UsesRef> = Vec::new();
        for raw in refs {
            if !index.contains_key(&raw.source) {
                continue;
            }
            let head = raw.name.split('.').next().unwrap_or(&raw.name);
            if let Some(&target_idx) = module_scope.get(head) {
                let target = &entities[target_idx];
                if target.key == raw.source {
                    continue;
                }
                let kind = if raw.kind == RelationKind::Inherits && target.kind == EntityKind::Class {
                    RelationKind::Inherits
                } else {
                    RelationKind::Uses
                };
                let source_kind = entities[index[&raw.source]].kind;
                if kind == RelationKind::Uses && !uses_source_ok(source_kind) {
                    continue;
                }
                relations.push(Relation {
                    source: raw.source,
                    kind,
                    target: target.key.clone(),
                });
            } else if import_bindings.contains(head) || !PY_BUILTINS.contains(&head) {
                uses_refs.push(UsesRef {
                    source: raw.source,
                    name: raw.name,
                    kind: raw.kind,
                });
            }
        }

        let mut seen = HashSet::new();
        relations.retain(|r| seen.insert((r.source.clone(), r.kind, r.target.clone())));
        let mut seen = HashSet::new();
        uses_refs.retain(|u| seen.insert((u.source.clone(), u.name.clone(), u.kind)));

        FileTransfer {
            source: file.clone(),
            entities,
            relations,
            imports,
            uses_refs,
        }
    }
}

fn uses_source_ok(kind: EntityKind) -> bool {
    matches!(
        kind,
        EntityKind::Class | EntityKind::Function | EntityKind::Method | EntityKind::GlobalVariable
    )
}

fn collect_target_names(node: Node, src: &str, out: &mut Vec<String>) {
    match node.kind() {
        "identifier" => out.push(src[node.byte_range()].to_string()),
        "pattern_list" | "tuple_pattern" | "list_pattern" | "parenthesized_expression" => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                collect_target_names(child, src, out);
            }
        }
        _ => {}
    }
}

/// `a.b.c` for a pure identifier/attribute chain, `None` otherwise.
fn dotted_chain(node: Node, src: &str) -> Option<String> {
    match node.kind() {
        "identifier" => Some(src[node.byte_range()].to_string()),
        "attribute" => {
            let object = node.child_by_field_name("object")?;
            let attr = node.child_by_field_name("attribute")?;
            let head = dotted_chain(object, src)?;
            Some(format!("{head}.{}", &src[attr.byte_range()]))
        }
        _ => None,
    }
}

/// Free-name collection for one entity body, approximating Python's
/// function-level scoping: any name bound anywhere in the body is local.
struct RefScan<'a> {
    src: &'a str,
    refs: Vec<(String, RelationKind)>,
    bound: HashSet<String>,
}

impl<'a> RefScan<'a> {
    fn new(src: &'a str) -> Self {
        RefScan {
            src,
            refs: Vec::new(),
            bound: HashSet::new(),
        }
    }

    fn push(&mut self, name: String, kind: RelationKind) {
        self.refs.push((name, kind));
    }

    fn bind(&mut self, node: Node) {
        let mut names = Vec::new();
        collect_target_names(node, self.src, &mut names);
        self.bound.extend(names);
    }

    fn free_refs(self) -> Vec<(String, RelationKind)> {
        let mut seen = HashSet::new();
        self.refs
            .into_iter()
            .filter(|(name, _)| {
                let head = name.split('.').next().unwrap_or(name);
                head != "self" && head != "cls" && !self.bound.contains(head)
            })
            .filter(|r| seen.insert(r.clone()))
            .collect()
    }

    fn walk_function(&mut self, def: Node) {
        if let Some(params) = def.child_by_field_name("parameters") {
            self.walk_parameters(params);
        }
        if let Some(ret) = def.child_by_field_name("return_type") {
            self.walk(ret);
        }
        if let Some(body) = def.child_by_field_name("body") {
            self.walk(body);
        }
    }

    fn walk_class_body(&mut self, body: Node) {
        let mut cursor = body.walk();
        for stmt in body.named_children(&mut cursor) {
            self.walk(stmt);
        }
    }

    fn walk_parameters(&mut self, params: Node) {
        let mut cursor = params.walk();
        for p in params.named_children(&mut cursor) {
            match p.kind() {
                "identifier" => {
                    self.bound.insert(self.src[p.byte_range()].to_string());
                }
                "typed_parameter" | "list_splat_pattern" | "dictionary_splat_pattern" => {
                    let mut c2 = p.walk();
                    for child in p.named_children(&mut c2) {
                        match child.kind() {
                            "identifier" => {
                                self.bound.insert(self.src[child.byte_range()].to_string());
                            }
                            "list_splat_pattern" | "dictionary_splat_pattern" => {
                                if let Some(id) = child.named_child(0) {
                                    self.bound.insert(self.src[id.byte_range()].to_string());
                                }
                            }
                            _ => self.walk(child),
                        }
                    }
                }
                "default_parameter" | "typed_default_parameter" => {
                    if let Some(name) = p.child_by_field_name("name") {
                        self.bound.insert(self.src[name.byte_range()].to_string());
                    }
                    if let Some(ty) = p.child_by_field_name("type") {
                        self.walk(ty);
                    }
                    if let Some(value) = p.child_by_field_name("value") {
                        self.walk(value);
                    }
                }
                _ => {}
            }
        }
    }

    fn walk(&mut self, node: Node) {
        match node.kind() {
            "function_definition" | "class_definition" | "decorated_definition" => {
                // Separate entity; only its name is bound here.
                let def = if node.kind() == "decorated_definition" {
                    node.child_by_field_name("definition")
                } else {
                    Some(node)
                };
                if let Some(name) = def.and_then(|d| d.child_by_field_name("name")) {
                    self.bound.insert(self.src[name.byte_range()].to_string());
                }
            }
            "identifier" => {
                let name = self.src[node.byte_range()].to_string();
                self.push(name, RelationKind::Uses);
            }
            "attribute" => match dotted_chain(node, self.src) {
                Some(chain) => self.push(chain, RelationKind::Uses),
                None => {
                    if let Some(object) = node.child_by_field_name("object") {
                        self.walk(object);
                    }
                }
            },
            "keyword_argument" => {
                if let Some(value) = node.child_by_field_name("value") {
                    self.walk(value);
                }
            }
            "lambda" => {
                if let Some(params) = node.child_by_field_name("parameters") {
                    self.walk_parameters(params);
                }
                if let Some(body) = node.child_by_field_name("body") {
                    self.walk(body);
                }
            }
            "assignment" | "augmented_assignment" => {
                if let Some(left) = node.child_by_field_name("left") {
                    if matches!(
                        left.kind(),
                        "identifier" | "pattern_list" | "tuple_pattern" | "list_pattern"
                    ) {
                        if node.kind() == "augmented_assignment" {
                            self.walk(left);
                        }
                        self.bind(left);
                    } else {
                        self.walk(left);
                    }
                }
                if let Some(ty) = node.child_by_field_name("type") {
                    self.walk(ty);
                }
                if let Some(right) = node.child_by_field_name("right") {
                    self.walk(right);
                }
            }
            "for_statement" | "for_in_clause" => {
                if let Some(left) = node.child_by_field_name("left") {
                    self.bind(left);
                }
                let mut cursor = node.walk();
                let children: Vec<Node> = node.named_children(&mut cursor).collect();
                let left_id = node.child_by_field_name("left").map(|l| l.id());
                for child in children {
                    if Some(child.id()) != left_id {
                        self.walk(child);
                    }
                }
            }
            "named_expression" => {
                if let Some(name) = node.child_by_field_name("name") {
                    self.bind(name);
                }
                if let Some(value) = node.child_by_field_name("value") {
                    self.walk(value);
                }
            }
            "as_pattern_target" => self.bind_all_identifiers(node),
            "import_statement" | "import_from_statement" | "future_import_statement"
            | "global_statement" | "nonlocal_statement" | "comment" => {}
            _ => {
                let mut cursor = node.walk();
                let mut after_as = false;
                let children: Vec<Node> = node.children(&mut cursor).collect();
                for child in children {
                    if !child.is_named() {
                        after_as = child.kind() == "as";
                        continue;
                    }
                    if after_as && child.kind() == "identifier" {
                        self.bound.insert(self.src[child.byte_range()].to_string());
                    } else {
                        self.walk(child);
                    }
                    after_as = false;
                }
            }
        }
    }

    fn bind_all_identifiers(&mut self, node: Node) {
        if node.kind() == "identifier" {
            self.bound.insert(self.src[node.byte_range()].to_string());
            return;
        }
        let mut cursor = node.walk();
        for child in node.named_children(&mut cursor) {
            self.bind_all_identifiers(child);
        }
    }
}

fn collect_imports(node: Node, src: &str, out: &mut Vec<ImportRecord>) {
    match node.kind() {
        "import_statement" => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                let (path_node, alias) = match child.kind() {
                    "dotted_name" => (Some(child), None),
                    "aliased_import" => (
                        child.child_by_field_name("name"),
                        child
                            .child_by_field_name("alias")
                            .map(|a| src[a.byte_range()].to_string()),
                    ),
                    _ => (None, None),
                };
                if let Some(path_node) = path_node {
                    let path = src[path_node.byte_range()].to_string();
                    push_unique(
                        out,
                        ImportRecord {
                            name: path.clone(),
                            module: path.clone(),
                            alias,
                            dotted_folder_name: Some(path),
                        },
                    );
                }
            }
        }
        "import_from_statement" => {
            let Some(module_node) = node.child_by_field_name("module_name") else {
                return;
            };
            let module: String = src[module_node.byte_range()]
                .chars()
                .filter(|c| !c.is_whitespace())
                .collect();
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                if child.id() == module_node.id() {
                    continue;
                }
                let (name, alias) = match child.kind() {
                    "dotted_name" => (src[child.byte_range()].to_string(), None),
                    "aliased_import" => (
                        child
                            .child_by_field_name("name")
                            .map(|n| src[n.byte_range()].to_string())
                            .unwrap_or_default(),
                        child
                            .child_by_field_name("alias")
                            .map(|a| src[a.byte_range()].to_string()),
                    ),
                    "wildcard_import" => ("*".to_string(), None),
                    _ => continue,
                };
                if name.is_empty() {
                    continue;
                }
                push_unique(
                    out,
                    ImportRecord {
                        name,
                        module: module.clone(),
                        alias,
                        dotted_folder_name: None,
                    },
                );
            }
        }
        _ => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                collect_imports(child, src, out);
            }
        }
    }
}

fn push_unique(out: &mut Vec<ImportRecord>, record: ImportRecord) {
    if !out.contains(&record) {
        out.push(record);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{BASE_PY, EXTENDED_PY};
    use crate::parser::{parse_file, Grammar};

    fn transfer(path: &str, text: &str) -> FileTransfer {
        let file = SourceFile::new(path, text);
        let tree = parse_file(&file, &Grammar::python()).unwrap();
        extract_entities(&tree, &file)
    }

    fn entity_set(ft: &FileTransfer) -> Vec<(EntityKind, String)> {
        let mut v: Vec<_> = ft.entities.iter().map(|e| (e.kind, e.name.clone())).collect();
        v.sort();
        v
    }

    fn rel(s: &str, k: RelationKind, t: &str) -> Relation {
        Relation {
            source: s.into(),
            kind: k,
            target: t.into(),
        }
    }

    #[test]
    fn base_fixture_entities_and_relations() {
        let ft = transfer("base.py", BASE_PY);
        use EntityKind::*;
        let mut expected = vec![
            (Module, "base".to_string()),
            (Class, "Calculator".to_string()),
            (Method, "add".to_string()),
            (Method, "multiply".to_string()),
            (Function, "format_result".to_string()),
            (GlobalVariable, "precision".to_string()),
        ];
        expected.sort();
        assert_eq!(entity_set(&ft), expected);

        let mut rels = ft.relations.clone();
        rels.sort_by(|a, b| (&a.source, a.kind, &a.target).cmp(&(&b.source, b.kind, &b.target)));
        let mut want = vec![
            rel("base", RelationKind::Contains, "base.Calculator"),
            rel("base", RelationKind::Contains, "base.format_result"),
            rel("base", RelationKind::Contains, "base.precision"),
            rel("base.Calculator", RelationKind::HasMethod, "base.Calculator.add"),
            rel("base.Calculator", RelationKind::HasMethod, "base.Calculator.multiply"),
        ];
        want.sort_by(|a, b| (&a.source, a.kind, &a.target).cmp(&(&b.source, b.kind, &b.target)));
        assert_eq!(rels, want);
        assert!(ft.imports.is_empty());

        let add = ft.entity("base.Calculator.add").unwrap();
        assert_eq!(add.class_name.as_deref(), Some("Calculator"));
        assert_eq!(add.signature, "def add(self, a, b):");
    }

    #[test]
    fn extended_fixture_imports_and_refs() {
        let ft = transfer("extended.py", EXTENDED_PY);
        for name in ["Calculator", "precision", "format_result"] {
            assert!(ft.imports.contains(&ImportRecord {
                name: name.into(),
                module: "base".into(),
                alias: None,
                dotted_folder_name: None,
            }));
        }
        let has = |src: &str, name: &str, kind| {
            ft.uses_refs
                .iter()
                .any(|u| u.source == src && u.name == name && u.kind == kind)
        };
        assert!(has("extended.quick_add", "Calculator", RelationKind::Uses));
        assert!(has("extended.Scientific", "Calculator", RelationKind::Inherits));
        assert!(has("extended.Scientific.divide", "precision", RelationKind::Uses));
        assert!(has("extended.demo", "format_result", RelationKind::Uses));
        // locals and builtins never leak
        assert!(!ft.uses_refs.iter().any(|u| u.name.starts_with("calc") && u.name != "Calculator"));
        assert!(!ft.uses_refs.iter().any(|u| u.name == "round"));
        assert!(ft
            .relations
            .contains(&rel("extended.demo", RelationKind::Uses, "extended.quick_add")));
    }

    #[test]
    fn empty_file_is_just_a_module() {
        let ft = transfer("empty.py", "");
        assert_eq!(ft.entities.len(), 1);
        assert_eq!(ft.entities[0].kind, EntityKind::Module);
        assert!(ft.relations.is_empty());
        assert!(ft.uses_refs.is_empty());
    }

    #[test]
    fn fields_nested_and_decorated() {
        let src = "\
import functools as ft

class Outer(Base, metaclass=Meta):
    size: int = DEFAULT
    label = 'x'

    @ft.lru_cache(maxsize=None)
    def compute(self, n=LIMIT):
        def helper(k):
            return k * 2
        return helper(n)

    class Inner:
        pass
";
        let ft = transfer("pkg/mod.py", src);
        let get = |k: &str| ft.entity(k).unwrap_or_else(|| panic!("missing {k}"));
        assert_eq!(get("pkg.mod.Outer.size").kind, EntityKind::Field);
        assert_eq!(get("pkg.mod.Outer.size").signature, "size: int");
        assert_eq!(get("pkg.mod.Outer.label").class_name.as_deref(), Some("Outer"));
        let compute = get("pkg.mod.Outer.compute");
        assert_eq!(compute.kind, EntityKind::Method);
        assert!(compute.code.starts_with("@ft.lru_cache"));
        assert_eq!(compute.signature, "def compute(self, n=LIMIT):");
        assert_eq!(get("pkg.mod.Outer.compute.helper").kind, EntityKind::Function);
        assert_eq!(get("pkg.mod.Outer.Inner").kind, EntityKind::Class);
        assert!(ft.relations.contains(&rel(
            "pkg.mod.Outer.compute",
            RelationKind::Contains,
            "pkg.mod.Outer.compute.helper"
        )));
        assert!(ft.relations.contains(&rel("pkg.mod.Outer", RelationKind::Contains, "pkg.mod.Outer.Inner")));
        let refs: Vec<_> = ft.uses_refs.iter().map(|u| (u.source.as_str(), u.name.as_str(), u.kind)).collect();
        assert!(refs.contains(&("pkg.mod.Outer", "Base", RelationKind::Inherits)));
        assert!(refs.contains(&("pkg.mod.Outer", "Meta", RelationKind::Uses)));
        assert!(refs.contains(&("pkg.mod.Outer", "DEFAULT", RelationKind::Uses)));
        assert!(refs.contains(&("pkg.mod.Outer.compute", "ft.lru_cache", RelationKind::Uses)));
        assert!(refs.contains(&("pkg.mod.Outer.compute", "LIMIT", RelationKind::Uses)));
        assert!(!refs.iter().any(|r| r.1 == "helper" || r.1 == "n" || r.1 == "k"));
        assert_eq!(ft.imports[0].binding(), "ft");
    }

    #[test]
    fn last_definition_wins() {
        let src = "class A:\n    def m(self):\n        pass\n\nA = 3\n\ndef f():\n    return 1\n\ndef f():\n    return 2\n";
        let ft = transfer("d.py", src);
        assert_eq!(ft.entity("d.A").unwrap().kind, EntityKind::GlobalVariable);
        assert!(ft.entity("d.A.m").is_none());
        assert!(ft.entity("d.f").unwrap().code.contains("return 2"));
        assert_eq!(ft.entities.iter().filter(|e| e.key == "d.f").count(), 1);
        assert!(!ft.relations.iter().any(|r| r.target == "d.A.m"));
    }

    #[test]
    fn conditional_and_star_imports() {
        let src = "\
try:
    from .fast import speedy as go
except ImportError:
    from ..slow import *
if DEBUG:
    LEVEL = 1
import os.path
";
        let ft = transfer("pkg/sub/m.py", src);
        assert!(ft.imports.contains(&ImportRecord {
            name: "speedy".into(),
            module: ".fast".into(),
            alias: Some("go".into()),
            dotted_folder_name: None
        }));
        assert!(ft.imports.iter().any(|i| i.is_star() && i.module == "..slow"));
        let os = ft.imports.iter().find(|i| i.dotted_folder_name.is_some()).unwrap();
        assert_eq!(os.binding(), "os");
        assert_eq!(ft.entity("pkg.sub.m.LEVEL").unwrap().kind, EntityKind::GlobalVariable);
    }

    #[test]
    fn tuple_and_chained_globals() {
        let ft = transfer("g.py", "a, b = 1, 2\nx = y = make()\n");
        for k in ["g.a", "g.b", "g.x", "g.y"] {
            assert_eq!(ft.entity(k).unwrap().kind, EntityKind::GlobalVariable, "{k}");
        }
        assert!(ft.uses_refs.iter().any(|u| u.source == "g.x" && u.name == "make"));
    }

    #[test]
    fn spans_match_code() {
        for (path, text) in [("base.py", BASE_PY), ("extended.py", EXTENDED_PY)] {
            let ft = transfer(path, text);
            for e in &ft.entities {
                assert_eq!(&text[e.span.start_byte..e.span.end_byte], e.code);
                assert!(e.span.start_line <= e.span.end_line);
                let lines: Vec<&str> = text.lines().collect();
                let first = lines[e.span.start_line - 1];
                if e.kind != EntityKind::Module {
                    assert!(first.contains(e.code.lines().next().unwrap().trim()));
                }
            }
        }
    }
}
