//! File-level parsing: source files in, [`FileTransfer`] records out.
//!
//! Each file is parsed independently into a concrete syntax tree and then
//! walked once to collect entities, intra-file relations, imports and the
//! names it references but does not define. Nothing here looks at other
//! files; cross-file stitching happens in [`crate::builder`].

mod extract;
mod scan;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use extract::extract_entities;
pub use scan::{scan_repository, Diagnostic, ScanError, ScanOptions, ScanOutput};

/// One source file of a repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    /// Repository-relative path, always with `/` separators.
    pub path: String,
    pub module_name: String,
    #[serde(skip)]
    pub text: String,
}

impl SourceFile {
    /// Build a source file, deriving the dotted module name from `path`.
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        let path = path.into().replace('\\', "/");
        let module_name = module_name_for_path(&path);
        SourceFile {
            path,
            module_name,
            text: text.into(),
        }
    }

    /// `pkg/__init__.py` defines package `pkg` itself.
    pub fn is_package_init(&self) -> bool {
        Path::new(&self.path)
            .file_stem()
            .is_some_and(|stem| stem == "__init__")
    }

    /// Dotted name of the package relative imports are resolved against.
    pub fn package(&self) -> String {
        if self.is_package_init() {
            self.module_name.clone()
        } else {
            match self.module_name.rsplit_once('.') {
                Some((pkg, _)) => pkg.to_string(),
                None => String::new(),
            }
        }
    }
}

/// `pkg/sub/mod.py` -> `pkg.sub.mod`; `pkg/__init__.py` -> `pkg`.
pub fn module_name_for_path(path: &str) -> String {
    let path = path.replace('\\', "/");
    let trimmed = match path.rfind('.') {
        Some(dot) if !path[dot..].contains('/') => &path[..dot],
        _ => path.as_str(),
    };
    let mut parts: Vec<&str> = trimmed.split('/').filter(|p| !p.is_empty()).collect();
    if parts.len() > 1 && parts.last() == Some(&"__init__") {
        parts.pop();
    }
    parts.join(".")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Module,
    Class,
    Function,
    Method,
    Field,
    GlobalVariable,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Module => "Module",
            EntityKind::Class => "Class",
            EntityKind::Function => "Function",
            EntityKind::Method => "Method",
            EntityKind::Field => "Field",
            EntityKind::GlobalVariable => "GlobalVariable",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Line range (1-based, inclusive) plus the exact byte range of the entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_line: usize,
    pub end_line: usize,
    pub start_byte: usize,
    pub end_byte: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub kind: EntityKind,
    pub name: String,
    /// Qualified name, unique within the file. Relations refer to entities by this key.
    pub key: String,
    pub signature: String,
    pub code: String,
    pub module_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_name: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportRecord {
    pub name: String,
    /// Source module exactly as written, including leading dots for relative imports.
    pub module: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
    /// Set for plain `import a.b.c` statements: the full dotted path imported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dotted_folder_name: Option<String>,
}

impl ImportRecord {
    /// The name this import binds in the importing module's namespace.
    pub fn binding(&self) -> &str {
        if let Some(alias) = &self.alias {
            return alias;
        }
        match &self.dotted_folder_name {
            Some(path) => path.split('.').next().unwrap_or(path),
            None => &self.name,
        }
    }

    pub fn is_star(&self) -> bool {
        self.name == "*"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelationKind {
    Contains,
    HasMethod,
    HasField,
    Inherits,
    Uses,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub source: String,
    pub kind: RelationKind,
    pub target: String,
}

/// A name referenced by an entity but not defined in the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsesRef {
    pub source: String,
    /// Referenced name; dotted for attribute chains (`np.zeros`).
    pub name: String,
    /// `Uses`, or `Inherits` for base-class references.
    pub kind: RelationKind,
}

/// Decoupled per-file record handed from the parser to graph ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileTransfer {
    pub source: SourceFile,
    pub entities: Vec<EntityRecord>,
    pub relations: Vec<Relation>,
    pub imports: Vec<ImportRecord>,
    pub uses_refs: Vec<UsesRef>,
}

impl FileTransfer {
    pub fn entity(&self, key: &str) -> Option<&EntityRecord> {
        self.entities.iter().find(|e| e.key == key)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("FileTransfer serialization cannot fail")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("{path}: file is not valid UTF-8")]
    UndecodableFile { path: String },
    #[error("failed to load grammar: {0}")]
    Grammar(String),
    #[error("parser produced no tree for {path}")]
    NoTree { path: String },
}

/// Language grammar handle. Only Python ships.
#[derive(Clone)]
pub struct Grammar {
    language: tree_sitter::Language,
    extensions: &'static [&'static str],
}

impl fmt::Debug for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grammar")
            .field("extensions", &self.extensions)
            .finish()
    }
}

impl Grammar {
    pub fn python() -> Self {
        Grammar {
            language: tree_sitter_python::LANGUAGE.into(),
            extensions: &["py"],
        }
    }

    pub fn extensions(&self) -> &'static [&'static str] {
        self.extensions
    }

    pub fn matches_path(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| self.extensions.contains(&e))
    }

    fn parser(&self) -> Result<tree_sitter::Parser, ParseError> {
        let mut parser = tree_sitter::Parser::new();
        parser
            .set_language(&self.language)
            .map_err(|e| ParseError::Grammar(e.to_string()))?;
        Ok(parser)
    }
}

/// Concrete syntax tree of one file. Syntax errors show up as `ERROR` nodes.
pub struct SyntaxTree {
    tree: tree_sitter::Tree,
}

impl SyntaxTree {
    pub fn root(&self) -> tree_sitter::Node<'_> {
        self.tree.root_node()
    }

    /// Kinds of the named top-level statements, in source order.
    pub fn top_level_kinds(&self) -> Vec<&'static str> {
        let root = self.root();
        let mut cursor = root.walk();
        root.named_children(&mut cursor)
            .filter(|n| n.kind() != "comment")
            .map(|n| n.kind())
            .collect()
    }

    pub fn has_errors(&self) -> bool {
        self.root().has_error()
    }
}

/// Parse a file's text into a syntax tree.
pub fn parse_file(file: &SourceFile, grammar: &Grammar) -> Result<SyntaxTree, ParseError> {
    let mut parser = grammar.parser()?;
    parse_with(&mut parser, file)
}

fn parse_with(parser: &mut tree_sitter::Parser, file: &SourceFile) -> Result<SyntaxTree, ParseError> {
    let tree = parser
        .parse(&file.text, None)
        .ok_or_else(|| ParseError::NoTree {
            path: file.path.clone(),
        })?;
    Ok(SyntaxTree { tree })
}

/// Decode raw bytes and build the FileTransfer in one step.
pub fn parse_source(
    path: &str,
    bytes: Vec<u8>,
    grammar: &Grammar,
) -> Result<FileTransfer, ParseError> {
    let text = String::from_utf8(bytes).map_err(|_| ParseError::UndecodableFile {
        path: path.to_string(),
    })?;
    let file = SourceFile::new(path, text);
    let tree = parse_file(&file, grammar)?;
    Ok(extract_entities(&tree, &file))
}
