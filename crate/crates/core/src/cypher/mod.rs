//! A read-only Cypher subset evaluated directly over a [`CodeGraph`].
//!
//! Supported: `MATCH` / `OPTIONAL MATCH` with comma-separated pattern
//! chains, node patterns `(v:Label {prop: 'literal'})`, typed directed
//! relationships `-[:KIND]->` / `<-[:KIND]-`, `RETURN [DISTINCT]` of
//! `v`, `v.prop` or `labels(v)` with optional `AS alias`, and `UNION` /
//! `UNION ALL`.
//!
//! ```
//! use repograph::cypher::run_entity_query;
//! use repograph::fixtures::two_file_graph;
//!
//! let graph = two_file_graph();
//! let table = run_entity_query(
//!     &graph,
//!     "MATCH (c:Class {name: 'Calculator'})-[:HAS_METHOD]->(m) RETURN m.name",
//! )
//! .unwrap();
//! assert_eq!(table.columns, vec!["m.name"]);
//! assert_eq!(table.rows.len(), 2);
//! ```

mod exec;
mod lexer;
mod parse;

use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::graph::{CodeGraph, NodeId, NodeKind};

pub use exec::execute;
pub use parse::parse_cypher;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    pub branches: Vec<Branch>,
    /// `true` for `UNION ALL`. One entry per gap between branches.
    pub union_all: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub clauses: Vec<MatchClause>,
    pub ret: Return,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchClause {
    pub optional: bool,
    pub patterns: Vec<PatternChain>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternChain {
    pub start: NodePattern,
    pub steps: Vec<(RelPattern, NodePattern)>,
}

impl PatternChain {
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodePattern> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|(_, n)| n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodePattern {
    /// Anonymous patterns get a generated name starting with a space.
    pub var: String,
    pub labels: Vec<String>,
    pub props: Vec<(String, String)>,
}

impl NodePattern {
    pub fn is_anonymous(&self) -> bool {
        self.var.starts_with(' ')
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelDirection {
    /// `-[]->`
    Out,
    /// `<-[]-`
    In,
    /// `-[]-`
    Either,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelPattern {
    /// Empty means any kind.
    pub kinds: Vec<String>,
    pub direction: RelDirection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Return {
    pub distinct: bool,
    pub items: Vec<ReturnItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReturnItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

impl ReturnItem {
    pub fn column(&self) -> String {
        self.alias.clone().unwrap_or_else(|| self.expr.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    Prop(String, String),
    Labels(String),
}

impl Expr {
    pub fn var(&self) -> &str {
        match self {
            Expr::Var(v) | Expr::Prop(v, _) | Expr::Labels(v) => v,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => write_ident(f, v),
            Expr::Prop(v, p) => {
                write_ident(f, v)?;
                f.write_str(".")?;
                write_ident(f, p)
            }
            Expr::Labels(v) => {
                f.write_str("labels(")?;
                write_ident(f, v)?;
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CypherError {
    #[error("syntax error at offset {position}: expected {}, found {found}", expected.join(" or "))]
    SyntaxError {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error("variable `{0}` is not bound by any MATCH")]
    UnboundVariable(String),
    #[error("UNION branches return different columns: {0:?} vs {1:?}")]
    UnionColumnMismatch(Vec<String>, Vec<String>),
}

fn write_ident(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    let plain = name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_alphanumeric() || c == '_');
    if plain {
        f.write_str(name)
    } else {
        write!(f, "`{name}`")
    }
}

impl fmt::Display for NodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        if !self.is_anonymous() {
            write_ident(f, &self.var)?;
        }
        for l in &self.labels {
            f.write_str(":")?;
            write_ident(f, l)?;
        }
        if !self.props.is_empty() {
            f.write_str(if self.is_anonymous() && self.labels.is_empty() { "{" } else { " {" })?;
            for (i, (k, v)) in self.props.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_ident(f, k)?;
                let escaped = v.replace('\\', "\\\\").replace('\'', "\\'").replace('\n', "\\n").replace('\t', "\\t");
                write!(f, ": '{escaped}'")?;
            }
            f.write_str("}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for RelPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.direction == RelDirection::In { "<-" } else { "-" })?;
        if !self.kinds.is_empty() {
            f.write_str("[")?;
            for (i, k) in self.kinds.iter().enumerate() {
                f.write_str(if i == 0 { ":" } else { "|" })?;
                write_ident(f, k)?;
            }
            f.write_str("]")?;
        }
        f.write_str(if self.direction == RelDirection::Out { "->" } else { "-" })
    }
}

impl fmt::Display for PatternChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)?;
        for (rel, node) in &self.steps {
            write!(f, "{rel}{node}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            f.write_str(if c.optional { "OPTIONAL MATCH " } else { "MATCH " })?;
            for (i, p) in c.patterns.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{p}")?;
            }
            f.write_str("\n")?;
        }
        f.write_str(if self.ret.distinct { "RETURN DISTINCT " } else { "RETURN " })?;
        for (i, item) in self.ret.items.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", item.expr)?;
            if let Some(a) = &item.alias {
                f.write_str(" AS ")?;
                write_ident(f, a)?;
            }
        }
        Ok(())
    }
}

/// Canonical query text; parses back to an equal plan.
impl fmt::Display for QueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.branches.iter().enumerate() {
            if i > 0 {
                let all = self.union_all.get(i - 1).copied().unwrap_or(false);
                f.write_str(if all { "\nUNION ALL\n" } else { "\nUNION\n" })?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Reference to a node in a result row.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRef {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
    pub module_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Str(String),
    Float(f64),
    Node(NodeRef),
    List(Vec<Value>),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Str(v) => s.serialize_str(v),
            Value::Float(v) => s.serialize_f64(*v),
            Value::Node(n) => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("kind", n.kind.as_str())?;
                m.serialize_entry("name", &n.name)?;
                m.serialize_entry("module_name", &n.module_name)?;
                m.end()
            }
            Value::List(items) => {
                let mut seq = s.serialize_seq(Some(items.len()))?;
                for i in items {
                    seq.serialize_element(i)?;
                }
                seq.end()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Non-null nodes referenced by each row, in column order.
    #[serde(skip)]
    pub row_nodes: Vec<Vec<NodeId>>,
}

impl ResultTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True when no row carries any non-null value.
    pub fn is_effectively_empty(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(Value::is_null))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("table serialization cannot fail")
    }

    /// Distinct nodes in first-seen order, taking the first node of each row.
    pub fn ranked_nodes(&self) -> Vec<NodeId> {
        let mut seen = std::collections::HashSet::new();
        self.row_nodes
            .iter()
            .filter_map(|r| r.first().copied())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

/// Parse and execute in one step.
pub fn run_entity_query(graph: &CodeGraph, text: &str) -> Result<ResultTable, CypherError> {
    let plan = parse_cypher(text)?;
    Ok(execute(graph, &plan))
}
