//! Two-path retrieval: translate the question to Cypher and run it; fall back
//! to tree search when that yields nothing.
//!
//! ```
//! use repograph::annotate::{annotate_graph, embed_graph, DEFAULT_EMBED_BATCH, DEFAULT_SIZE_LIMIT};
//! use repograph::encoders::{LocalDescriber, LocalEmbedder, LocalReranker};
//! use repograph::fixtures::two_file_graph;
//! use repograph::mcts::SearchConfig;
//! use repograph::router::{route, RetrievalPath, RuleBasedTranslator};
//!
//! let mut graph = two_file_graph();
//! annotate_graph(&mut graph, &LocalDescriber::default(), DEFAULT_SIZE_LIMIT).unwrap();
//! embed_graph(&mut graph, &LocalEmbedder::default(), DEFAULT_EMBED_BATCH).unwrap();
//! let config = SearchConfig::defaults_for(&graph);
//!
//! let r = route(&graph, "What methods does Calculator have?", &RuleBasedTranslator,
//!               &LocalEmbedder::default(), &LocalReranker, &config).unwrap();
//! assert_eq!(r.path, RetrievalPath::Entity);
//!
//! let r = route(&graph, "Where is the code for addition?", &RuleBasedTranslator,
//!               &LocalEmbedder::default(), &LocalReranker, &config).unwrap();
//! assert_eq!(r.path, RetrievalPath::Mcts);
//! ```

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cypher::{execute, parse_cypher, ResultTable};
use crate::encoders::wire::Client;
use crate::encoders::{Embedder, EncoderError, Reranker, WireConfig};
use crate::graph::{CodeGraph, Direction, EdgeKind, Node, NodeId, NodeKind};
use crate::mcts::{search, SearchConfig, SearchError, SearchResult};
use crate::prompts;

#[derive(Debug, thiserror::Error)]
pub enum TranslationFailure {
    #[error("no graph identifier found in the query")]
    NoIdentifier,
    #[error("translator output does not parse: {0}")]
    Unparseable(String),
    #[error("translator backend failed: {0}")]
    Backend(#[from] EncoderError),
}

/// Natural language to Cypher.
pub trait QueryTranslator: Send + Sync {
    fn translate(&self, query: &str, graph: &CodeGraph) -> Result<String, TranslationFailure>;
}

/// Identifier-driven offline translator.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedTranslator;

impl QueryTranslator for RuleBasedTranslator {
    fn translate(&self, query: &str, graph: &CodeGraph) -> Result<String, TranslationFailure> {
        rule_based_translate(query, graph)
    }
}

const KIND_PREFERENCE: [NodeKind; 6] = [
    NodeKind::Class,
    NodeKind::Function,
    NodeKind::Method,
    NodeKind::Module,
    NodeKind::GlobalVariable,
    NodeKind::Field,
];

fn looks_like_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    let Some(first) = chars.next() else { return false };
    if !(first.is_alphabetic() || first == '_') {
        return false;
    }
    let has_lower = word.chars().any(|c| c.is_lowercase());
    let inner_upper = word.chars().skip(1).any(|c| c.is_uppercase());
    word.contains('_') || word.contains('.') || (has_lower && (first.is_uppercase() || inner_upper))
}

/// Identifiers in order of preference: backtick spans, then CamelCase,
/// snake_case and dotted words in reading order.
pub fn extract_identifiers(query: &str) -> Vec<String> {
    let mut quoted = Vec::new();
    let mut rest = String::new();
    for (i, part) in query.split('`').enumerate() {
        if i % 2 == 1 {
            let t = part.trim();
            if !t.is_empty() {
                quoted.push(t.to_string());
            }
        } else {
            rest.push_str(part);
            rest.push(' ');
        }
    }
    let words = rest
        .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
        .map(|w| w.trim_matches('.'))
        .filter(|w| looks_like_identifier(w))
        .map(String::from);
    let mut out: Vec<String> = Vec::new();
    for w in quoted.into_iter().chain(words) {
        if !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

fn best_hit(query: &str, graph: &CodeGraph) -> Option<NodeId> {
    for ident in extract_identifiers(query) {
        for kind in KIND_PREFERENCE {
            if let Some(id) = graph.lookup(kind, &ident).first() {
                return Some(*id);
            }
        }
    }
    None
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn pattern(node: &Node, var: &str) -> String {
    format!("({var}:{} {{name: {}}})", node.kind, quote(&node.name))
}

/// The hit anchored under its structural parent so same-named entities elsewhere do not match.
fn anchored(graph: &CodeGraph, node: &Node) -> String {
    let parent = graph
        .neighbors(node.id, Direction::In, Some(&[EdgeKind::Contains, EdgeKind::HasMethod, EdgeKind::HasField]))
        .unwrap_or_default()
        .into_iter()
        .filter_map(|(p, k)| Some((graph.node(p)?, k)))
        .find(|(p, _)| p.kind != NodeKind::Repo);
    match parent {
        Some((p, kind)) => format!("{}-[:{kind}]->{}", pattern(p, "p"), pattern(node, "n")),
        None => pattern(node, "n"),
    }
}

const DETAIL: &str = "x.name AS name, x.signature AS signature, x.code AS code";

/// Build a query for the best identifier hit.
///
/// The question's wording picks the hop: methods, fields, base classes,
/// module members, dependencies, or the entity itself with its uses.
pub fn rule_based_translate(query: &str, graph: &CodeGraph) -> Result<String, TranslationFailure> {
    let id = best_hit(query, graph).ok_or(TranslationFailure::NoIdentifier)?;
    let node = graph.node(id).expect("lookup returns live nodes");
    let lower = query.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
    let has = |stems: &[&str]| words.iter().any(|w| stems.iter().any(|s| w.starts_with(s)));
    let anchor = anchored(graph, node);

    let hop = |edge: &str| {
        format!(
            "MATCH {anchor}-[:{edge}]->(x)\nRETURN DISTINCT {}",
            DETAIL
        )
    };
    let text = match node.kind {
        NodeKind::Class if has(&["method"]) => hop("HAS_METHOD"),
        NodeKind::Class if has(&["field", "attribute"]) => hop("HAS_FIELD"),
        NodeKind::Class if has(&["inherit", "parent", "superclass", "base"]) => hop("INHERITS"),
        NodeKind::Module if has(&["contain", "define", "member"]) => hop("CONTAINS"),
        _ if has(&["depend", "use", "call", "import"]) => format!(
            "MATCH {anchor}\nOPTIONAL MATCH (n)-[:USES]->(x)\nRETURN DISTINCT {}",
            DETAIL
        ),
        _ => format!(
            "MATCH {anchor}\nOPTIONAL MATCH (n)-[:USES]->(dep)\n\
             RETURN DISTINCT n.name AS name, n.signature AS signature, n.code AS code, dep.name AS uses"
        ),
    };
    Ok(text)
}

/// Which Cypher prompt the wire translator sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PromptStyle {
    #[default]
    Completion,
    Snippet,
}

/// Remote LLM translator. Posts `{system, schema, query}` to `/translate`
/// and reads `{text}`.
pub struct WireTranslator {
    client: Client,
    style: PromptStyle,
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    system: &'a str,
    schema: &'a str,
    query: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

impl WireTranslator {
    pub fn new(config: WireConfig, style: PromptStyle) -> Self {
        WireTranslator {
            client: Client::new(config),
            style,
        }
    }
}

impl QueryTranslator for WireTranslator {
    fn translate(&self, query: &str, _graph: &CodeGraph) -> Result<String, TranslationFailure> {
        let system = match self.style {
            PromptStyle::Completion => prompts::CYPHER_CROSSCODEEVAL,
            PromptStyle::Snippet => prompts::CYPHER_REPOBENCH,
        };
        let body = TranslateRequest {
            system,
            schema: prompts::GRAPH_SCHEMA,
            query,
        };
        let resp: TranslateResponse = self.client.post("/translate", &body)?;
        Ok(extract_cypher(&resp.text))
    }
}

/// Pull the query out of model output: the last fenced block, else text after `**Query:**`.
pub fn extract_cypher(text: &str) -> String {
    let parts: Vec<&str> = text.split("```").collect();
    if parts.len() >= 3 {
        let block = parts[parts.len() - 2 - (parts.len() + 1) % 2];
        let block = block.strip_prefix("cypher").unwrap_or(block);
        return block.trim().to_string();
    }
    if let Some((_, after)) = text.rsplit_once("**Query:**") {
        return after.trim().to_string();
    }
    text.trim().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalPath {
    Entity,
    Mcts,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RouteDiagnostics {
    pub translator_text: Option<String>,
    /// Why the entity path was not taken.
    pub fallback_reason: Option<String>,
    #[serde(skip)]
    pub translate_time: Duration,
    #[serde(skip)]
    pub execute_time: Duration,
    #[serde(skip)]
    pub search_time: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievalResponse {
    pub path: RetrievalPath,
    pub entity_rows: Option<ResultTable>,
    #[serde(serialize_with = "ser_search")]
    pub ranked_nodes: Option<SearchResult>,
    pub diagnostics: RouteDiagnostics,
}

fn ser_search<S: serde::Serializer>(r: &Option<SearchResult>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => r.ranked.serialize(s),
        None => s.serialize_none(),
    }
}

impl RetrievalResponse {
    /// Retrieved nodes best first, whichever path answered.
    pub fn ranking(&self) -> Vec<NodeId> {
        match (&self.entity_rows, &self.ranked_nodes) {
            (Some(t), _) => t.ranked_nodes(),
            (_, Some(r)) => r.ids(),
            _ => Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// Try the entity path; fall back to search on failure or an empty table.
///
/// A table whose rows are all null counts as empty.
pub fn route(
    graph: &CodeGraph,
    query: &str,
    translator: &dyn QueryTranslator,
    embedder: &dyn Embedder,
    reranker: &dyn Reranker,
    config: &SearchConfig,
) -> Result<RetrievalResponse, SearchError> {
    let mut diag = RouteDiagnostics::default();
    let started = Instant::now();
    let translated = translator.translate(query, graph);
    diag.translate_time = started.elapsed();

    let reason = match translated {
        Err(e) => e.to_string(),
        Ok(text) => {
            diag.translator_text = Some(text.clone());
            match parse_cypher(&text) {
                Err(e) => TranslationFailure::Unparseable(e.to_string()).to_string(),
                Ok(plan) => {
                    let started = Instant::now();
                    let table = execute(graph, &plan);
                    diag.execute_time = started.elapsed();
                    if !table.is_effectively_empty() {
                        return Ok(RetrievalResponse {
                            path: RetrievalPath::Entity,
                            entity_rows: Some(table),
                            ranked_nodes: None,
                            diagnostics: diag,
                        });
                    }
                    "query returned no rows".to_string()
                }
            }
        }
    };
    log::info!("falling back to graph search: {reason}");
    diag.fallback_reason = Some(reason);
    let started = Instant::now();
    let result = search(graph, query, embedder, reranker, config)?;
    diag.search_time = started.elapsed();
    Ok(RetrievalResponse {
        path: RetrievalPath::Mcts,
        entity_rows: None,
        ranked_nodes: Some(result),
        diagnostics: diag,
    })
}
