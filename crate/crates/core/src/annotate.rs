//! Bottom-up descriptions and embeddings for graph nodes.
//!
//! Entities whose code fits the describer are summarised straight from code.
//! Larger ones are summarised from the descriptions of their hierarchical
//! children, which is why annotation runs leaves first.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::encoders::{DescribeMode, Describer, Embedder, EncoderError, NO_MEMBERS};
use crate::graph::{CodeGraph, Direction, EdgeKind, GraphError, NodeId, NodeKind};

pub const DEFAULT_SIZE_LIMIT: usize = 6_000;
pub const DEFAULT_EMBED_BATCH: usize = 64;

const HIERARCHY: [EdgeKind; 3] = [EdgeKind::Contains, EdgeKind::HasMethod, EdgeKind::HasField];

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("containment hierarchy has a cycle through {0} nodes")]
    HierarchyCycle(usize),
    #[error("child {child} of {parent} is not annotated yet")]
    NotReady { parent: NodeId, child: NodeId },
    #[error("describer unavailable: {0}")]
    DescriberUnavailable(EncoderError),
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(EncoderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn hierarchy_children(graph: &CodeGraph, id: NodeId) -> Vec<NodeId> {
    graph
        .neighbors(id, Direction::Out, Some(&HIERARCHY))
        .unwrap_or_default()
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| graph.node(*n).is_some_and(|n| n.kind.is_annotatable()))
        .collect()
}

/// Annotatable nodes ordered by (height in the hierarchy, id): every node
/// comes after all of its hierarchical children.
pub fn annotation_order(graph: &CodeGraph) -> Result<Vec<NodeId>, AnnotateError> {
    Ok(annotation_layers(graph)?.into_iter().flatten().collect())
}

/// Same order, grouped by height. Nodes within a layer are independent.
pub fn annotation_layers(graph: &CodeGraph) -> Result<Vec<Vec<NodeId>>, AnnotateError> {
    let nodes: Vec<NodeId> = graph
        .nodes()
        .filter(|n| n.kind.is_annotatable())
        .map(|n| n.id)
        .collect();
    let mut pending: HashMap<NodeId, usize> = HashMap::new();
    let mut parents: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for &id in &nodes {
        let children = hierarchy_children(graph, id);
        pending.insert(id, children.len());
        for c in children {
            parents.entry(c).or_default().push(id);
        }
    }
    let mut height: HashMap<NodeId, usize> = HashMap::new();
    let mut ready: Vec<NodeId> = nodes.iter().copied().filter(|id| pending[id] == 0).collect();
    while let Some(id) = ready.pop() {
        let h = *height.entry(id).or_insert(0);
        for &p in parents.get(&id).into_iter().flatten() {
            let ph = height.entry(p).or_insert(0);
            *ph = (*ph).max(h + 1);
            let left = pending.get_mut(&p).expect("parent is annotatable");
            *left -= 1;
            if *left == 0 {
                ready.push(p);
            }
        }
    }
    let stuck = pending.values().filter(|v| **v > 0).count();
    if stuck > 0 {
        return Err(AnnotateError::HierarchyCycle(stuck));
    }
    let mut layers: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for id in nodes {
        layers.entry(height[&id]).or_default().push(id);
    }
    Ok(layers.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationPath {
    /// Both texts generated from the entity's own code.
    Direct,
    /// Composed from children's descriptions.
    Composed,
}

/// Texts computed for one node, not yet written.
#[derive(Debug, Clone)]
pub struct Annotation {
    pub description: String,
    pub member_descriptions: String,
    pub path: AnnotationPath,
}

fn describe(d: &dyn Describer, input: &str, mode: DescribeMode) -> Result<String, EncoderError> {
    d.describe(input, mode)
}

/// Compute the descriptions for `id` without mutating the graph.
pub fn describe_node(
    graph: &CodeGraph,
    id: NodeId,
    describer: &dyn Describer,
    size_limit: usize,
) -> Result<Annotation, AnnotateError> {
    let node = graph.node(id).ok_or(GraphError::UnknownNode(id))?;
    let code = node.code.as_deref().unwrap_or("");
    let always_small = matches!(node.kind, NodeKind::Field | NodeKind::GlobalVariable);
    if always_small || code.chars().count() <= size_limit {
        let direct = describe(describer, code, DescribeMode::SummarizeCode).and_then(|description| {
            let members = describe(describer, code, DescribeMode::ListMembers)?;
            Ok(Annotation {
                description,
                member_descriptions: members,
                path: AnnotationPath::Direct,
            })
        });
        match direct {
            Ok(a) => return Ok(a),
            Err(EncoderError::ContextOverflow { .. }) if !always_small => {
                log::debug!("{} overflows the describer, composing", node.key);
            }
            Err(e) => return Err(AnnotateError::DescriberUnavailable(e)),
        }
    }

    let mut lines = Vec::new();
    for child in hierarchy_children(graph, id) {
        let c = graph.node(child).expect("child exists");
        let Some(desc) = &c.description else {
            return Err(AnnotateError::NotReady { parent: id, child });
        };
        let one_line = desc.split_whitespace().collect::<Vec<_>>().join(" ");
        lines.push(format!("{} - {}", c.name, one_line));
    }
    let listing = lines.join("\n");
    let description = summarize_listing(describer, &lines).map_err(AnnotateError::DescriberUnavailable)?;
    let member_descriptions = if lines.is_empty() {
        NO_MEMBERS.to_string()
    } else {
        listing
    };
    Ok(Annotation {
        description,
        member_descriptions,
        path: AnnotationPath::Composed,
    })
}

/// Summarise member lines, splitting the listing whenever it overflows the
/// describer and summarising the partial summaries.
fn summarize_listing(describer: &dyn Describer, lines: &[String]) -> Result<String, EncoderError> {
    match describe(describer, &lines.join("\n"), DescribeMode::SummarizeFromMembers) {
        Err(EncoderError::ContextOverflow { limit, .. }) => {
            if lines.len() <= 1 {
                let line = lines.first().map(String::as_str).unwrap_or("");
                let cut: String = line.chars().take(limit).collect();
                return describe(describer, &cut, DescribeMode::SummarizeFromMembers);
            }
            let (left, right) = lines.split_at(lines.len() / 2);
            let parts = vec![
                summarize_listing(describer, left)?,
                summarize_listing(describer, right)?,
            ];
            if parts.iter().map(|p| p.chars().count()).sum::<usize>() + 1 >= lines.join("\n").chars().count() {
                // summaries are not shrinking; keep what fits
                let cut: String = parts.join("\n").chars().take(limit).collect();
                return describe(describer, &cut, DescribeMode::SummarizeFromMembers);
            }
            summarize_listing(describer, &parts)
        }
        other => other,
    }
}

/// Describe `id` and store the result.
pub fn annotate_node(
    graph: &mut CodeGraph,
    id: NodeId,
    describer: &dyn Describer,
    size_limit: usize,
) -> Result<AnnotationPath, AnnotateError> {
    let a = describe_node(graph, id, describer, size_limit)?;
    graph.set_descriptions(id, Some(a.description), Some(a.member_descriptions))?;
    Ok(a.path)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AnnotationReport {
    pub direct: usize,
    pub composed: usize,
    /// Nodes left without descriptions, with the reason.
    pub skipped: Vec<(NodeId, String)>,
}

/// Annotate every annotatable node, layer by layer. Nodes in one layer are
/// described in parallel.
pub fn annotate_graph(
    graph: &mut CodeGraph,
    describer: &dyn Describer,
    size_limit: usize,
) -> Result<AnnotationReport, AnnotateError> {
    let layers = annotation_layers(graph)?;
    let mut report = AnnotationReport::default();
    let shared = DescriberRef(describer);
    for layer in layers {
        let results: Vec<(NodeId, Result<Annotation, AnnotateError>)> = {
            let g: &CodeGraph = graph;
            let d = &shared;
            layer
                .par_iter()
                .map(|&id| (id, describe_node(g, id, d.0, size_limit)))
                .collect()
        };
        for (id, result) in results {
            match result {
                Ok(a) => {
                    match a.path {
                        AnnotationPath::Direct => report.direct += 1,
                        AnnotationPath::Composed => report.composed += 1,
                    }
                    graph.set_descriptions(id, Some(a.description), Some(a.member_descriptions))?;
                }
                Err(AnnotateError::Graph(e)) => return Err(e.into()),
                Err(e) => {
                    log::warn!("leaving {id} unannotated: {e}");
                    report.skipped.push((id, e.to_string()));
                }
            }
        }
    }
    Ok(report)
}

// `dyn Describer` is Sync by trait bound; this wrapper lets rayon share the reference.
struct DescriberRef<'a>(&'a dyn Describer);

#[derive(Debug, Clone, Default, Serialize)]
pub struct EmbedReport {
    pub embedded: usize,
    /// Nodes without any description.
    pub skipped: Vec<NodeId>,
}

/// Embed `description + "\n" + member_descriptions` of every described node.
pub fn embed_graph(
    graph: &mut CodeGraph,
    embedder: &dyn Embedder,
    batch_size: usize,
) -> Result<EmbedReport, AnnotateError> {
    let mut report = EmbedReport::default();
    let mut work: Vec<(NodeId, String)> = Vec::new();
    for n in graph.nodes().filter(|n| n.kind.is_annotatable()) {
        match n.semantic_text() {
            Some(text) => work.push((n.id, text)),
            None => report.skipped.push(n.id),
        }
    }
    for chunk in work.chunks(batch_size.max(1)) {
        let texts: Vec<&str> = chunk.iter().map(|(_, t)| t.as_str()).collect();
        let vectors = embedder.embed(&texts).map_err(AnnotateError::EmbedderUnavailable)?;
        if vectors.len() != chunk.len() {
            return Err(AnnotateError::EmbedderUnavailable(EncoderError::LengthMismatch {
                expected: chunk.len(),
                got: vectors.len(),
            }));
        }
        for ((id, _), v) in chunk.iter().zip(vectors) {
            graph.set_embedding(*id, v)?;
            report.embedded += 1;
        }
    }
    Ok(report)
}
