//! JSON-lines persistence.
//!
//! Line 1 is a header carrying counts, so a truncated file is detected.
//! Nodes follow in id order, then edges in `(src, dst, kind)` order, which
//! makes the output byte-stable for equal graphs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{edge_legal, CodeGraph, EdgeKind, GraphError, Node, NodeId};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "repograph";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: Option<usize>,
    next_id: u32,
    nodes: usize,
    edges: usize,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct EdgeLine {
    src: NodeId,
    dst: NodeId,
    kind: EdgeKind,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "t")]
enum Line {
    #[serde(rename = "h")]
    Header(Header),
    #[serde(rename = "n")]
    Node(Node),
    #[serde(rename = "e")]
    Edge(EdgeLine),
}

fn put<W: Write>(out: &mut W, line: &Line) -> Result<(), GraphError> {
    serde_json::to_writer(&mut *out, line).map_err(|e| GraphError::CorruptStream(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_jsonl<W: Write>(graph: &CodeGraph, mut out: W) -> Result<(), GraphError> {
    put(
        &mut out,
        &Line::Header(Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dim: graph.embedding_dim(),
            next_id: graph.next_id(),
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            frozen: graph.is_frozen(),
        }),
    )?;
    for node in graph.nodes() {
        put(&mut out, &Line::Node(node.clone()))?;
    }
    for (src, dst, kind) in graph.edges() {
        put(&mut out, &Line::Edge(EdgeLine { src, dst, kind }))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<CodeGraph, GraphError> {
    let corrupt = |line: usize, msg: String| GraphError::CorruptStream(format!("line {line}: {msg}"));
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, text)) => match serde_json::from_str::<Line>(&text?) {
            Ok(Line::Header(h)) => h,
            Ok(_) => return Err(corrupt(1, "first line is not a header".into())),
            Err(e) => return Err(corrupt(1, e.to_string())),
        },
        None => return Err(GraphError::CorruptStream("empty stream".into())),
    };
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(corrupt(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }

    let mut graph = CodeGraph {
        embedding_dim: header.dim,
        ..CodeGraph::default()
    };
    let mut edges_seen = 0;
    for (i, text) in lines {
        let lineno = i + 1;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&text).map_err(|e| corrupt(lineno, e.to_string()))? {
            Line::Header(_) => return Err(corrupt(lineno, "repeated header".into())),
            Line::Node(node) => {
                if edges_seen > 0 {
                    return Err(corrupt(lineno, "node after edges".into()));
                }
                if node.id.0 >= header.next_id || graph.contains(node.id) {
                    return Err(corrupt(lineno, format!("bad node id {}", node.id)));
                }
                if graph.lookup_key(node.kind, &node.key).is_some() {
                    return Err(corrupt(lineno, format!("duplicate key {}", node.key)));
                }
                node.check_properties().map_err(|m| corrupt(lineno, m))?;
                if let Some(e) = &node.embedding {
                    graph.check_embedding(&e.clone()).map_err(|e| corrupt(lineno, e.to_string()))?;
                }
                graph.insert_at(node);
            }
            Line::Edge(EdgeLine { src, dst, kind }) => {
                let (Some(s), Some(d)) = (graph.node(src), graph.node(dst)) else {
                    return Err(corrupt(lineno, format!("dangling edge {src}->{dst}")));
                };
                if src == dst || !edge_legal(s.kind, kind, d.kind) {
                    return Err(corrupt(lineno, format!("illegal edge {src}-[{kind}]->{dst}")));
                }
                if !graph.insert_edge(src, dst, kind) {
                    return Err(corrupt(lineno, "duplicate edge".into()));
                }
                edges_seen += 1;
            }
        }
    }
    // Ids may have trailing gaps from removed nodes.
    let next = header.next_id as usize;
    if graph.nodes.len() < next {
        graph.nodes.resize(next, None);
        graph.out.resize(next, Default::default());
        graph.inc.resize(next, Default::default());
    }
    if graph.node_count() != header.nodes || graph.edge_count() != header.edges {
        return Err(GraphError::CorruptStream(format!(
            "expected {} nodes / {} edges, found {} / {}",
            header.nodes,
            header.edges,
            graph.node_count(),
            graph.edge_count()
        )));
    }
    graph.frozen = header.frozen;
    Ok(graph)
}

impl CodeGraph {
    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_jsonl(self, &mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn from_jsonl_bytes(bytes: &[u8]) -> Result<CodeGraph, GraphError> {
        read_jsonl(bytes)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), GraphError> {
        let file = std::fs::File::create(path)?;
        write_jsonl(self, std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<CodeGraph, GraphError> {
        let file = std::fs::File::open(path)?;
        read_jsonl(std::io::BufReader::new(file))
    }
}
