use std::collections::{HashMap, HashSet};

use super::{Branch, Expr, NodePattern, NodeRef, PatternChain, QueryPlan, RelDirection, ResultTable, Value};
use crate::graph::{CodeGraph, Direction, EdgeKind, NodeId, NodeKind, PropValue};

/// State of one variable slot during matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Slot {
    Free,
    Null,
    Bound(NodeId),
}

impl Slot {
    fn id(self) -> Option<NodeId> {
        match self {
            Slot::Bound(id) => Some(id),
            _ => None,
        }
    }
}

type EdgeRef = (NodeId, NodeId, EdgeKind);

#[derive(Debug, Clone)]
struct Row {
    slots: Vec<Slot>,
    edges: Vec<Option<EdgeRef>>,
}

/// Variable names in first-appearance order.
pub(super) fn variables(branch: &Branch) -> Vec<String> {
    let mut vars: Vec<String> = Vec::new();
    for clause in &branch.clauses {
        for pat in &clause.patterns {
            for n in pat.nodes() {
                if !vars.contains(&n.var) {
                    vars.push(n.var.clone());
                }
            }
        }
    }
    vars
}

pub(super) fn node_matches(graph: &CodeGraph, id: NodeId, pat: &NodePattern) -> bool {
    let Some(node) = graph.node(id) else { return false };
    pat.labels.iter().all(|l| NodeKind::parse(l) == Some(node.kind))
        && pat
            .props
            .iter()
            .all(|(k, v)| matches!(node.property(k), Some(PropValue::Str(s)) if s == v))
}

/// Edge kinds a relationship may use; `None` means any.
pub(super) fn kind_filter(kinds: &[String]) -> Option<Vec<EdgeKind>> {
    if kinds.is_empty() {
        None
    } else {
        Some(kinds.iter().filter_map(|k| EdgeKind::parse(k)).collect())
    }
}

struct Matcher<'g> {
    graph: &'g CodeGraph,
    slot_of: HashMap<&'g str, usize>,
}

impl<'g> Matcher<'g> {
    fn seeds(&self, pat: &NodePattern) -> Vec<NodeId> {
        let mut kinds: Vec<NodeKind> = NodeKind::ALL.to_vec();
        if let Some(label) = pat.labels.first() {
            match NodeKind::parse(label) {
                Some(k) => kinds = vec![k],
                None => return Vec::new(),
            }
        }
        let name = pat.props.iter().find(|(k, _)| k == "name").map(|(_, v)| v);
        let mut ids: Vec<NodeId> = match name {
            Some(name) => kinds.iter().flat_map(|k| self.graph.lookup(*k, name)).collect(),
            None if pat.labels.is_empty() => self.graph.node_ids().collect(),
            None => self.graph.nodes().filter(|n| n.kind == kinds[0]).map(|n| n.id).collect(),
        };
        ids.retain(|id| node_matches(self.graph, *id, pat));
        ids.sort();
        ids
    }

    fn steps(&self, from: NodeId, dir: RelDirection, kinds: &Option<Vec<EdgeKind>>) -> Vec<(NodeId, EdgeRef)> {
        let filter = kinds.as_deref();
        let mut out = Vec::new();
        if matches!(dir, RelDirection::Out | RelDirection::Either) {
            for (nb, k) in self.graph.neighbors(from, Direction::Out, filter).unwrap_or_default() {
                out.push((nb, (from, nb, k)));
            }
        }
        if matches!(dir, RelDirection::In | RelDirection::Either) {
            for (nb, k) in self.graph.neighbors(from, Direction::In, filter).unwrap_or_default() {
                out.push((nb, (nb, from, k)));
            }
        }
        out
    }

    /// Bind `pat` to `id` if compatible; returns whether the slot was newly set.
    fn bind(&self, row: &mut Row, pat: &NodePattern, id: NodeId) -> Option<bool> {
        let slot = self.slot_of[pat.var.as_str()];
        match row.slots[slot] {
            Slot::Bound(b) if b == id && node_matches(self.graph, id, pat) => Some(false),
            Slot::Free if node_matches(self.graph, id, pat) => {
                row.slots[slot] = Slot::Bound(id);
                Some(true)
            }
            _ => None,
        }
    }

    fn unbind(&self, row: &mut Row, pat: &NodePattern, was_new: bool) {
        if was_new {
            row.slots[self.slot_of[pat.var.as_str()]] = Slot::Free;
        }
    }

    fn match_patterns(&self, pats: &[(&PatternChain, usize)], row: &mut Row, out: &mut Vec<Row>) {
        let Some(((pat, edge_base), rest)) = pats.split_first() else {
            out.push(row.clone());
            return;
        };
        let candidates = match row.slots[self.slot_of[pat.start.var.as_str()]] {
            Slot::Bound(id) => vec![id],
            Slot::Null => Vec::new(),
            Slot::Free => self.seeds(&pat.start),
        };
        for id in candidates {
            if let Some(new) = self.bind(row, &pat.start, id) {
                self.match_steps(pat, 0, id, *edge_base, rest, row, out);
                self.unbind(row, &pat.start, new);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn match_steps(
        &self,
        pat: &PatternChain,
        step: usize,
        at: NodeId,
        edge_base: usize,
        rest: &[(&PatternChain, usize)],
        row: &mut Row,
        out: &mut Vec<Row>,
    ) {
        let Some((rel, next)) = pat.steps.get(step) else {
            self.match_patterns(rest, row, out);
            return;
        };
        let kinds = kind_filter(&rel.kinds);
        for (nb, edge) in self.steps(at, rel.direction, &kinds) {
            if let Some(new) = self.bind(row, next, nb) {
                row.edges[edge_base + step] = Some(edge);
                self.match_steps(pat, step + 1, nb, edge_base, rest, row, out);
                row.edges[edge_base + step] = None;
                self.unbind(row, next, new);
            }
        }
    }
}

fn node_value(graph: &CodeGraph, id: NodeId) -> Value {
    let n = graph.node(id).expect("bound node exists");
    Value::Node(NodeRef {
        id,
        kind: n.kind,
        name: n.name.clone(),
        module_name: n.module_name.clone(),
    })
}

/// Evaluate one return expression against a node binding.
pub(super) fn eval_expr(graph: &CodeGraph, expr: &Expr, bound: Option<NodeId>) -> Value {
    let Some(id) = bound else { return Value::Null };
    match expr {
        Expr::Var(_) => node_value(graph, id),
        Expr::Labels(_) => Value::List(vec![Value::Str(graph.node(id).expect("bound").kind.as_str().into())]),
        Expr::Prop(_, p) => match graph.node(id).and_then(|n| n.property(p)) {
            Some(PropValue::Str(s)) => Value::Str(s.to_string()),
            Some(PropValue::Vector(v)) => Value::List(v.iter().map(|x| Value::Float(*x)).collect()),
            None => Value::Null,
        },
    }
}

/// Project bindings (`var -> node or null`) through a branch's RETURN items.
pub(super) fn project(
    graph: &CodeGraph,
    branch: &Branch,
    lookup: impl Fn(&str) -> Option<NodeId>,
) -> (Vec<Value>, Vec<NodeId>) {
    let mut values = Vec::with_capacity(branch.ret.items.len());
    let mut nodes = Vec::new();
    for item in &branch.ret.items {
        let bound = lookup(item.expr.var());
        if let Some(id) = bound {
            nodes.push(id);
        }
        values.push(eval_expr(graph, &item.expr, bound));
    }
    (values, nodes)
}

/// Identity of a row for DISTINCT; node values compare by id.
pub(super) fn row_key(row: &[Value]) -> String {
    format!("{row:?}")
}

fn dedup(table: &mut ResultTable) {
    let mut seen = HashSet::new();
    let mut keep = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        keep.push(seen.insert(row_key(row)));
    }
    let mut it = keep.iter();
    table.rows.retain(|_| *it.next().expect("same length"));
    let mut it = keep.iter();
    table.row_nodes.retain(|_| *it.next().expect("same length"));
}

fn execute_branch(graph: &CodeGraph, branch: &Branch) -> ResultTable {
    let vars = variables(branch);
    let slot_of: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let matcher = Matcher { graph, slot_of };
    let n_edges: usize = branch
        .clauses
        .iter()
        .flat_map(|c| c.patterns.iter())
        .map(|p| p.steps.len())
        .sum();

    let mut rows = vec![Row {
        slots: vec![Slot::Free; vars.len()],
        edges: vec![None; n_edges],
    }];
    let mut edge_base = 0;
    for clause in &branch.clauses {
        let mut pats = Vec::new();
        for p in &clause.patterns {
            pats.push((p, edge_base));
            edge_base += p.steps.len();
        }
        let mut next = Vec::new();
        for mut row in rows {
            let before = next.len();
            matcher.match_patterns(&pats, &mut row, &mut next);
            if clause.optional && next.len() == before {
                for p in &clause.patterns {
                    for n in p.nodes() {
                        let s = matcher.slot_of[n.var.as_str()];
                        if row.slots[s] == Slot::Free {
                            row.slots[s] = Slot::Null;
                        }
                    }
                }
                next.push(row);
            }
        }
        rows = next;
    }

    rows.sort_by(|a, b| {
        let ka: Vec<Option<NodeId>> = a.slots.iter().map(|s| s.id()).collect();
        let kb: Vec<Option<NodeId>> = b.slots.iter().map(|s| s.id()).collect();
        ka.cmp(&kb).then_with(|| a.edges.cmp(&b.edges))
    });

    let mut table = ResultTable {
        columns: branch.ret.items.iter().map(|i| i.column()).collect(),
        ..Default::default()
    };
    for row in &rows {
        let (values, nodes) = project(graph, branch, |v| row.slots[matcher.slot_of[v]].id());
        table.rows.push(values);
        table.row_nodes.push(nodes);
    }
    if branch.ret.distinct {
        dedup(&mut table);
    }
    table
}

/// Execute a parsed plan.
///
/// Matching is homomorphic: distinct variables may bind the same node and
/// each matching edge yields its own row. Rows are ordered by the bound node
/// ids in variable order, nulls first. `UNION` removes duplicates across
/// branches only when every branch is `DISTINCT`.
pub fn execute(graph: &CodeGraph, plan: &QueryPlan) -> ResultTable {
    let mut tables = plan.branches.iter().map(|b| execute_branch(graph, b));
    let mut out = tables.next().expect("plans have at least one branch");
    for t in tables {
        out.rows.extend(t.rows);
        out.row_nodes.extend(t.row_nodes);
    }
    let any_all = plan.union_all.iter().any(|a| *a);
    if plan.branches.len() > 1 && !any_all && plan.branches.iter().all(|b| b.ret.distinct) {
        dedup(&mut out);
    }
    out
}
