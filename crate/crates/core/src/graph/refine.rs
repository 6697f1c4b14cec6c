use std::fmt;

use crate::geometry::{Cov2, EllipsoidalGate, GeoPoint, Projection};
use crate::{Error, Result};

use super::TrafficGraph;

/// One manual graph correction. Node ids refer to the graph as it is when the
/// edit is applied, so removing a node shifts the ids of all later nodes down
/// by one.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphEdit {
    AddNode(EllipsoidalGate),
    RemoveNode(usize),
    AddEdge(usize, usize),
    RemoveEdge(usize, usize),
}

impl fmt::Display for GraphEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphEdit::AddNode(g) => write!(f, "add_node ({:.1}, {:.1})", g.mean.x, g.mean.y),
            GraphEdit::RemoveNode(id) => write!(f, "remove_node {id}"),
            GraphEdit::AddEdge(a, b) => write!(f, "add_edge {a} {b}"),
            GraphEdit::RemoveEdge(a, b) => write!(f, "remove_edge {a} {b}"),
        }
    }
}

/// Applies edits in order. Fails on the first edit that references a missing
/// node or edge, adds a self-loop or duplicates an edge; the input graph is
/// left untouched.
pub fn refine_graph(graph: &TrafficGraph, edits: &[GraphEdit]) -> Result<TrafficGraph> {
    let mut g = graph.clone();
    for (index, edit) in edits.iter().enumerate() {
        let fail = |reason: String| Error::Edit {
            index,
            edit: edit.to_string(),
            reason,
        };
        let n = g.nodes.len();
        match *edit {
            GraphEdit::AddNode(gate) => {
                g.nodes.push(gate);
                for row in &mut g.visit_counts {
                    row.push(0);
                }
                g.visit_counts.push(vec![0; n + 1]);
            }
            GraphEdit::RemoveNode(id) => {
                if id >= n {
                    return Err(fail(format!("node {id} does not exist ({n} nodes)")));
                }
                g.nodes.remove(id);
                g.visit_counts.remove(id);
                for row in &mut g.visit_counts {
                    row.remove(id);
                }
                g.edges.retain(|&(a, b)| a != id && b != id);
                let shift = |v: usize| if v > id { v - 1 } else { v };
                for e in &mut g.edges {
                    *e = (shift(e.0), shift(e.1));
                }
            }
            GraphEdit::AddEdge(a, b) => {
                if a >= n || b >= n {
                    return Err(fail(format!("edge ({a}, {b}) references a missing node ({n} nodes)")));
                }
                if a == b {
                    return Err(fail("self-loops are not allowed".into()));
                }
                if g.find_edge(a, b).is_some() {
                    return Err(fail(format!("edge ({a}, {b}) already exists")));
                }
                g.edges.push((a, b));
            }
            GraphEdit::RemoveEdge(a, b) => {
                let Some(pos) = g.find_edge(a, b) else {
                    return Err(fail(format!("edge ({a}, {b}) does not exist")));
                };
                g.edges.remove(pos);
            }
        }
    }
    Ok(g)
}

/// Parses a plain-text edit script, one edit per line:
///
/// ```text
/// # comments and blank lines are ignored
/// remove_node 5
/// add_edge 2 7
/// remove_edge 2 3
/// add_node 12.05 54.33 2500 0 2500   # lon lat sxx sxy syy (m²)
/// ```
pub fn parse_edit_script(text: &str, proj: &Projection) -> Result<Vec<GraphEdit>> {
    let mut edits = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |reason: &str| Error::Edit {
            index: edits.len(),
            edit: line.to_string(),
            reason: format!("line {}: {reason}", lineno + 1),
        };
        let mut parts = line.split_whitespace();
        let cmd = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let ids = |k: usize| -> Result<Vec<usize>> {
            if args.len() != k {
                return Err(fail(&format!("expected {k} node id(s)")));
            }
            args.iter()
                .map(|s| s.parse::<usize>().map_err(|_| fail(&format!("bad node id {s:?}"))))
                .collect()
        };
        let edit = match cmd {
            "remove_node" => GraphEdit::RemoveNode(ids(1)?[0]),
            "add_edge" => {
                let v = ids(2)?;
                GraphEdit::AddEdge(v[0], v[1])
            }
            "remove_edge" => {
                let v = ids(2)?;
                GraphEdit::RemoveEdge(v[0], v[1])
            }
            "add_node" => {
                if args.len() != 5 {
                    return Err(fail("expected: add_node lon lat sxx sxy syy"));
                }
                let v: Vec<f64> = args
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| fail(&format!("bad number {s:?}"))))
                    .collect::<Result<_>>()?;
                let geo = GeoPoint::new(v[0], v[1]).map_err(|e| fail(&e.to_string()))?;
                let mean = proj.project(geo).map_err(|e| fail(&e.to_string()))?;
                let covariance = Cov2 {
                    xx: v[2],
                    xy: v[3],
                    yy: v[4],
                };
                if covariance.xx < 0.0 || covariance.yy < 0.0 || covariance.det() < 0.0 {
                    return Err(fail("covariance must be positive semi-definite"));
                }
                GraphEdit::AddNode(EllipsoidalGate::new(mean, covariance))
            }
            other => return Err(fail(&format!("unknown edit {other:?}"))),
        };
        edits.push(edit);
    }
    Ok(edits)
}
