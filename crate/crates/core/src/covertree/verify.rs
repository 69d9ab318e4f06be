use std::fmt;

use super::{CoverTree, NodeId};
use crate::linalg::dist;

/// Relative tolerance for every metric comparison.
const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Broken parent/child links, ordering or point bookkeeping.
    Structure(String),
    Covering { node: NodeId, parent: NodeId, distance: f64, radius: f64 },
    Separation { a: NodeId, b: NodeId, scale: i32, distance: f64, radius: f64 },
    Maxdist { node: NodeId, stored: f64, actual: f64 },
    MaxdistBound { node: NodeId, maxdist: f64, bound: f64 },
    Duplicate { point: usize, node: NodeId, distance: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Structure(s) => write!(f, "structure: {s}"),
            Violation::Covering { node, parent, distance, radius } => write!(
                f,
                "covering: node {node} is {distance:.6e} from parent {parent}, radius {radius:.6e}"
            ),
            Violation::Separation { a, b, scale, distance, radius } => write!(
                f,
                "separation: nodes {a} and {b} at scale {scale} are {distance:.6e} apart, need > {radius:.6e}"
            ),
            Violation::Maxdist { node, stored, actual } => {
                write!(f, "maxdist: node {node} stores {stored:.6e}, actual {actual:.6e}")
            }
            Violation::MaxdistBound { node, maxdist, bound } => {
                write!(f, "maxdist bound: node {node} has {maxdist:.6e} ≥ {bound:.6e}")
            }
            Violation::Duplicate { point, node, distance } => {
                write!(f, "duplicate: point {point} is {distance:.6e} from its twin node {node}")
            }
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * a.abs().max(b.abs()) + 1e-300
}

pub(super) fn verify(t: &CoverTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let nodes = &t.nodes;
    let pt = |n: NodeId| t.points.point(nodes[n].point);

    if nodes.is_empty() {
        out.push(Violation::Structure("tree has no root".into()));
        return out;
    }
    if nodes[0].parent.is_some() || nodes[0].scale != 0 {
        out.push(Violation::Structure("root must be at scale 0 without a parent".into()));
    }

    // every point appears exactly once, as a node or as a duplicate
    let mut seen = vec![0u32; t.points.len()];
    for n in nodes {
        seen[n.point] += 1;
        for &d in &n.duplicates {
            seen[d] += 1;
        }
    }
    for (p, &c) in seen.iter().enumerate() {
        if c != 1 {
            out.push(Violation::Structure(format!("point {p} stored {c} times")));
        }
    }

    let max_scale = nodes.iter().map(|n| n.scale).max().unwrap_or(0);
    if max_scale != t.i_max {
        out.push(Violation::Structure(format!("i_max {} but deepest scale {max_scale}", t.i_max)));
    }

    // nesting: parent strictly coarser, listed children consistent and sorted
    for (id, n) in nodes.iter().enumerate() {
        if id > 0 {
            match n.parent {
                None => out.push(Violation::Structure(format!("node {id} has no parent"))),
                Some(p) => {
                    if nodes[p].scale >= n.scale {
                        out.push(Violation::Structure(format!(
                            "node {id} at scale {} under parent {p} at scale {}",
                            n.scale, nodes[p].scale
                        )));
                    }
                    if !nodes[p].children.contains(&id) {
                        out.push(Violation::Structure(format!("node {id} missing from parent {p}")));
                    }
                    let r = t.radius(n.scale - 1);
                    let d = dist(pt(id), pt(p));
                    if d > r * (1.0 + TOL) {
                        out.push(Violation::Covering { node: id, parent: p, distance: d, radius: r });
                    }
                }
            }
        }
        let keys: Vec<_> = n.children.iter().map(|&c| (nodes[c].scale, nodes[c].point)).collect();
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::Structure(format!("children of node {id} not sorted")));
        }
        if n.child_md.len() != n.children.len() || n.suffix_md.len() != n.children.len() {
            out.push(Violation::Structure(format!("edge tables of node {id} out of sync")));
        }
        for &c in &n.children {
            if nodes[c].parent != Some(id) {
                out.push(Violation::Structure(format!("child {c} of {id} points elsewhere")));
            }
        }
        for &dup in &n.duplicates {
            let d = dist(t.points.point(dup), pt(id));
            if d != 0.0 {
                out.push(Violation::Duplicate { point: dup, node: id, distance: d });
            }
        }
    }

    // separation: two nodes both present at scale j = max of their scales
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let j = nodes[a].scale.max(nodes[b].scale);
            let r = t.radius(j);
            let d = dist(pt(a), pt(b));
            if d <= r * (1.0 - TOL) {
                out.push(Violation::Separation { a, b, scale: j, distance: d, radius: r });
            }
        }
    }

    // maxdist, recomputed by walking each node's ancestor chain
    let mut actual = vec![0.0f64; nodes.len()];
    let mut edge_actual: Vec<Vec<f64>> = nodes.iter().map(|n| vec![0.0; n.children.len()]).collect();
    for x in 1..nodes.len() {
        let mut child = x;
        while let Some(a) = nodes[child].parent {
            let d = dist(pt(a), pt(x));
            actual[a] = actual[a].max(d);
            if let Some(k) = nodes[a].children.iter().position(|&c| c == child) {
                edge_actual[a][k] = edge_actual[a][k].max(d);
            }
            child = a;
        }
    }
    for (id, n) in nodes.iter().enumerate() {
        if !close(n.maxdist, actual[id]) {
            out.push(Violation::Maxdist { node: id, stored: n.maxdist, actual: actual[id] });
        }
        for (k, (&s, &a)) in n.child_md.iter().zip(&edge_actual[id]).enumerate() {
            if !close(s, a) {
                out.push(Violation::Structure(format!(
                    "edge {k} of node {id} stores maxdist {s:.6e}, actual {a:.6e}"
                )));
            }
        }
        let bound = 2.0 * t.radius(n.scale);
        if actual[id] >= bound * (1.0 + TOL) && actual[id] > 0.0 {
            out.push(Violation::MaxdistBound { node: id, maxdist: actual[id], bound });
        }
    }
    out
}
