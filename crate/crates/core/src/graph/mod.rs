//! Traffic-lane graph: extraction from historical tracks, manual refinement,
//! point-to-lane association and GeoJSON exchange.
//!
//! Nodes are turning-point clusters (mean + covariance in the projected
//! plane); edges are directed node pairs that enough vessels travel between.

mod associate;
mod build;
mod dbscan;
mod geojson;
mod refine;

pub use associate::{associate, AssociationParams};
pub use build::{build_graph, node_sequence, GraphParams};
pub use dbscan::{dbscan, Clustering, DbscanConfig, NOISE};
pub use geojson::{graph_from_geojson, graph_to_geojson};
pub use refine::{parse_edit_script, refine_graph, GraphEdit};

use crate::geometry::{EllipsoidalGate, LocalPoint};

/// Lane assignment of one track point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    Edge(usize),
    /// No lane within the association distance.
    Outlier,
}

impl EdgeLabel {
    pub fn edge(self) -> Option<usize> {
        match self {
            EdgeLabel::Edge(id) => Some(id),
            EdgeLabel::Outlier => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficGraph {
    pub nodes: Vec<EllipsoidalGate>,
    /// Directed `(from, to)` node pairs; the index is the edge id.
    pub edges: Vec<(usize, usize)>,
    /// `visit_counts[a][b]`: consecutive visits from node `a` to node `b`.
    pub visit_counts: Vec<Vec<u64>>,
}

impl TrafficGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_endpoints(&self, id: usize) -> (LocalPoint, LocalPoint) {
        let (a, b) = self.edges[id];
        (self.nodes[a].mean, self.nodes[b].mean)
    }

    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.iter().position(|&e| e == (a, b))
    }

    /// Normalized visit share of `(a, b)` among all departures from `a`.
    pub fn visit_share(&self, a: usize, b: usize) -> f64 {
        let total: u64 = self.visit_counts[a].iter().sum();
        if total == 0 {
            0.0
        } else {
            self.visit_counts[a][b] as f64 / total as f64
        }
    }

    /// Checks id validity, distinct endpoints and matrix shape.
    pub fn validate(&self) -> crate::Result<()> {
        let n = self.nodes.len();
        if self.visit_counts.len() != n || self.visit_counts.iter().any(|r| r.len() != n) {
            return Err(crate::Error::Shape(format!("visit matrix must be {n}x{n}")));
        }
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(crate::Error::Shape(format!("edge {i} references a missing node")));
            }
            if a == b {
                return Err(crate::Error::Shape(format!("edge {i} is a self-loop")));
            }
        }
        Ok(())
    }
}
