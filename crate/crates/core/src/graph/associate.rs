use std::collections::BTreeSet;

use crate::geometry::{axial_difference, bearing, rdp_simplify, LocalPoint};
use crate::{Error, Result};

use super::{EdgeLabel, TrafficGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationParams {
    /// Largest point-to-edge distance for a lane assignment, meters.
    pub d_max: f64,
    /// RDP tolerance used to find straight track pieces, meters.
    pub rdp_eps: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            d_max: 7000.0,
            rdp_eps: 500.0,
        }
    }
}

struct EdgeGeom {
    a: LocalPoint,
    ab: LocalPoint,
    len_sq: f64,
    bearing: Option<f64>,
}

impl EdgeGeom {
    fn distance(&self, p: LocalPoint) -> f64 {
        if self.len_sq == 0.0 {
            return p.distance(self.a);
        }
        let t = ((p - self.a).dot(self.ab) / self.len_sq).clamp(0.0, 1.0);
        p.distance(self.a + self.ab * t)
    }
}

/// Assigns every track point to a lane.
///
/// Each point first takes the nearest edge (by clamped segment distance) if it
/// is within `d_max`, otherwise [`EdgeLabel::Outlier`]. The track is then cut
/// at its RDP waypoints; where the points between two consecutive waypoints
/// (inclusive) carry more than one distinct label, all of them are moved to
/// the candidate edge whose orientation best matches the waypoint chord.
/// Edges are treated as undirected here. Ties go to the lower edge id.
pub fn associate(points: &[LocalPoint], graph: &TrafficGraph, params: &AssociationParams) -> Result<Vec<EdgeLabel>> {
    if graph.edges.is_empty() {
        return Err(Error::Config("cannot associate against a graph without edges".into()));
    }
    let edges: Vec<EdgeGeom> = (0..graph.edge_count())
        .map(|id| {
            let (a, b) = graph.edge_endpoints(id);
            let ab = b - a;
            EdgeGeom {
                a,
                ab,
                len_sq: ab.dot(ab),
                bearing: bearing(a, b).ok(),
            }
        })
        .collect();

    let initial: Vec<EdgeLabel> = points
        .iter()
        .map(|&p| {
            let mut best = (f64::INFINITY, EdgeLabel::Outlier);
            for (id, e) in edges.iter().enumerate() {
                let d = e.distance(p);
                if d < best.0 {
                    best = (d, EdgeLabel::Edge(id));
                }
            }
            if best.0 <= params.d_max {
                best.1
            } else {
                EdgeLabel::Outlier
            }
        })
        .collect();

    if points.len() < 2 {
        return Ok(initial);
    }

    let mut labels = initial.clone();
    let waypoints = rdp_simplify(points, params.rdp_eps)?;
    for pair in waypoints.windows(2) {
        let (k1, k2) = (pair[0], pair[1]);
        let members: BTreeSet<EdgeLabel> = initial[k1..=k2].iter().copied().collect();
        if members.len() <= 1 {
            continue;
        }
        let Ok(chord) = bearing(points[k1], points[k2]) else {
            continue;
        };
        let best = members
            .iter()
            .filter_map(|l| l.edge())
            .filter_map(|id| edges[id].bearing.map(|b| (id, axial_difference(b, chord))))
            .fold(None::<(usize, f64)>, |acc, (id, d)| match acc {
                Some((_, bd)) if bd <= d => acc,
                _ => Some((id, d)),
            });
        if let Some((id, _)) = best {
            labels[k1..=k2].fill(EdgeLabel::Edge(id));
        }
    }
    Ok(labels)
}
