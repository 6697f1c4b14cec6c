use crate::geometry::{mahalanobis_sq, rdp_simplify, EllipsoidalGate, LocalPoint};
use crate::{Error, Result};

use super::dbscan::{dbscan, DbscanConfig};
use super::TrafficGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    /// RDP tolerance for waypoint extraction, meters.
    pub rdp_eps: f64,
    pub dbscan: DbscanConfig,
    /// Squared-Mahalanobis gate for snapping waypoints to nodes.
    pub m_th: f64,
    /// Minimum share of departures from a node for an edge to be kept.
    pub e_th: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            rdp_eps: 1000.0,
            dbscan: DbscanConfig {
                eps: 20.0,
                n_min: 1500,
            },
            m_th: 9.2,
            e_th: 0.3,
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        self.dbscan.validate()?;
        if !(self.rdp_eps >= 0.0) || !(self.m_th > 0.0) || !(0.0..1.0).contains(&self.e_th) {
            return Err(Error::Config(format!(
                "invalid graph params: rdp_eps={}, m_th={}, e_th={}",
                self.rdp_eps, self.m_th, self.e_th
            )));
        }
        Ok(())
    }
}

/// Snaps each waypoint to the closest node whose gate it passes, then drops
/// consecutive repeats.
pub fn node_sequence(waypoints: &[LocalPoint], nodes: &[EllipsoidalGate], m_th: f64) -> Result<Vec<usize>> {
    let mut seq: Vec<usize> = Vec::new();
    for wp in waypoints {
        let mut best: Option<(usize, f64)> = None;
        for (j, node) in nodes.iter().enumerate() {
            let d = mahalanobis_sq(*wp, node)?;
            if d < m_th && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            if seq.last() != Some(&j) {
                seq.push(j);
            }
        }
    }
    Ok(seq)
}

/// Extracts a traffic graph from projected tracks.
///
/// Waypoints of every track are clustered with DBSCAN; each cluster's core
/// points give a node. Tracks are rewritten as node sequences through the
/// Mahalanobis gate, single-node sequences are discarded, and a directed edge
/// `(a, b)` is kept when its share of all departures from `a` exceeds `e_th`.
pub fn build_graph(tracks: &[Vec<LocalPoint>], params: &GraphParams) -> Result<TrafficGraph> {
    params.validate()?;

    let mut per_track_waypoints = Vec::with_capacity(tracks.len());
    let mut all_waypoints = Vec::new();
    for track in tracks {
        if track.len() < 2 {
            per_track_waypoints.push(Vec::new());
            continue;
        }
        let wp: Vec<LocalPoint> = rdp_simplify(track, params.rdp_eps)?
            .into_iter()
            .map(|i| track[i])
            .collect();
        all_waypoints.extend_from_slice(&wp);
        per_track_waypoints.push(wp);
    }

    let clustering = dbscan(&all_waypoints, &params.dbscan)?;
    if clustering.n_clusters == 0 {
        return Err(Error::EmptyGraph {
            waypoints: all_waypoints.len(),
            eps: params.dbscan.eps,
            n_min: params.dbscan.n_min,
        });
    }
    let nodes: Vec<EllipsoidalGate> = (0..clustering.n_clusters)
        .map(|c| {
            let core: Vec<LocalPoint> = clustering
                .core_members(c)
                .into_iter()
                .map(|i| all_waypoints[i])
                .collect();
            EllipsoidalGate::from_points(&core).expect("every cluster has a core point")
        })
        .collect();

    let n = nodes.len();
    let mut visits = vec![vec![0u64; n]; n];
    for wp in &per_track_waypoints {
        let seq = node_sequence(wp, &nodes, params.m_th)?;
        if seq.len() < 2 {
            continue;
        }
        for pair in seq.windows(2) {
            visits[pair[0]][pair[1]] += 1;
        }
    }

    let mut edges = Vec::new();
    for (a, row) in visits.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        for (b, &count) in row.iter().enumerate() {
            if count as f64 / total as f64 > params.e_th {
                edges.push((a, b));
            }
        }
    }

    Ok(TrafficGraph {
        nodes,
        edges,
        visit_counts: visits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(a: LocalPoint, b: LocalPoint, n: usize) -> Vec<LocalPoint> {
        (0..n).map(|i| a + (b - a) * (i as f64 / (n - 1) as f64)).collect()
    }

    fn params(eps: f64, n_min: usize) -> GraphParams {
        GraphParams {
            rdp_eps: 100.0,
            dbscan: DbscanConfig { eps, n_min },
            m_th: 9.2,
            e_th: 0.3,
        }
    }

    fn jitter(rng: &mut ChaCha8Rng, p: LocalPoint, s: f64) -> LocalPoint {
        p + LocalPoint::new(rng.random_range(-s..s), rng.random_range(-s..s))
    }

    #[test]
    fn two_legs_through_a_hub() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = LocalPoint::new(-10_000.0, 0.0);
        let hub = LocalPoint::new(0.0, 0.0);
        let b = LocalPoint::new(8_000.0, 6_000.0);
        let tracks: Vec<Vec<LocalPoint>> = (0..40)
            .map(|_| {
                let (a, h, b) = (jitter(&mut rng, a, 5.0), jitter(&mut rng, hub, 5.0), jitter(&mut rng, b, 5.0));
                let mut t = line(a, h, 50);
                t.extend(line(h, b, 50).into_iter().skip(1));
                t
            })
            .collect();
        let g = build_graph(&tracks, &params(30.0, 10)).unwrap();
        assert_eq!(g.node_count(), 3);
        for truth in [a, hub, b] {
            assert!(g.nodes.iter().any(|n| n.mean.distance(truth) < 60.0));
        }
        assert_eq!(g.edge_count(), 2);
        let id = |p: LocalPoint| g.nodes.iter().position(|n| n.mean.distance(p) < 60.0).unwrap();
        assert!(g.find_edge(id(a), id(hub)).is_some());
        assert!(g.find_edge(id(hub), id(b)).is_some());
        g.validate().unwrap();
    }

    #[test]
    fn single_node_vessel_adds_no_edges() {
        let a = LocalPoint::new(0.0, 0.0);
        let b = LocalPoint::new(5000.0, 0.0);
        let mut tracks = vec![line(a, b, 20); 5];
        // starts and ends inside the node at `a`
        tracks.push(vec![a, LocalPoint::new(1.0, 1.0), a]);
        let g = build_graph(&tracks, &params(10.0, 3)).unwrap();
        let total: u64 = g.visit_counts.iter().flatten().sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn no_clusters_is_an_error() {
        let tracks = vec![line(LocalPoint::new(0.0, 0.0), LocalPoint::new(1000.0, 0.0), 10)];
        let err = build_graph(&tracks, &params(10.0, 5)).unwrap_err();
        assert!(matches!(err, Error::EmptyGraph { waypoints: 2, .. }));
    }

    #[test]
    fn defaults() {
        let p = GraphParams::default();
        assert_eq!(p.m_th, 9.2);
        assert_eq!(p.e_th, 0.3);
        assert_eq!(p.rdp_eps, 1000.0);
        assert_eq!(p.dbscan.eps, 20.0);
        assert_eq!(p.dbscan.n_min, 1500);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn built_graph_satisfies_invariants(seed in 0u64..1000, n_tracks in 5usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hubs: Vec<LocalPoint> = (0..5)
                .map(|_| LocalPoint::new(rng.random_range(-20_000.0..20_000.0), rng.random_range(-20_000.0..20_000.0)))
                .collect();
            let tracks: Vec<Vec<LocalPoint>> = (0..n_tracks)
                .map(|_| {
                    let k = rng.random_range(2..5);
                    let mut t = Vec::new();
                    let mut prev = hubs[rng.random_range(0..hubs.len())];
                    t.push(prev);
                    for _ in 1..k {
                        let hub = hubs[rng.random_range(0..hubs.len())];
                        let next = jitter(&mut rng, hub, 20.0);
                        t.extend(line(prev, next, 10).into_iter().skip(1));
                        prev = next;
                    }
                    t
                })
                .collect();
            match build_graph(&tracks, &params(50.0, 2)) {
                Ok(g) => {
                    g.validate().unwrap();
                    for &(a, b) in &g.edges {
                        prop_assert!(g.visit_share(a, b) > 0.3);
                    }
                }
                Err(Error::EmptyGraph { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}
