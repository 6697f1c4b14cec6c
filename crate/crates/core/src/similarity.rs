//! Route-similarity baseline: a track's RDP waypoints are matched against the
//! node sequences of graph routes with a fuzzy longest common subsequence.

use crate::geometry::{rdp_simplify, LocalPoint};
use crate::graph::TrafficGraph;
use crate::{Error, Result};

pub const MAX_ROUTE_NODES: usize = 12;
const MAX_ROUTES: usize = 200_000;

/// Node-id sequences along retained edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteSet {
    pub routes: Vec<Vec<usize>>,
}

impl RouteSet {
    pub fn max_len(&self) -> usize {
        self.routes.iter().map(Vec::len).max().unwrap_or(0)
    }
}

fn contains_run(hay: &[usize], needle: &[usize]) -> bool {
    needle.len() < hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Simple directed paths that cannot be extended at their end (or have hit
/// `max_nodes`), with every path that is a contiguous piece of a longer one
/// removed. Sorted for determinism.
pub fn enumerate_routes(graph: &TrafficGraph, max_nodes: usize) -> Result<RouteSet> {
    let n = graph.node_count();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &graph.edges {
        succ[a].push(b);
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }

    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut on_path = vec![false; n];
    for start in 0..n {
        let mut path = vec![start];
        on_path[start] = true;
        // explicit DFS: each frame remembers the next successor to try
        let mut stack: Vec<usize> = vec![0];
        let mut extended = vec![false];
        while let Some(next_idx) = stack.last_mut() {
            let node = *path.last().unwrap();
            let can_grow = path.len() < max_nodes;
            let cand = if can_grow {
                succ[node][*next_idx..].iter().position(|&s| !on_path[s]).map(|off| *next_idx + off)
            } else {
                None
            };
            match cand {
                Some(i) => {
                    *next_idx = i + 1;
                    *extended.last_mut().unwrap() = true;
                    let s = succ[node][i];
                    path.push(s);
                    on_path[s] = true;
                    stack.push(0);
                    extended.push(false);
                }
                None => {
                    if !extended.pop().unwrap() && path.len() >= 2 {
                        found.push(path.clone());
                        if found.len() > MAX_ROUTES {
                            return Err(Error::Config(format!(
                                "more than {MAX_ROUTES} routes; lower the route length bound"
                            )));
                        }
                    }
                    stack.pop();
                    on_path[path.pop().unwrap()] = false;
                }
            }
        }
    }
    found.sort();
    found.dedup();
    let routes: Vec<Vec<usize>> = found
        .iter()
        .filter(|r| !found.iter().any(|o| contains_run(o, r)))
        .cloned()
        .collect();
    Ok(RouteSet { routes })
}

/// Longest common subsequence length under an arbitrary element matcher.
pub fn lcs_length<A, B>(a: &[A], b: &[B], matches: impl Fn(&A, &B) -> bool) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if matches(x, y) { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// What the best LCS is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// Longest route in the whole set, so scores compare across tracks.
    #[default]
    Global,
    /// Length of the route that produced each LCS.
    Matched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    pub rdp_eps: f64,
    /// Largest waypoint-to-node distance that still counts as a match.
    pub d_max: f64,
    pub s_at: f64,
    pub denominator: Denominator,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            rdp_eps: 1000.0,
            d_max: 7000.0,
            s_at: 0.3,
            denominator: Denominator::Global,
        }
    }
}

/// Score of a waypoint sequence against the route set, in [0, 1].
pub fn similarity_score(
    waypoints: &[LocalPoint],
    routes: &RouteSet,
    graph: &TrafficGraph,
    d_max: f64,
    denominator: Denominator,
) -> Result<f64> {
    if routes.routes.is_empty() {
        return Err(Error::Config("route set is empty".into()));
    }
    let near = |node: &usize, wp: &LocalPoint| graph.nodes[*node].mean.distance(*wp) <= d_max;
    let global = routes.max_len() as f64;
    Ok(routes
        .routes
        .iter()
        .map(|r| {
            let l = lcs_length(r, waypoints, near) as f64;
            match denominator {
                Denominator::Global => l / global,
                Denominator::Matched => l / r.len() as f64,
            }
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityVerdict {
    pub score: f64,
    pub s_at: f64,
    pub anomalous: bool,
}

/// Simplifies a projected track and flags it when its score is below S_AT.
pub fn score_track(points: &[LocalPoint], routes: &RouteSet, graph: &TrafficGraph, params: &SimilarityParams) -> Result<SimilarityVerdict> {
    let waypoints: Vec<LocalPoint> = if points.len() < 2 {
        points.to_vec()
    } else {
        rdp_simplify(points, params.rdp_eps)?.into_iter().map(|i| points[i]).collect()
    };
    let score = similarity_score(&waypoints, routes, graph, params.d_max, params.denominator)?;
    Ok(SimilarityVerdict {
        score,
        s_at: params.s_at,
        anomalous: score < params.s_at,
    })
}
