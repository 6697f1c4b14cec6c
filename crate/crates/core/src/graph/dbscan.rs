//! DBSCAN over planar points with a uniform-grid neighbour index.

use std::collections::{HashMap, VecDeque};

use crate::geometry::LocalPoint;
use crate::{Error, Result};

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanConfig {
    /// Neighbourhood radius in meters.
    pub eps: f64,
    /// Minimum neighbourhood size for a core point, the point itself included.
    pub n_min: usize,
}

impl DbscanConfig {
    pub fn new(eps: f64, n_min: usize) -> Result<Self> {
        let cfg = Self { eps, n_min };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("dbscan eps must be > 0, got {}", self.eps)));
        }
        if self.n_min == 0 {
            return Err(Error::Config("dbscan n_min must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster id per point, [`NOISE`] for noise.
    pub labels: Vec<i64>,
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

impl Clustering {
    /// Indices of the core points of cluster `id`.
    pub fn core_members(&self, id: usize) -> Vec<usize> {
        self.labels
            .iter()
            .zip(&self.core)
            .enumerate()
            .filter(|(_, (&l, &c))| c && l == id as i64)
            .map(|(i, _)| i)
            .collect()
    }
}

struct Grid<'a> {
    points: &'a [LocalPoint],
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [LocalPoint], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &LocalPoint, eps: f64) -> (i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64)
    }

    /// Neighbours within eps (inclusive), in ascending index order.
    fn neighbours(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.points[i];
        let (cx, cy) = Self::key(&p, self.eps);
        let eps_sq = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(bucket.iter().copied().filter(|&j| {
                        let d = self.points[j] - p;
                        d.dot(d) <= eps_sq
                    }));
                }
            }
        }
        out.sort_unstable();
    }
}

/// Clusters points with standard DBSCAN semantics. Points are scanned in
/// index order; a border point reachable from several clusters joins the
/// first one that claims it.
pub fn dbscan(points: &[LocalPoint], cfg: &DbscanConfig) -> Result<Clustering> {
    cfg.validate()?;
    let n = points.len();
    let grid = Grid::new(points, cfg.eps);
    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let mut core = vec![false; n];
    let mut n_clusters = 0usize;
    let mut nbrs = Vec::new();
    let mut queue = VecDeque::new();

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        grid.neighbours(i, &mut nbrs);
        if nbrs.len() < cfg.n_min {
            continue;
        }
        let id = n_clusters as i64;
        n_clusters += 1;
        core[i] = true;
        labels[i] = id;
        queue.extend(nbrs.iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = id;
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            grid.neighbours(j, &mut nbrs);
            if nbrs.len() >= cfg.n_min {
                core[j] = true;
                queue.extend(nbrs.iter().copied().filter(|&k| !visited[k] || labels[k] == NOISE));
            }
        }
    }
    Ok(Clustering {
        labels,
        core,
        n_clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Reference implementation: core points from an O(n²) neighbour count,
    /// clusters as connected components of the core-core eps graph, border
    /// points reachable from any core point of a cluster.
    fn oracle(points: &[LocalPoint], cfg: &DbscanConfig) -> (Vec<bool>, Vec<Option<usize>>, Vec<Vec<usize>>) {
        let n = points.len();
        let near = |i: usize, j: usize| points[i].distance(points[j]) <= cfg.eps;
        let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= cfg.n_min).collect();
        let mut comp = vec![None; n];
        let mut next = 0;
        for s in 0..n {
            if !core[s] || comp[s].is_some() {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = Some(next);
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if core[j] && comp[j].is_none() && near(i, j) {
                        comp[j] = Some(next);
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        // clusters each non-core point may legally join
        let options: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut c: Vec<usize> = (0..n).filter(|&j| core[j] && near(i, j)).filter_map(|j| comp[j]).collect();
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        (core, comp, options)
    }

    fn check_against_oracle(points: &[LocalPoint], cfg: &DbscanConfig) {
        let got = dbscan(points, cfg).unwrap();
        let (core, comp, options) = oracle(points, cfg);
        assert_eq!(got.core, core);
        let n_oracle = comp.iter().flatten().max().map_or(0, |m| m + 1);
        assert_eq!(got.n_clusters, n_oracle);
        // renumbering map oracle -> ours, built from core points
        let mut map: HashMap<usize, i64> = HashMap::new();
        for i in 0..points.len() {
            if let Some(c) = comp[i] {
                let prev = map.insert(c, got.labels[i]);
                assert!(prev.is_none() || prev == Some(got.labels[i]));
            }
        }
        for i in 0..points.len() {
            if core[i] {
                continue;
            }
            if options[i].is_empty() {
                assert_eq!(got.labels[i], NOISE, "point {i} should be noise");
            } else {
                let allowed: Vec<i64> = options[i].iter().map(|c| map[c]).collect();
                assert!(allowed.contains(&got.labels[i]), "border point {i}");
            }
        }
    }

    #[test]
    fn coincident_points_form_one_cluster() {
        let pts = vec![LocalPoint::new(3.0, 4.0); 5];
        let c = dbscan(&pts, &DbscanConfig::new(1.0, 3).unwrap()).unwrap();
        assert_eq!(c.n_clusters, 1);
        assert!(c.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn isolated_point_is_noise() {
        let c = dbscan(&[LocalPoint::new(0.0, 0.0)], &DbscanConfig::new(1.0, 2).unwrap()).unwrap();
        assert_eq!(c.labels, vec![NOISE]);
        assert_eq!(c.n_clusters, 0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(DbscanConfig::new(0.0, 2).is_err());
        assert!(DbscanConfig::new(1.0, 0).is_err());
    }

    #[test]
    fn matches_reachability_oracle_on_random_points() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<LocalPoint> = (0..200)
                .map(|_| LocalPoint::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
                .collect();
            let eps = rng.random_range(3.0..9.0);
            let n_min = rng.random_range(2..7);
            check_against_oracle(&pts, &DbscanConfig::new(eps, n_min).unwrap());
        }
    }

    #[test]
    fn negative_coordinates_use_correct_cells() {
        let pts = vec![LocalPoint::new(-0.1, -0.1), LocalPoint::new(0.1, 0.1), LocalPoint::new(-0.9, 0.0)];
        check_against_oracle(&pts, &DbscanConfig::new(0.5, 2).unwrap());
    }
}
