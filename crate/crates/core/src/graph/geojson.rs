//! GeoJSON FeatureCollection exchange for traffic graphs.
//!
//! Nodes are `Point` features with properties `{id, cov: [sxx, sxy, syy]}`
//! (m²); edges are two-vertex `LineString` features with properties
//! `{id, a, b, visits}`. The projection reference is stored as the foreign
//! member `"reference": [lon, lat]` so an import recovers the same plane.

use serde_json::{json, Map, Value};

use crate::geometry::{Cov2, EllipsoidalGate, GeoPoint, Projection};
use crate::{Error, Result};

use super::TrafficGraph;

pub fn graph_to_geojson(graph: &TrafficGraph, proj: &Projection) -> Value {
    let mut features = Vec::with_capacity(graph.node_count() + graph.edge_count());
    for (id, node) in graph.nodes.iter().enumerate() {
        let p = proj.unproject(node.mean);
        let c = node.covariance;
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
            "properties": {"id": id, "cov": [c.xx, c.xy, c.yy]},
        }));
    }
    for (id, &(a, b)) in graph.edges.iter().enumerate() {
        let (pa, pb) = (proj.unproject(graph.nodes[a].mean), proj.unproject(graph.nodes[b].mean));
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[pa.lon, pa.lat], [pb.lon, pb.lat]]},
            "properties": {"id": id, "a": a, "b": b, "visits": graph.visit_counts[a][b]},
        }));
    }
    let r = proj.reference();
    json!({
        "type": "FeatureCollection",
        "reference": [r.lon, r.lat],
        "features": features,
    })
}

fn bad(msg: impl Into<String>) -> Error {
    Error::GeoJson(msg.into())
}

fn num(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| bad(format!("{what} must be a number")))
}

fn index(props: &Map<String, Value>, key: &str) -> Result<usize> {
    props
        .get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| bad(format!("missing integer property {key:?}")))
}

/// Reads a graph written by [`graph_to_geojson`]. Node ids must be exactly
/// `0..n`; visit counts are restored for the listed edges only.
pub fn graph_from_geojson(doc: &Value) -> Result<(TrafficGraph, Projection)> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("expected a FeatureCollection"));
    }
    let reference = doc
        .get("reference")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .ok_or_else(|| bad("missing \"reference\": [lon, lat]"))?;
    let proj = Projection::new(GeoPoint::new(num(&reference[0], "reference lon")?, num(&reference[1], "reference lat")?)?)?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing features"))?;

    let mut nodes: Vec<(usize, EllipsoidalGate)> = Vec::new();
    let mut edges: Vec<(usize, usize, usize, u64)> = Vec::new();
    for f in features {
        let props = f
            .get("properties")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("feature without properties"))?;
        let geom = f.get("geometry").ok_or_else(|| bad("feature without geometry"))?;
        let coords = geom.get("coordinates").ok_or_else(|| bad("geometry without coordinates"))?;
        match geom.get("type").and_then(Value::as_str) {
            Some("Point") => {
                let c = coords.as_array().filter(|c| c.len() == 2).ok_or_else(|| bad("bad Point"))?;
                let geo = GeoPoint::new(num(&c[0], "lon")?, num(&c[1], "lat")?)?;
                let cov = props
                    .get("cov")
                    .and_then(Value::as_array)
                    .filter(|c| c.len() == 3)
                    .ok_or_else(|| bad("node needs cov: [sxx, sxy, syy]"))?;
                let covariance = Cov2 {
                    xx: num(&cov[0], "cov")?,
                    xy: num(&cov[1], "cov")?,
                    yy: num(&cov[2], "cov")?,
                };
                nodes.push((index(props, "id")?, EllipsoidalGate::new(proj.project(geo)?, covariance)));
            }
            Some("LineString") => {
                let visits = props.get("visits").and_then(Value::as_u64).unwrap_or(0);
                edges.push((index(props, "id")?, index(props, "a")?, index(props, "b")?, visits));
            }
            other => return Err(bad(format!("unsupported geometry {other:?}"))),
        }
    }
    nodes.sort_by_key(|(id, _)| *id);
    if nodes.iter().enumerate().any(|(i, (id, _))| i != *id) {
        return Err(bad("node ids must be 0..n without gaps"));
    }
    edges.sort_by_key(|e| e.0);
    if edges.iter().enumerate().any(|(i, e)| i != e.0) {
        return Err(bad("edge ids must be 0..m without gaps"));
    }
    let n = nodes.len();
    let mut visit_counts = vec![vec![0u64; n]; n];
    for &(_, a, b, v) in &edges {
        if a >= n || b >= n {
            return Err(bad(format!("edge ({a}, {b}) references a missing node")));
        }
        visit_counts[a][b] = v;
    }
    let graph = TrafficGraph {
        nodes: nodes.into_iter().map(|(_, g)| g).collect(),
        edges: edges.iter().map(|&(_, a, b, _)| (a, b)).collect(),
        visit_counts,
    };
    graph.validate()?;
    Ok((graph, proj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LocalPoint;

    #[test]
    fn round_trip() {
        let proj = Projection::new(GeoPoint::new(12.0, 54.35).unwrap()).unwrap();
        let g = TrafficGraph {
            nodes: vec![
                EllipsoidalGate::new(LocalPoint::new(-1000.0, 250.0), Cov2 { xx: 40.0, xy: 3.0, yy: 20.0 }),
                EllipsoidalGate::new(LocalPoint::new(5000.0, -800.0), Cov2 { xx: 10.0, xy: 0.0, yy: 10.0 }),
                EllipsoidalGate::new(LocalPoint::new(9000.0, 4000.0), Cov2::IDENTITY),
            ],
            edges: vec![(0, 1), (1, 2)],
            visit_counts: vec![vec![0, 12, 0], vec![0, 0, 7], vec![0, 0, 0]],
        };
        let doc = graph_to_geojson(&g, &proj);
        let text = serde_json::to_string(&doc).unwrap();
        let (back, proj2) = graph_from_geojson(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(proj2, proj);
        assert_eq!(back.edges, g.edges);
        assert_eq!(back.visit_counts, g.visit_counts);
        for (a, b) in back.nodes.iter().zip(&g.nodes) {
            assert!(a.mean.distance(b.mean) < 1e-6);
            assert_eq!(a.covariance, b.covariance);
        }
        assert_eq!(doc["features"][3]["properties"]["visits"], 12);
    }

    #[test]
    fn rejects_malformed_documents() {
        assert!(graph_from_geojson(&json!({"type": "Feature"})).is_err());
        assert!(graph_from_geojson(&json!({"type": "FeatureCollection", "features": []})).is_err());
        let dangling = json!({
            "type": "FeatureCollection",
            "reference": [12.0, 54.0],
            "features": [{
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [[12.0, 54.0], [12.1, 54.0]]},
                "properties": {"id": 0, "a": 0, "b": 1, "visits": 1}
            }]
        });
        assert!(graph_from_geojson(&dangling).is_err());
    }
}
