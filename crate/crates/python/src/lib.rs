//! Python bindings. Corpora cross the boundary as CSV text in the standard
//! ingest schema, graphs as GeoJSON text and models as checkpoint bytes.

use ais_edl::ais::VesselTrack;
use ais_edl::config::PipelineConfig;
use ais_edl::detectors::{self, sweep_point, DetectionThresholds};
use ais_edl::evidential::{self, DirichletParams, NigParams};
use ais_edl::geometry::{LocalPoint, Projection};
use ais_edl::graph::{self as lanes, DbscanConfig, TrafficGraph};
use ais_edl::neural::{load_checkpoint, save_checkpoint, Model, ModelSpec, WeightStore};
use ais_edl::pipeline::{self, ClassTask};
use ais_edl::similarity::{enumerate_routes, score_track, MAX_ROUTE_NODES};
use ais_edl::synth::{self, AnomalyInjection, InjectionKind, WorldSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn err(e: ais_edl::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tracks(csv: &str, cfg: &PipelineConfig) -> PyResult<Vec<VesselTrack>> {
    Ok(pipeline::ingest(csv.as_bytes(), cfg).map_err(err)?.0)
}

fn task(name: &str) -> PyResult<ClassTask> {
    match name {
        "ut" => Ok(ClassTask::UnusualTurn),
        "oos" => Ok(ClassTask::OnOffSwitching),
        _ => Err(PyValueError::new_err(format!("task must be 'ut' or 'oos', got {name:?}"))),
    }
}

fn points(xy: &[(f64, f64)]) -> Vec<LocalPoint> {
    xy.iter().map(|&(x, y)| LocalPoint::new(x, y)).collect()
}

/// `key=value` pipeline configuration.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text=None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => PipelineConfig::parse(t).map_err(err)?,
            None => PipelineConfig::default(),
        };
        Ok(Self { inner })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(err)
    }

    fn dump(&self) -> String {
        self.inner.dump()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, tau={})", self.inner.seed, self.inner.tau)
    }
}

/// Traffic-lane graph with the projection its nodes live in.
#[pyclass(name = "Graph")]
struct PyGraph {
    inner: TrafficGraph,
    proj: Projection,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_geojson(text: &str) -> PyResult<Self> {
        let doc = serde_json_value(text)?;
        let (inner, proj) = lanes::graph_from_geojson(&doc).map_err(err)?;
        Ok(Self { inner, proj })
    }

    fn to_geojson(&self) -> String {
        lanes::graph_to_geojson(&self.inner, &self.proj).to_string()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    /// Node centres as `(lon, lat)`.
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner
            .nodes
            .iter()
            .map(|n| {
                let g = self.proj.unproject(n.mean);
                (g.lon, g.lat)
            })
            .collect()
    }

    /// Directed edges as `(from, to)` node ids, indexed by edge id.
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges.clone()
    }

    /// Applies an edit script (`add_node`, `remove_node`, `add_edge`, `remove_edge` lines).
    fn refine(&self, script: &str) -> PyResult<Self> {
        let edits = lanes::parse_edit_script(script, &self.proj).map_err(err)?;
        Ok(Self {
            inner: lanes::refine_graph(&self.inner, &edits).map_err(err)?,
            proj: self.proj,
        })
    }
}

fn serde_json_value(text: &str) -> PyResult<serde_json::Value> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Seeded two-lane synthetic corpus.
#[pyclass(name = "World")]
struct PyWorld {
    inner: synth::World,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (tracks_per_lane=100, seed=0, tau=60))]
    fn new(tracks_per_lane: usize, seed: u64, tau: i64) -> PyResult<Self> {
        let mut spec = WorldSpec::two_lane(tracks_per_lane);
        spec.tau = tau;
        Ok(Self {
            inner: synth::generate_world(&spec, seed).map_err(err)?,
        })
    }

    #[getter]
    fn track_count(&self) -> usize {
        self.inner.tracks.len()
    }

    /// Returns a copy with one anomaly injected. `kind` is `offset` (meters),
    /// `turn` (degrees over `duration` seconds) or `gap` (seconds).
    #[pyo3(signature = (kind, magnitude, track, start, ramp=5, duration=60, starboard=true))]
    #[allow(clippy::too_many_arguments)]
    fn inject(&self, kind: &str, magnitude: f64, track: usize, start: usize, ramp: usize, duration: i64, starboard: bool) -> PyResult<Self> {
        let kind = match kind {
            "offset" => InjectionKind::Offset { ramp },
            "turn" => InjectionKind::Turn { duration, starboard },
            "gap" => InjectionKind::Gap,
            other => return Err(PyValueError::new_err(format!("unknown anomaly kind {other:?}"))),
        };
        let inj = AnomalyInjection {
            kind,
            magnitude,
            track,
            start,
        };
        Ok(Self {
            inner: synth::inject(&self.inner, &[inj]).map_err(err)?,
        })
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    fn truth_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_truth_csv(&mut buf).map_err(err)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Trained regressor or classifier.
#[pyclass(name = "Model")]
struct PyModel {
    model: Model,
    weights: WeightStore,
}

#[pymethods]
impl PyModel {
    /// Trains an `ut` or `oos` classifier on the training vessels of a corpus.
    #[staticmethod]
    fn train_classifier(task_name: &str, csv: &str, config: &PyConfig) -> PyResult<Self> {
        let cfg = &config.inner;
        let t = task(task_name)?;
        let set = pipeline::class_samples(t, &tracks(csv, cfg)?, cfg).map_err(err)?;
        let (tr, va, _) = pipeline::class_split(&set, cfg).map_err(err)?;
        let spec = ModelSpec::Classifier(pipeline::classifier_spec(t, &tr, cfg));
        let (model, out) = pipeline::fit(&spec, &tr, &va, cfg).map_err(err)?;
        Ok(Self {
            model,
            weights: out.weights,
        })
    }

    /// Associates a corpus to `graph` and trains the trajectory regressor.
    #[staticmethod]
    fn train_regressor(csv: &str, graph: &PyGraph, config: &PyConfig) -> PyResult<Self> {
        let cfg = &config.inner;
        let mut segs = pipeline::resample(&tracks(csv, cfg)?, cfg).map_err(err)?;
        pipeline::associate_segments(&mut segs, &graph.inner, &graph.proj, cfg).map_err(err)?;
        let n_edges = graph.inner.edge_count();
        let (tr, va, _) = pipeline::regression_split(&segs, n_edges, cfg).map_err(err)?;
        let spec = ModelSpec::Regressor(pipeline::regressor_spec(n_edges, cfg));
        let (model, out) = pipeline::fit(&spec, &tr, &va, cfg).map_err(err)?;
        Ok(Self {
            model,
            weights: out.weights,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        let (weights, spec) = load_checkpoint(data).map_err(err)?;
        let (model, _) = Model::init(&spec, weights.seed()).map_err(err)?;
        Ok(Self { model, weights })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &save_checkpoint(&self.weights, &self.model.spec()))
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.model {
            Model::Regressor(_) => "regressor",
            Model::Classifier(_) => "classifier",
        }
    }

    /// Held-out sweep `(u_th, accuracy_all, accuracy_anomalous)` for u_th = 0, 0.1, ..., 1.
    fn evaluate(&self, task_name: &str, csv: &str, config: &PyConfig) -> PyResult<Vec<(f64, f64, f64)>> {
        let Model::Classifier(c) = &self.model else {
            return Err(PyValueError::new_err("evaluate needs a classifier"));
        };
        let cfg = &config.inner;
        let set = pipeline::class_samples(task(task_name)?, &tracks(csv, cfg)?, cfg).map_err(err)?;
        let (_, _, test) = pipeline::class_split(&set, cfg).map_err(err)?;
        let scores = pipeline::score(c, &self.weights, &test).map_err(err)?;
        Ok((0..=10)
            .map(|i| {
                let p = sweep_point(&scores, i as f64 / 10.0);
                (p.u_th, p.accuracy_all, p.accuracy_anomalous)
            })
            .collect())
    }

    /// Per-sample `(class, probabilities, u, accepted)` for flattened input windows.
    fn classify(&self, inputs: Vec<Vec<f64>>, u_th: f64) -> PyResult<Vec<(usize, Vec<f64>, f64, bool)>> {
        let Model::Classifier(c) = &self.model else {
            return Err(PyValueError::new_err("classify needs a classifier"));
        };
        inputs
            .iter()
            .map(|x| {
                let v = detectors::classify_with_rejection(&c.forward(&self.weights, x).map_err(err)?, u_th);
                Ok((v.class, v.probs, v.u, v.accepted))
            })
            .collect()
    }

    /// AT verdicts `(mmsi, segment_start_time, min_normalized, flag)` of a corpus.
    fn detect_at(&self, csv: &str, graph: &PyGraph, config: &PyConfig) -> PyResult<Vec<(u64, i64, f64, bool)>> {
        let Model::Regressor(r) = &self.model else {
            return Err(PyValueError::new_err("detect_at needs a regressor"));
        };
        let cfg = &config.inner;
        let n_edges = pipeline::edges_of(r.spec()).map_err(err)?;
        let mut segs = pipeline::resample(&tracks(csv, cfg)?, cfg).map_err(err)?;
        pipeline::associate_segments(&mut segs, &graph.inner, &graph.proj, cfg).map_err(err)?;
        let mut out = Vec::new();
        for seg in &segs {
            let (_, verdicts) = pipeline::scan_segment_at(r, &self.weights, seg, n_edges, cfg).map_err(err)?;
            out.extend(
                verdicts
                    .iter()
                    .map(|v| (seg.mmsi, seg.records[v.start].time, v.min_normalized, v.anomalous)),
            );
        }
        Ok(out)
    }
}

/// Resamples a corpus and extracts its traffic graph.
#[pyfunction]
fn build_graph(csv: &str, config: &PyConfig) -> PyResult<PyGraph> {
    let cfg = &config.inner;
    let segs = pipeline::resample(&tracks(csv, cfg)?, cfg).map_err(err)?;
    Ok(PyGraph {
        inner: pipeline::build_graph_from(&segs, cfg).map_err(err)?,
        proj: pipeline::projection(cfg).map_err(err)?,
    })
}

/// `(mmsi, timestamp, edge)` for every resampled point; `edge` is None for outliers.
#[pyfunction]
fn associate(csv: &str, graph: &PyGraph, config: &PyConfig) -> PyResult<Vec<(u64, i64, Option<usize>)>> {
    let cfg = &config.inner;
    let mut segs = pipeline::resample(&tracks(csv, cfg)?, cfg).map_err(err)?;
    pipeline::associate_segments(&mut segs, &graph.inner, &graph.proj, cfg).map_err(err)?;
    Ok(segs
        .iter()
        .flat_map(|s| {
            let labels = s.edges.clone().unwrap_or_default();
            s.records.iter().zip(labels).map(|(r, l)| (r.mmsi, r.time, l.edge())).collect::<Vec<_>>()
        })
        .collect())
}

/// `(mmsi, score, flag)` of every vessel under the route-similarity baseline.
#[pyfunction]
fn similarity_scores(csv: &str, graph: &PyGraph, config: &PyConfig) -> PyResult<Vec<(u64, f64, bool)>> {
    let cfg = &config.inner;
    let routes = enumerate_routes(&graph.inner, MAX_ROUTE_NODES).map_err(err)?;
    let params = cfg.similarity_params();
    tracks(csv, cfg)?
        .iter()
        .map(|t| {
            let v = score_track(&t.local_points(&graph.proj), &routes, &graph.inner, &params).map_err(err)?;
            Ok((t.mmsi, v.score, v.anomalous))
        })
        .collect()
}

/// Indices of the points kept by Ramer-Douglas-Peucker simplification.
#[pyfunction]
fn rdp_simplify(points_xy: Vec<(f64, f64)>, epsilon: f64) -> PyResult<Vec<usize>> {
    ais_edl::geometry::rdp_simplify(&points(&points_xy), epsilon).map_err(err)
}

/// DBSCAN cluster label per point, -1 for noise.
#[pyfunction]
fn dbscan(points_xy: Vec<(f64, f64)>, eps: f64, n_min: usize) -> PyResult<Vec<i64>> {
    let cfg = DbscanConfig::new(eps, n_min).map_err(err)?;
    Ok(lanes::dbscan(&points(&points_xy), &cfg).map_err(err)?.labels)
}

#[pyfunction]
fn studentt_logpdf(x: f64, x_hat: f64, v: f64, alpha: f64, beta: f64) -> PyResult<f64> {
    let p = NigParams::new(x_hat, v, alpha, beta).map_err(err)?;
    evidential::studentt_logpdf(x, &p).map_err(err)
}

/// `(aleatoric, epistemic)` variances of a NIG output.
#[pyfunction]
fn nig_uncertainties(v: f64, alpha: f64, beta: f64) -> PyResult<(f64, f64)> {
    let u = evidential::nig_uncertainties(&NigParams::new(0.0, v, alpha, beta).map_err(err)?);
    Ok((u.aleatoric, u.epistemic))
}

/// Loss and its partials with respect to `(x_hat, v, alpha, beta)`.
#[pyfunction]
fn regression_loss(x: f64, x_hat: f64, v: f64, alpha: f64, beta: f64, lambda: f64) -> PyResult<(f64, (f64, f64, f64, f64))> {
    let p = NigParams::new(x_hat, v, alpha, beta).map_err(err)?;
    let (l, g) = evidential::regression_loss(x, &p, lambda).map_err(err)?;
    Ok((l, (g.x_hat, g.v, g.alpha, g.beta)))
}

/// `(expected probabilities, uncertainty K/S)` of a Dirichlet.
#[pyfunction]
fn dirichlet(alpha: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let d = DirichletParams::new(alpha).map_err(err)?;
    Ok((evidential::dirichlet_probs(&d), evidential::dirichlet_uncertainty(&d)))
}

/// `(min_normalized, anomalous)` of one chunk of `[window][feature]` uncertainties.
#[pyfunction]
#[pyo3(signature = (uncertainties, theta_at, features=vec![0, 1]))]
fn detect_at(uncertainties: Vec<Vec<f64>>, theta_at: f64, features: Vec<usize>) -> PyResult<(f64, bool)> {
    let th = DetectionThresholds {
        theta_at,
        at_features: features,
        ..Default::default()
    };
    let v = detectors::detect_at(&uncertainties, &th).map_err(err)?;
    Ok((v.min_normalized, v.anomalous))
}

#[pyfunction]
fn turn_angle(cogs: Vec<f64>) -> PyResult<f64> {
    detectors::turn_angle(&cogs).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (t0, t1, theta_oos=180.0))]
fn label_oos(t0: i64, t1: i64, theta_oos: f64) -> PyResult<bool> {
    detectors::label_oos(t0, t1, theta_oos).map_err(err)
}

#[pymodule(name = "ais_edl")]
fn ais_edl_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyModel>()?;
    for f in [
        wrap_pyfunction!(build_graph, m)?,
        wrap_pyfunction!(associate, m)?,
        wrap_pyfunction!(similarity_scores, m)?,
        wrap_pyfunction!(rdp_simplify, m)?,
        wrap_pyfunction!(dbscan, m)?,
        wrap_pyfunction!(studentt_logpdf, m)?,
        wrap_pyfunction!(nig_uncertainties, m)?,
        wrap_pyfunction!(regression_loss, m)?,
        wrap_pyfunction!(dirichlet, m)?,
        wrap_pyfunction!(detect_at, m)?,
        wrap_pyfunction!(turn_angle, m)?,
        wrap_pyfunction!(label_oos, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
