//! Stage wiring shared by the command-line tool and the bindings: each
//! function chains module operations under one [`PipelineConfig`].

use std::collections::BTreeSet;
use std::io::Read;

use crate::ais::{filter_roi, group_tracks, parse_csv, split_and_resample, AisRecord, IngestOptions, IngestReport, TrackSegment, VesselTrack};
use crate::config::PipelineConfig;
use crate::detectors::{classify_with_rejection, scan_track_at, window_uncertainties, AtVerdict, ClassVerdict, Scored};
use crate::features::{
    balance_classes, make_oos_samples, make_regression_samples, make_ut_samples, regression_windows, FeatureSpec,
    SampleSet, VesselSplit, KINEMATIC_FEATURES,
};
use crate::geometry::Projection;
use crate::graph::{associate, build_graph, EdgeLabel, TrafficGraph};
use crate::neural::{
    train, Classifier, ClassifierSpec, Model, ModelSpec, Regressor, RegressorSpec, TrainOutcome, WeightStore,
};
use crate::{Error, Result};

/// Cleaned, region-filtered reports grouped per vessel, plus the count of
/// duplicate timestamps dropped.
pub fn ingest<R: Read>(input: R, cfg: &PipelineConfig) -> Result<(Vec<VesselTrack>, IngestReport, usize)> {
    let opts = IngestOptions {
        max_sog: cfg.max_sog,
        ..Default::default()
    };
    let (records, report) = parse_csv(input, &opts)?;
    let (tracks, duplicates) = group_tracks(&filter_roi(&records, &cfg.roi));
    Ok((tracks, report, duplicates))
}

/// Gap-split, `tau`-resampled segments of every track.
pub fn resample(tracks: &[VesselTrack], cfg: &PipelineConfig) -> Result<Vec<TrackSegment>> {
    let mut out = Vec::new();
    for t in tracks {
        out.extend(split_and_resample(t, cfg.tau, cfg.max_gap)?.0);
    }
    Ok(out)
}

/// Rebuilds segments from already-resampled records: a new segment starts
/// whenever the vessel changes or consecutive reports are not `tau` apart.
pub fn regroup(rows: &[(AisRecord, Option<EdgeLabel>)], tau: i64) -> Vec<TrackSegment> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|(r, _)| (r.mmsi, r.time));
    let mut out: Vec<TrackSegment> = Vec::new();
    for (r, label) in sorted {
        let continues = out.last().is_some_and(|s: &TrackSegment| {
            let last = s.records.last().unwrap();
            last.mmsi == r.mmsi && r.time - last.time == tau
        });
        if !continues {
            out.push(TrackSegment {
                mmsi: r.mmsi,
                tau,
                records: Vec::new(),
                edges: label.map(|_| Vec::new()),
            });
        }
        let seg = out.last_mut().unwrap();
        seg.records.push(r);
        match (&mut seg.edges, label) {
            (Some(e), Some(l)) => e.push(l),
            (Some(_), None) => seg.edges = None,
            _ => {}
        }
    }
    out
}

pub fn projection(cfg: &PipelineConfig) -> Result<Projection> {
    cfg.roi.projection()
}

pub fn build_graph_from(segments: &[TrackSegment], cfg: &PipelineConfig) -> Result<TrafficGraph> {
    let proj = projection(cfg)?;
    let tracks: Vec<_> = segments.iter().map(|s| s.local_points(&proj)).collect();
    build_graph(&tracks, &cfg.graph_params())
}

/// Labels every segment's points in place.
pub fn associate_segments(segments: &mut [TrackSegment], graph: &TrafficGraph, proj: &Projection, cfg: &PipelineConfig) -> Result<()> {
    let params = cfg.association_params();
    for seg in segments {
        seg.edges = Some(associate(&seg.local_points(proj), graph, &params)?);
    }
    Ok(())
}

fn mmsis<'a>(it: impl IntoIterator<Item = &'a u64>) -> BTreeSet<u64> {
    it.into_iter().copied().collect()
}

/// Regression samples split 50/10/40 by vessel.
pub fn regression_split(segments: &[TrackSegment], n_edges: usize, cfg: &PipelineConfig) -> Result<(SampleSet, SampleSet, SampleSet)> {
    let spec = FeatureSpec {
        max_sog: cfg.max_sog,
        ..FeatureSpec::new(cfg.roi, n_edges)
    };
    let set = make_regression_samples(segments, cfg.t, cfg.l, &spec)?;
    let split = VesselSplit::standard(mmsis(&set.groups), cfg.seed);
    Ok(set.split(&split))
}

pub fn regressor_spec(n_edges: usize, cfg: &PipelineConfig) -> RegressorSpec {
    let n_in = KINEMATIC_FEATURES + n_edges + 1;
    RegressorSpec {
        hidden: cfg.hidden,
        layers: cfg.layers,
        dropout: cfg.dropout,
        t_in: cfg.t,
        l_out: cfg.l,
        head: cfg.head,
        ..RegressorSpec::new(n_in, KINEMATIC_FEATURES)
    }
}

/// Trains a fresh model on `train_set`, keeping the weights with the best
/// validation loss. The initial weights come from `cfg.seed`.
pub fn fit(spec: &ModelSpec, train_set: &SampleSet, val_set: &SampleSet, cfg: &PipelineConfig) -> Result<(Model, TrainOutcome)> {
    let (model, init) = Model::init(spec, cfg.seed)?;
    let out = train(&model, init, train_set, val_set, &cfg.train_config())?;
    Ok((model, out))
}

/// Which classifier task a sample set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassTask {
    UnusualTurn,
    OnOffSwitching,
}

impl ClassTask {
    pub fn name(self) -> &'static str {
        match self {
            ClassTask::UnusualTurn => "ut",
            ClassTask::OnOffSwitching => "oos",
        }
    }
}

/// Labelled samples for a classifier task: UT windows come from resampled
/// segments, OOS pairs from the raw per-vessel reports.
pub fn class_samples(task: ClassTask, tracks: &[VesselTrack], cfg: &PipelineConfig) -> Result<SampleSet> {
    match task {
        ClassTask::UnusualTurn => make_ut_samples(&resample(tracks, cfg)?, cfg.ut_window, cfg.theta_ut),
        ClassTask::OnOffSwitching => {
            let spec = FeatureSpec {
                max_sog: cfg.max_sog,
                ..FeatureSpec::new(cfg.roi, 0)
            };
            make_oos_samples(tracks, cfg.theta_oos, &spec)
        }
    }
}

/// Vessel split, then class balancing of each part. A part that lacks a
/// class entirely is returned unbalanced.
pub fn class_split(set: &SampleSet, cfg: &PipelineConfig) -> Result<(SampleSet, SampleSet, SampleSet)> {
    let split = VesselSplit::standard(mmsis(&set.groups), cfg.seed);
    let (tr, va, te) = set.split(&split);
    let tr = balance_classes(&tr, cfg.seed)?;
    let soft = |s: SampleSet, seed: u64| match balance_classes(&s, seed) {
        Ok(b) => b,
        Err(_) => s,
    };
    Ok((tr, soft(va, cfg.seed.wrapping_add(1)), soft(te, cfg.seed.wrapping_add(2))))
}

pub fn classifier_spec(task: ClassTask, set: &SampleSet, cfg: &PipelineConfig) -> ClassifierSpec {
    let hidden = match task {
        ClassTask::UnusualTurn => cfg.ut_hidden.clone(),
        ClassTask::OnOffSwitching => cfg.oos_hidden.clone(),
    };
    ClassifierSpec {
        activation: cfg.evidence,
        ..ClassifierSpec::new(set.t, set.n_in, hidden)
    }
}

pub fn classify(model: &Classifier, w: &WeightStore, set: &SampleSet, u_th: f64) -> Result<Vec<ClassVerdict>> {
    set.inputs
        .iter()
        .map(|x| Ok(classify_with_rejection(&model.forward(w, x)?, u_th)))
        .collect()
}

pub fn score(model: &Classifier, w: &WeightStore, set: &SampleSet) -> Result<Vec<Scored>> {
    let verdicts = classify(model, w, set, 1.0)?;
    Ok(set
        .classes()
        .into_iter()
        .zip(verdicts)
        .map(|(truth, v)| Scored {
            truth,
            predicted: v.class,
            u: v.u,
        })
        .collect())
}

/// Per-window uncertainties and AT chunk verdicts of one labelled segment.
pub fn scan_segment_at(
    model: &Regressor,
    w: &WeightStore,
    seg: &TrackSegment,
    n_edges: usize,
    cfg: &PipelineConfig,
) -> Result<(Vec<Vec<f64>>, Vec<AtVerdict>)> {
    let spec = FeatureSpec {
        max_sog: cfg.max_sog,
        ..FeatureSpec::new(cfg.roi, n_edges)
    };
    let windows = regression_windows(seg, model.spec().t_in, &spec)?;
    let u = window_uncertainties(model, w, &windows, cfg.uncertainty, cfg.mc_passes, cfg.seed)?;
    let th = cfg.thresholds();
    let verdicts = if u.len() < th.segment_len {
        Vec::new()
    } else {
        scan_track_at(&u, &th)?
    };
    Ok((u, verdicts))
}

/// Number of edges a regressor checkpoint was trained against.
pub fn edges_of(spec: &RegressorSpec) -> Result<usize> {
    spec.n_in
        .checked_sub(KINEMATIC_FEATURES + 1)
        .ok_or_else(|| Error::Shape(format!("regressor input width {} is too small", spec.n_in)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(mmsi: u64, time: i64) -> AisRecord {
        AisRecord {
            mmsi,
            time,
            lon: 12.0,
            lat: 54.3,
            sog: 10.0,
            cog: 90.0,
            ship_type: 70,
            nav_status: 0,
        }
    }

    #[test]
    fn regroup_splits_on_vessel_and_cadence() {
        let rows: Vec<(AisRecord, Option<EdgeLabel>)> = [(1, 0), (1, 60), (1, 180), (2, 60), (2, 120), (1, 240)]
            .iter()
            .map(|&(m, t)| (rec(m, t), Some(EdgeLabel::Edge(0))))
            .collect();
        let segs = regroup(&rows, 60);
        let shape: Vec<(u64, usize)> = segs.iter().map(|s| (s.mmsi, s.len())).collect();
        assert_eq!(shape, vec![(1, 2), (1, 2), (2, 2)]);
        assert!(segs.iter().all(|s| s.edges.as_ref().unwrap().len() == s.len()));
        let unlabeled: Vec<_> = rows.iter().map(|(r, _)| (*r, None)).collect();
        assert!(regroup(&unlabeled, 60).iter().all(|s| s.edges.is_none()));
    }
}
