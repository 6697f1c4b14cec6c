//! Normalized model inputs for the three tasks: next-position regression,
//! unusual-turn windows and on-off switching pairs.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ais::{AisRecord, Roi, TrackSegment, VesselTrack, DEFAULT_MAX_SOG};
use crate::detectors::{label_oos, turn_angle};
use crate::graph::EdgeLabel;
use crate::{Error, Result};

/// Kinematic features per record: lon, lat, cog, sog.
pub const KINEMATIC_FEATURES: usize = 4;
/// Seconds that map to 1.0 in the OOS time feature.
pub const OOS_TIME_SCALE: f64 = 3600.0;

/// Model-ready samples. Every input is a flattened `t × n_in` window; targets
/// are flattened `L × n_out` values for regression or one-hot class vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub t: usize,
    pub n_in: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// Vessel (MMSI) each sample came from.
    pub groups: Vec<u64>,
    /// Segments too short to yield a single window.
    pub skipped: usize,
}

impl SampleSet {
    pub fn new(t: usize, n_in: usize) -> Self {
        Self {
            t,
            n_in,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, input: Vec<f64>, target: Vec<f64>, group: u64) {
        debug_assert_eq!(input.len(), self.t * self.n_in);
        self.inputs.push(input);
        self.targets.push(target);
        self.groups.push(group);
    }

    pub fn subset(&self, indices: &[usize]) -> SampleSet {
        let mut out = SampleSet::new(self.t, self.n_in);
        for &i in indices {
            out.push(self.inputs[i].clone(), self.targets[i].clone(), self.groups[i]);
        }
        out
    }

    pub fn extend(&mut self, other: SampleSet) {
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        self.groups.extend(other.groups);
        self.skipped += other.skipped;
    }

    /// Class index of each one-hot target (first maximum).
    pub fn classes(&self) -> Vec<usize> {
        self.targets.iter().map(|y| argmax(y)).collect()
    }

    pub fn split(&self, split: &VesselSplit) -> (SampleSet, SampleSet, SampleSet) {
        let pick = |set: &BTreeSet<u64>| {
            let idx: Vec<usize> = (0..self.len()).filter(|&i| set.contains(&self.groups[i])).collect();
            self.subset(&idx)
        };
        (pick(&split.train), pick(&split.val), pick(&split.test))
    }

    /// One row per sample: `x0..x{n-1},y0..y{m-1},group`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.t * self.n_in;
        let m = self.targets.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        header.extend((0..m).map(|i| format!("y{i}")));
        header.push("group".into());
        writeln!(w, "{}", header.join(","))?;
        for ((x, y), g) in self.inputs.iter().zip(&self.targets).zip(&self.groups) {
            let row: Vec<String> = x.iter().chain(y).map(f64::to_string).collect();
            writeln!(w, "{},{g}", row.join(","))?;
        }
        Ok(())
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// Min-max bounds and edge-encoding width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSpec {
    pub roi: Roi,
    pub max_sog: f64,
    /// Number of graph edges; the one-hot block has one more slot for
    /// [`EdgeLabel::Outlier`].
    pub n_edges: usize,
}

impl FeatureSpec {
    pub fn new(roi: Roi, n_edges: usize) -> Self {
        Self {
            roi,
            max_sog: DEFAULT_MAX_SOG,
            n_edges,
        }
    }

    /// Width of one regression input frame.
    pub fn frame_width(&self) -> usize {
        KINEMATIC_FEATURES + self.n_edges + 1
    }

    /// lon, lat, cog, sog scaled into [0, 1].
    pub fn kinematics(&self, r: &AisRecord) -> [f64; KINEMATIC_FEATURES] {
        let unit = |v: f64, lo: f64, hi: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        [
            unit(r.lon, self.roi.min_lon, self.roi.max_lon),
            unit(r.lat, self.roi.min_lat, self.roi.max_lat),
            (r.cog / 360.0).clamp(0.0, 1.0),
            unit(r.sog, 0.0, self.max_sog),
        ]
    }

    pub fn frame(&self, r: &AisRecord, edge: EdgeLabel) -> Result<Vec<f64>> {
        let mut f = Vec::with_capacity(self.frame_width());
        f.extend_from_slice(&self.kinematics(r));
        let slot = match edge {
            EdgeLabel::Edge(e) if e < self.n_edges => e,
            EdgeLabel::Edge(e) => {
                return Err(Error::Shape(format!("edge {e} outside a graph with {} edges", self.n_edges)));
            }
            EdgeLabel::Outlier => self.n_edges,
        };
        f.extend((0..=self.n_edges).map(|i| if i == slot { 1.0 } else { 0.0 }));
        Ok(f)
    }

    fn frames(&self, seg: &TrackSegment) -> Result<Vec<Vec<f64>>> {
        let edges = seg
            .edges
            .as_ref()
            .ok_or_else(|| Error::Config(format!("segment of vessel {} has no edge labels", seg.mmsi)))?;
        if edges.len() != seg.records.len() {
            return Err(Error::Shape(format!(
                "vessel {}: {} edge labels for {} records",
                seg.mmsi,
                edges.len(),
                seg.records.len()
            )));
        }
        seg.records.iter().zip(edges).map(|(r, &e)| self.frame(r, e)).collect()
    }
}

/// Every length-`t` input window of a segment (no targets), in order.
pub fn regression_windows(seg: &TrackSegment, t: usize, spec: &FeatureSpec) -> Result<Vec<Vec<f64>>> {
    let frames = spec.frames(seg)?;
    if t == 0 || frames.len() < t {
        return Ok(Vec::new());
    }
    Ok(frames.windows(t).map(|w| w.concat()).collect())
}

/// Sliding windows of `t + l` frames with step one: the first `t` frames are
/// the input, the kinematic features of the last `l` the target.
pub fn make_regression_samples(segments: &[TrackSegment], t: usize, l: usize, spec: &FeatureSpec) -> Result<SampleSet> {
    if t == 0 || l == 0 {
        return Err(Error::Config(format!("window lengths must be positive (T={t}, L={l})")));
    }
    let mut set = SampleSet::new(t, spec.frame_width());
    for seg in segments {
        let frames = spec.frames(seg)?;
        if frames.len() < t + l {
            set.skipped += 1;
            continue;
        }
        for w in frames.windows(t + l) {
            let input = w[..t].concat();
            let target: Vec<f64> = w[t..].iter().flat_map(|f| f[..KINEMATIC_FEATURES].to_vec()).collect();
            set.push(input, target, seg.mmsi);
        }
    }
    Ok(set)
}

fn one_hot(anomalous: bool) -> Vec<f64> {
    if anomalous {
        vec![0.0, 1.0]
    } else {
        vec![1.0, 0.0]
    }
}

/// Course-only windows of length `t` (cog/360), labelled anomalous when their
/// turn angle exceeds `theta_ut` degrees.
pub fn make_ut_samples(segments: &[TrackSegment], t: usize, theta_ut: f64) -> Result<SampleSet> {
    if t == 0 {
        return Err(Error::Config("UT window length must be positive".into()));
    }
    let mut set = SampleSet::new(t, 1);
    for seg in segments {
        if seg.records.len() < t {
            set.skipped += 1;
            continue;
        }
        let cogs: Vec<f64> = seg.records.iter().map(|r| r.cog).collect();
        for w in cogs.windows(t) {
            let input = w.iter().map(|c| c / 360.0).collect();
            set.push(input, one_hot(turn_angle(w)? > theta_ut), seg.mmsi);
        }
    }
    Ok(set)
}

/// Consecutive raw report pairs as `[lon, lat, cog, sog, time]` frames. The
/// first frame's time is 0, the second's the gap in hours capped at 1.
/// Labelled anomalous when the gap exceeds `theta_oos` seconds.
pub fn make_oos_samples(tracks: &[VesselTrack], theta_oos: f64, spec: &FeatureSpec) -> Result<SampleSet> {
    let mut set = SampleSet::new(2, KINEMATIC_FEATURES + 1);
    for track in tracks {
        if track.records.len() < 2 {
            set.skipped += 1;
            continue;
        }
        for pair in track.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let anomalous = label_oos(a.time, b.time, theta_oos)?;
            let mut input = Vec::with_capacity(10);
            input.extend_from_slice(&spec.kinematics(a));
            input.push(0.0);
            input.extend_from_slice(&spec.kinematics(b));
            input.push(((b.time - a.time) as f64 / OOS_TIME_SCALE).min(1.0));
            set.push(input, one_hot(anomalous), track.mmsi);
        }
    }
    Ok(set)
}

/// Down-samples every class to the size of the smallest one. Retained samples
/// keep their original order.
pub fn balance_classes(set: &SampleSet, seed: u64) -> Result<SampleSet> {
    let classes = set.classes();
    let k = set.targets.first().map_or(0, Vec::len);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in classes.iter().enumerate() {
        by_class[c].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Balance(format!("class {c} has no samples")));
    }
    let n = by_class.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    for idx in &mut by_class {
        if idx.len() > n {
            idx.shuffle(&mut rng);
            idx.truncate(n);
        }
        keep.extend_from_slice(idx);
    }
    keep.sort_unstable();
    let mut out = set.subset(&keep);
    out.skipped = set.skipped;
    Ok(out)
}

/// Vessel-level train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VesselSplit {
    pub train: BTreeSet<u64>,
    pub val: BTreeSet<u64>,
    pub test: BTreeSet<u64>,
}

impl VesselSplit {
    /// Shuffles the distinct vessels with `seed` and deals out the given
    /// train and validation fractions; the rest is test.
    pub fn new(mmsis: impl IntoIterator<Item = u64>, train: f64, val: f64, seed: u64) -> Result<Self> {
        if !(train >= 0.0 && val >= 0.0 && train + val <= 1.0) {
            return Err(Error::Config(format!("bad split fractions {train}/{val}")));
        }
        let mut ids: Vec<u64> = mmsis.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len() as f64;
        let n_train = (train * n).round() as usize;
        let n_val = ((val * n).round() as usize).min(ids.len() - n_train);
        Ok(Self {
            train: ids[..n_train].iter().copied().collect(),
            val: ids[n_train..n_train + n_val].iter().copied().collect(),
            test: ids[n_train + n_val..].iter().copied().collect(),
        })
    }

    /// The 50/10/40 split.
    pub fn standard(mmsis: impl IntoIterator<Item = u64>, seed: u64) -> Self {
        Self::new(mmsis, 0.5, 0.1, seed).expect("fixed fractions are valid")
    }
}
