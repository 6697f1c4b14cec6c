//! Seeded synthetic lane traffic with injectable anomalies.
//!
//! Vessels follow polyline lanes at constant speed, sampled every `tau`
//! seconds with Gaussian cross-track noise. Every track starts exactly at
//! its lane's first vertex and ends exactly at its last one.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ais::{write_csv, AisRecord, Roi, VesselTrack};
use crate::geometry::{bearing, normalize_degrees, GeoPoint, LocalPoint, Projection};
use crate::{Error, Result};

const KNOT_MPS: f64 = 1852.0 / 3600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSpec {
    pub polyline: Vec<GeoPoint>,
    pub sog_knots: f64,
    pub count: usize,
    /// Cross-track noise standard deviation, meters.
    pub sigma: f64,
    /// Stream of the world generator this lane draws from.
    pub seed: u64,
}

impl LaneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.polyline.len() < 2 {
            return Err(Error::Config("lane polyline needs at least 2 points".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("lane sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.sog_knots > 0.0) || !self.sog_knots.is_finite() {
            return Err(Error::Config(format!("lane speed must be > 0, got {}", self.sog_knots)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub lanes: Vec<LaneSpec>,
    pub projection_ref: GeoPoint,
    pub tau: i64,
    pub start_time: i64,
    /// Seconds between consecutive departures on one lane.
    pub departure_spacing: i64,
    pub mmsi_base: u64,
    /// Per-track speed is drawn uniformly within ±this fraction of nominal.
    pub speed_spread: f64,
    pub cog_sigma_deg: f64,
    pub sog_sigma_knots: f64,
}

impl WorldSpec {
    /// Two bent lanes crossing at a shared hub in the western Baltic box,
    /// one travel direction each.
    pub fn two_lane(tracks_per_lane: usize) -> Self {
        let p = |lon, lat| GeoPoint { lon, lat };
        let hub = p(12.0, 54.35);
        let lane = |a: GeoPoint, b: GeoPoint, seed| LaneSpec {
            polyline: vec![a, hub, b],
            sog_knots: 12.0,
            count: tracks_per_lane,
            sigma: 30.0,
            seed,
        };
        Self {
            lanes: vec![
                lane(p(11.55, 54.22), p(12.45, 54.40), 1),
                lane(p(11.55, 54.48), p(12.45, 54.30), 2),
            ],
            projection_ref: Roi::western_baltic().center(),
            tau: 60,
            start_time: 1_600_000_000,
            departure_spacing: 600,
            mmsi_base: 211_000_000,
            speed_spread: 0.1,
            cog_sigma_deg: 0.5,
            sog_sigma_knots: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for lane in &self.lanes {
            lane.validate()?;
        }
        if self.tau <= 0 || self.departure_spacing < 0 {
            return Err(Error::Config("tau must be > 0 and departure spacing >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.speed_spread) || !(self.cog_sigma_deg >= 0.0) || !(self.sog_sigma_knots >= 0.0) {
            return Err(Error::Config("invalid noise settings".into()));
        }
        Projection::new(self.projection_ref)?;
        Ok(())
    }
}

/// Anomaly label of one synthetic point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    Offset,
    Turn,
    /// Set on the first record after a deleted span.
    Gap,
}

impl AnomalyKind {
    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::Offset => "offset",
            AnomalyKind::Turn => "turn",
            AnomalyKind::Gap => "gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrack {
    pub track: VesselTrack,
    pub lane: usize,
    /// Polyline leg each point was generated on.
    pub legs: Vec<usize>,
    pub anomalies: Vec<Option<AnomalyKind>>,
}

impl SynthTrack {
    pub fn is_anomalous(&self) -> bool {
        self.anomalies.iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub projection: Projection,
    pub tracks: Vec<SynthTrack>,
}

impl World {
    /// All records ordered by mmsi then time.
    pub fn records(&self) -> Vec<AisRecord> {
        let mut out: Vec<AisRecord> = self.tracks.iter().flat_map(|t| t.track.records.iter().copied()).collect();
        out.sort_by_key(|r| (r.mmsi, r.time));
        out
    }

    pub fn vessel_tracks(&self) -> Vec<VesselTrack> {
        self.tracks.iter().map(|t| t.track.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.records())
    }

    /// `mmsi,timestamp,lane,leg,anomaly` with an empty anomaly field on normal points.
    pub fn write_truth_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mmsi", "timestamp", "lane", "leg", "anomaly"])?;
        for t in &self.tracks {
            for ((r, leg), a) in t.track.records.iter().zip(&t.legs).zip(&t.anomalies) {
                out.write_record([
                    r.mmsi.to_string(),
                    r.time.to_string(),
                    t.lane.to_string(),
                    leg.to_string(),
                    a.map_or("", AnomalyKind::name).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

struct LanePath {
    vertices: Vec<LocalPoint>,
    /// Arc length at each vertex.
    cumulative: Vec<f64>,
}

impl LanePath {
    fn new(vertices: Vec<LocalPoint>) -> Result<Self> {
        let mut cumulative = vec![0.0];
        for w in vertices.windows(2) {
            let d = w[0].distance(w[1]);
            if d == 0.0 {
                return Err(Error::DegenerateSegment);
            }
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Ok(Self { vertices, cumulative })
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position, leg index and unit direction at arc length `s`.
    fn at(&self, s: f64) -> (LocalPoint, usize, LocalPoint) {
        let legs = self.vertices.len() - 1;
        let leg = (0..legs).find(|&i| s < self.cumulative[i + 1]).unwrap_or(legs - 1);
        let a = self.vertices[leg];
        let ab = self.vertices[leg + 1] - a;
        let len = self.cumulative[leg + 1] - self.cumulative[leg];
        let t = ((s - self.cumulative[leg]) / len).clamp(0.0, 1.0);
        (a + ab * t, leg, ab * (1.0 / len))
    }
}

fn right_normal(dir: LocalPoint) -> LocalPoint {
    LocalPoint::new(dir.y, -dir.x)
}

fn heading_vector(cog_deg: f64) -> LocalPoint {
    let r = cog_deg.to_radians();
    LocalPoint::new(r.sin(), r.cos())
}

fn gaussian(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))
}

/// Generates every lane's traffic. Lane `i` draws from stream `lanes[i].seed`
/// of a generator seeded with `seed`, so lanes are independent of each other.
pub fn generate_world(spec: &WorldSpec, seed: u64) -> Result<World> {
    spec.validate()?;
    let projection = Projection::new(spec.projection_ref)?;
    let mut tracks = Vec::new();
    let mut mmsi = spec.mmsi_base;
    for (lane_id, lane) in spec.lanes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(lane.seed);
        let vertices = lane
            .polyline
            .iter()
            .map(|&p| projection.project(p))
            .collect::<Result<Vec<_>>>()?;
        let path = LanePath::new(vertices)?;
        let noise = gaussian(lane.sigma)?;
        let cog_noise = gaussian(spec.cog_sigma_deg)?;
        let sog_noise = gaussian(spec.sog_sigma_knots)?;
        for k in 0..lane.count {
            let jitter = if spec.departure_spacing > 1 {
                rng.random_range(0..spec.departure_spacing / 2 + 1)
            } else {
                0
            };
            let t0 = spec.start_time + k as i64 * spec.departure_spacing + jitter;
            let nominal = lane.sog_knots * (1.0 + rng.random_range(-spec.speed_spread..=spec.speed_spread));
            // speed adjusted so the last sample lands exactly on the lane end
            let steps = (path.length() / (nominal * KNOT_MPS * spec.tau as f64)).ceil().max(1.0) as usize;
            let step_len = path.length() / steps as f64;
            let sog = step_len / spec.tau as f64 / KNOT_MPS;
            let mut records = Vec::with_capacity(steps + 1);
            let mut legs = Vec::with_capacity(steps + 1);
            for j in 0..=steps {
                let (on_lane, leg, dir) = path.at(j as f64 * step_len);
                let p = on_lane + right_normal(dir) * noise.sample(&mut rng);
                let g = projection.unproject(p);
                let course = bearing(LocalPoint::new(0.0, 0.0), dir)?;
                records.push(AisRecord {
                    mmsi,
                    time: t0 + j as i64 * spec.tau,
                    lon: g.lon,
                    lat: g.lat,
                    sog: (sog + sog_noise.sample(&mut rng)).max(0.0),
                    cog: normalize_degrees(course + cog_noise.sample(&mut rng)),
                    ship_type: 70,
                    nav_status: 0,
                });
                legs.push(leg);
            }
            let n = records.len();
            tracks.push(SynthTrack {
                track: VesselTrack::new(mmsi, records),
                lane: lane_id,
                legs,
                anomalies: vec![None; n],
            });
            mmsi += 1;
        }
    }
    Ok(World { projection, tracks })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InjectionKind {
    /// Lateral displacement to starboard, growing linearly over `ramp`
    /// records and then held to the end of the track.
    Offset { ramp: usize },
    /// Heading swept out by the magnitude and back over `duration` seconds;
    /// positions are dead-reckoned through the manoeuvre and the rest of the
    /// track is shifted to stay continuous.
    Turn { duration: i64, starboard: bool },
    /// Records after the start index are deleted so that the next report
    /// arrives at least `magnitude` seconds later.
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyInjection {
    pub kind: InjectionKind,
    /// Meters for offsets, degrees for turns, seconds for gaps.
    pub magnitude: f64,
    /// Index into the world's tracks.
    pub track: usize,
    pub start: usize,
}

/// Applies injections in order; indices refer to the track as left by the
/// previous injections. The input world is not modified.
pub fn inject(world: &World, injections: &[AnomalyInjection]) -> Result<World> {
    let mut out = world.clone();
    for (i, inj) in injections.iter().enumerate() {
        apply(&world.projection, &mut out.tracks, inj).map_err(|e| match e {
            Error::Injection(msg) => Error::Injection(format!("injection {i}: {msg}")),
            other => other,
        })?;
    }
    Ok(out)
}

fn apply(proj: &Projection, tracks: &mut [SynthTrack], inj: &AnomalyInjection) -> Result<()> {
    if !(inj.magnitude > 0.0) || !inj.magnitude.is_finite() {
        return Err(Error::Injection(format!("magnitude must be > 0, got {}", inj.magnitude)));
    }
    let n_tracks = tracks.len();
    let st = tracks
        .get_mut(inj.track)
        .ok_or_else(|| Error::Injection(format!("track {} does not exist ({n_tracks} tracks)", inj.track)))?;
    let len = st.track.records.len();
    let k = inj.start;
    if k >= len {
        return Err(Error::Injection(format!("start {k} is outside a track of {len} records")));
    }
    let mut pts = st.track.local_points(proj);
    match inj.kind {
        InjectionKind::Offset { ramp } => {
            for i in k..len {
                let f = if ramp == 0 { 1.0 } else { ((i - k) as f64 / ramp as f64).min(1.0) };
                let normal = right_normal(heading_vector(st.track.records[i].cog));
                pts[i] = pts[i] + normal * (inj.magnitude * f);
                if f > 0.0 {
                    st.anomalies[i] = Some(AnomalyKind::Offset);
                }
            }
        }
        InjectionKind::Turn { duration, starboard } => {
            if duration <= 0 {
                return Err(Error::Injection("turn duration must be > 0".into()));
            }
            let t0 = st.track.records[k].time;
            let end = st.track.records.iter().position(|r| r.time >= t0 + duration).ok_or_else(|| {
                Error::Injection(format!("turn of {duration} s from record {k} runs past the track end"))
            })?;
            let sign = if starboard { 1.0 } else { -1.0 };
            let recs = &mut st.track.records;
            let old_end = pts[end];
            for i in k..=end {
                let phase = (recs[i].time - t0) as f64 / duration as f64;
                let tri = 1.0 - (2.0 * phase - 1.0).abs();
                recs[i].cog = normalize_degrees(recs[i].cog + sign * inj.magnitude * tri);
                if i > k {
                    let dt = (recs[i].time - recs[i - 1].time) as f64;
                    pts[i] = pts[i - 1] + heading_vector(recs[i - 1].cog) * (recs[i - 1].sog * KNOT_MPS * dt);
                }
                if tri > 0.0 {
                    st.anomalies[i] = Some(AnomalyKind::Turn);
                }
            }
            let shift = pts[end] - old_end;
            for p in &mut pts[end + 1..] {
                *p = *p + shift;
            }
        }
        InjectionKind::Gap => {
            let tau = match (st.track.records.get(k), st.track.records.get(k + 1)) {
                (Some(a), Some(b)) => (b.time - a.time) as f64,
                _ => return Err(Error::Injection(format!("gap at record {k} has no following record"))),
            };
            let deleted = (inj.magnitude / tau).ceil() as usize - 1;
            if k + deleted + 1 >= len {
                return Err(Error::Injection(format!(
                    "gap of {} s from record {k} runs past the track end",
                    inj.magnitude
                )));
            }
            st.track.records.drain(k + 1..k + 1 + deleted);
            st.legs.drain(k + 1..k + 1 + deleted);
            st.anomalies.drain(k + 1..k + 1 + deleted);
            st.anomalies[k + 1] = Some(AnomalyKind::Gap);
            return Ok(());
        }
    }
    for (r, p) in st.track.records.iter_mut().zip(&pts) {
        let g = proj.unproject(*p);
        r.lon = g.lon;
        r.lat = g.lat;
    }
    Ok(())
}

/// Magnitude and extent ranges for randomly placed injections. Ranges are
/// inclusive and sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScatterKind {
    Offset { meters: (f64, f64), ramp: usize },
    Turn { degrees: (f64, f64), duration: (i64, i64) },
    Gap { seconds: (f64, f64) },
}

/// Places `per_track` injections on each listed track, one inside each of
/// `per_track` equal slices of the track so they never overlap. Gap
/// injections on one track are emitted last-first so earlier start indices
/// stay valid after deletion.
pub fn scatter_injections(
    world: &World,
    kind: ScatterKind,
    tracks: &[usize],
    per_track: usize,
    rng: &mut impl Rng,
) -> Result<Vec<AnomalyInjection>> {
    let mut out = Vec::new();
    for &ti in tracks {
        let st = world
            .tracks
            .get(ti)
            .ok_or_else(|| Error::Injection(format!("track {ti} does not exist")))?;
        let recs = &st.track.records;
        let n = recs.len();
        let slot = n / per_track.max(1);
        let tau = if n >= 2 { recs[1].time - recs[0].time } else { 1 };
        let mut placed = Vec::new();
        for k in 0..per_track {
            let lo = k * slot;
            let (inj_kind, magnitude, span) = match kind {
                ScatterKind::Offset { meters, ramp } => (InjectionKind::Offset { ramp }, rng.random_range(meters.0..=meters.1), 1),
                ScatterKind::Turn { degrees, duration } => {
                    let d = rng.random_range(duration.0..=duration.1);
                    (
                        InjectionKind::Turn {
                            duration: d,
                            starboard: rng.random_bool(0.5),
                        },
                        rng.random_range(degrees.0..=degrees.1),
                        (d / tau.max(1)) as usize + 2,
                    )
                }
                ScatterKind::Gap { seconds } => {
                    let g = rng.random_range(seconds.0..=seconds.1);
                    (InjectionKind::Gap, g, (g / tau.max(1) as f64).ceil() as usize + 2)
                }
            };
            if span >= slot {
                return Err(Error::Injection(format!(
                    "track {ti} has {n} records, too few for {per_track} injections of this size"
                )));
            }
            placed.push(AnomalyInjection {
                kind: inj_kind,
                magnitude,
                track: ti,
                start: lo + rng.random_range(0..slot - span),
            });
        }
        if matches!(kind, ScatterKind::Gap { .. }) {
            placed.reverse();
        }
        out.extend(placed);
    }
    Ok(out)
}
