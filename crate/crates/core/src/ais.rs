//! AIS report ingestion: CSV parsing, validity and region filtering,
//! per-vessel track assembly and fixed-cadence resampling.

use std::io::{Read, Write};

use crate::geometry::{GeoPoint, LocalPoint, Projection};
use crate::graph::EdgeLabel;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "mmsi",
    "timestamp",
    "lon",
    "lat",
    "sog",
    "cog",
    "shiptype",
    "navstatus",
];

/// Column appended by association output.
pub const EDGE_COLUMN: &str = "edge";

/// Speed-over-ground ceiling applied while parsing, in knots.
pub const DEFAULT_MAX_SOG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisRecord {
    pub mmsi: u64,
    /// Unix seconds.
    pub time: i64,
    pub lon: f64,
    pub lat: f64,
    /// Knots.
    pub sog: f64,
    /// Degrees in `[0, 360)`.
    pub cog: f64,
    pub ship_type: i32,
    pub nav_status: i32,
}

impl AisRecord {
    pub fn position(&self) -> GeoPoint {
        GeoPoint {
            lon: self.lon,
            lat: self.lat,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    /// 1-based line number in the input (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub total: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["line", "reason"])?;
        for r in &self.rejected {
            out.write_record([r.line.to_string(), r.reason.clone()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Keep only records reporting navigation status 0 (under way using engine).
    pub require_underway: bool,
    pub max_sog: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            require_underway: true,
            max_sog: DEFAULT_MAX_SOG,
        }
    }
}

/// Rectangular region of interest in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl Roi {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self> {
        if !(min_lon < max_lon && min_lat < max_lat) {
            return Err(Error::Config(format!(
                "roi min must be below max: ({min_lon}, {min_lat}) .. ({max_lon}, {max_lat})"
            )));
        }
        Ok(Self {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        })
    }

    /// Western Baltic box between Fehmarn and Rostock.
    pub fn western_baltic() -> Self {
        Self {
            min_lon: 11.5,
            min_lat: 54.2,
            max_lon: 12.5,
            max_lat: 54.5,
        }
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        (self.min_lon..=self.max_lon).contains(&lon) && (self.min_lat..=self.max_lat).contains(&lat)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: 0.5 * (self.min_lon + self.max_lon),
            lat: 0.5 * (self.min_lat + self.max_lat),
        }
    }

    pub fn projection(&self) -> Result<Projection> {
        Projection::new(self.center())
    }
}

fn check_header(headers: &csv::StringRecord, with_edge: bool) -> Result<()> {
    let mut expected: Vec<&str> = CSV_HEADER.to_vec();
    if with_edge {
        expected.push(EDGE_COLUMN);
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Ingest(format!(
            "unexpected header {:?}, expected {:?}",
            got.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, idx: usize, name: &str) -> Result<T, String> {
    row.get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing {name}"))?
        .parse()
        .map_err(|_| format!("malformed {name}"))
}

fn parse_row(row: &csv::StringRecord, opts: &IngestOptions) -> Result<AisRecord, String> {
    let rec = AisRecord {
        mmsi: field(row, 0, "mmsi")?,
        time: field(row, 1, "timestamp")?,
        lon: field(row, 2, "lon")?,
        lat: field(row, 3, "lat")?,
        sog: field(row, 4, "sog")?,
        cog: field(row, 5, "cog")?,
        ship_type: field(row, 6, "shiptype")?,
        nav_status: field(row, 7, "navstatus")?,
    };
    if !rec.lon.is_finite() || !(-180.0..180.0).contains(&rec.lon) {
        return Err("lon out of range".into());
    }
    if !rec.lat.is_finite() || !(-90.0..=90.0).contains(&rec.lat) {
        return Err("lat out of range".into());
    }
    if !rec.cog.is_finite() || !(0.0..360.0).contains(&rec.cog) {
        return Err("cog out of range".into());
    }
    if !rec.sog.is_finite() || rec.sog < 0.0 {
        return Err("sog out of range".into());
    }
    if rec.sog > opts.max_sog {
        return Err(format!("sog above {} knots", opts.max_sog));
    }
    if opts.require_underway && rec.nav_status != 0 {
        return Err("nav status filtered".into());
    }
    Ok(rec)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Parses AIS reports. Malformed or out-of-range rows are counted in the
/// report and skipped; only an unreadable stream or a wrong header is fatal.
pub fn parse_csv<R: Read>(input: R, opts: &IngestOptions) -> Result<(Vec<AisRecord>, IngestReport)> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Ingest(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Ingest("missing header".into()));
    }
    check_header(&headers, false)?;

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        let next_line = rdr.position().line();
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                let line = row.position().map_or(next_line, |p| p.line());
                report.total += 1;
                let parsed = if row.len() != CSV_HEADER.len() {
                    Err(format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()))
                } else {
                    parse_row(&row, opts)
                };
                match parsed {
                    Ok(rec) => records.push(rec),
                    Err(reason) => report.rejected.push(Rejection { line, reason }),
                }
            }
            Err(e) if e.is_io_error() => return Err(Error::Ingest(e.to_string())),
            Err(e) => {
                report.total += 1;
                report.rejected.push(Rejection {
                    line: e.position().map_or(next_line, |p| p.line()),
                    reason: format!("malformed row: {e}"),
                });
            }
        }
    }
    report.accepted = records.len();
    Ok((records, report))
}

pub fn write_csv<W: Write>(w: W, records: &[AisRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record(record_fields(r))?;
    }
    out.flush()?;
    Ok(())
}

fn record_fields(r: &AisRecord) -> [String; 8] {
    [
        r.mmsi.to_string(),
        r.time.to_string(),
        r.lon.to_string(),
        r.lat.to_string(),
        r.sog.to_string(),
        r.cog.to_string(),
        r.ship_type.to_string(),
        r.nav_status.to_string(),
    ]
}

/// Writes resampled, edge-labelled segments; outliers are written as `-1`.
pub fn write_labeled_csv<W: Write>(w: W, segments: &[TrackSegment]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = CSV_HEADER.to_vec();
    header.push(EDGE_COLUMN);
    out.write_record(&header)?;
    for seg in segments {
        for (i, r) in seg.records.iter().enumerate() {
            let edge = seg
                .edges
                .as_ref()
                .map_or(-1, |e| e[i].edge().map_or(-1, |id| id as i64));
            let mut row = record_fields(r).to_vec();
            row.push(edge.to_string());
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads the output of [`write_labeled_csv`]; rows must be valid.
pub fn read_labeled_csv<R: Read>(input: R) -> Result<Vec<(AisRecord, EdgeLabel)>> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, true)?;
    let opts = IngestOptions {
        require_underway: false,
        max_sog: f64::INFINITY,
    };
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let rec = parse_row(&row, &opts).map_err(|e| Error::Ingest(format!("row {}: {e}", i + 2)))?;
        let edge: i64 = field(&row, 8, EDGE_COLUMN).map_err(|e| Error::Ingest(format!("row {}: {e}", i + 2)))?;
        let label = if edge < 0 {
            EdgeLabel::Outlier
        } else {
            EdgeLabel::Edge(edge as usize)
        };
        out.push((rec, label));
    }
    Ok(out)
}

pub fn filter_roi(records: &[AisRecord], roi: &Roi) -> Vec<AisRecord> {
    records
        .iter()
        .filter(|r| roi.contains(r.lon, r.lat))
        .copied()
        .collect()
}

/// Time-ordered reports of one vessel.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselTrack {
    pub mmsi: u64,
    pub records: Vec<AisRecord>,
    pub edges: Option<Vec<EdgeLabel>>,
}

impl VesselTrack {
    pub fn new(mmsi: u64, records: Vec<AisRecord>) -> Self {
        Self {
            mmsi,
            records,
            edges: None,
        }
    }

    pub fn local_points(&self, proj: &Projection) -> Vec<LocalPoint> {
        self.records
            .iter()
            .map(|r| proj.project_unchecked(r.position()))
            .collect()
    }
}

/// Groups records per vessel, ordered by mmsi then time. Later records that
/// repeat a timestamp are dropped and counted in the returned total.
pub fn group_tracks(records: &[AisRecord]) -> (Vec<VesselTrack>, usize) {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.mmsi, r.time));
    let mut tracks: Vec<VesselTrack> = Vec::new();
    let mut duplicates = 0;
    for rec in sorted {
        match tracks.last_mut() {
            Some(t) if t.mmsi == rec.mmsi => {
                if t.records.last().is_some_and(|last| last.time == rec.time) {
                    duplicates += 1;
                } else {
                    t.records.push(rec);
                }
            }
            _ => tracks.push(VesselTrack::new(rec.mmsi, vec![rec])),
        }
    }
    (tracks, duplicates)
}

/// Contiguous resampled records at a fixed cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSegment {
    pub mmsi: u64,
    pub tau: i64,
    pub records: Vec<AisRecord>,
    pub edges: Option<Vec<EdgeLabel>>,
}

impl TrackSegment {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn local_points(&self, proj: &Projection) -> Vec<LocalPoint> {
        self.records
            .iter()
            .map(|r| proj.project_unchecked(r.position()))
            .collect()
    }
}

/// Interpolates a course on the circle along the shortest arc.
pub fn interpolate_cog(a: f64, b: f64, t: f64) -> f64 {
    let mut delta = (b - a).rem_euclid(360.0);
    if delta > 180.0 {
        delta -= 360.0;
    }
    crate::geometry::normalize_degrees(a + t * delta)
}

fn interpolate(a: &AisRecord, b: &AisRecord, time: i64) -> AisRecord {
    if time == a.time {
        return *a;
    }
    if time == b.time {
        return AisRecord { time, ..*b };
    }
    let t = (time - a.time) as f64 / (b.time - a.time) as f64;
    AisRecord {
        mmsi: a.mmsi,
        time,
        lon: a.lon + t * (b.lon - a.lon),
        lat: a.lat + t * (b.lat - a.lat),
        sog: (a.sog + t * (b.sog - a.sog)).max(0.0),
        cog: interpolate_cog(a.cog, b.cog, t),
        ship_type: a.ship_type,
        nav_status: a.nav_status,
    }
}

/// Splits a track on gaps longer than `max_gap` seconds and resamples every
/// piece onto a `tau`-second grid starting at its first report. Pieces with
/// fewer than two raw reports are dropped; the second return value counts
/// them.
pub fn split_and_resample(track: &VesselTrack, tau: i64, max_gap: i64) -> Result<(Vec<TrackSegment>, usize)> {
    if tau <= 0 {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    if track.records.windows(2).any(|w| w[1].time <= w[0].time) {
        return Err(Error::Ordering(format!(
            "track {} is not strictly time-ordered",
            track.mmsi
        )));
    }
    let mut segments = Vec::new();
    let mut dropped = 0;
    let mut start = 0;
    let n = track.records.len();
    for i in 1..=n {
        let boundary = i == n || track.records[i].time - track.records[i - 1].time > max_gap;
        if !boundary {
            continue;
        }
        let piece = &track.records[start..i];
        start = i;
        if piece.len() < 2 {
            dropped += 1;
            continue;
        }
        segments.push(TrackSegment {
            mmsi: track.mmsi,
            tau,
            records: resample_piece(piece, tau),
            edges: None,
        });
    }
    Ok((segments, dropped))
}

fn resample_piece(piece: &[AisRecord], tau: i64) -> Vec<AisRecord> {
    let t0 = piece[0].time;
    let t_end = piece[piece.len() - 1].time;
    let mut out = Vec::with_capacity(((t_end - t0) / tau + 1) as usize);
    let mut j = 0;
    let mut t = t0;
    while t <= t_end {
        while j + 2 < piece.len() && piece[j + 1].time <= t {
            j += 1;
        }
        let (a, b) = (&piece[j], &piece[j + 1]);
        out.push(interpolate(a, b, t.min(b.time)));
        t += tau;
    }
    out
}
