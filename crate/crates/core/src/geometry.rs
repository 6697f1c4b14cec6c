//! Planar geometry on a local equirectangular projection.
//!
//! All distance thresholds in the pipeline (RDP tolerance, DBSCAN radius,
//! association distance) are in meters, so tracks are projected once onto a
//! plane anchored at the region-of-interest center and everything downstream
//! works with [`LocalPoint`]s.

use std::ops::{Add, Mul, Sub};

use crate::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest absolute latitude accepted by the projection.
pub const MAX_PROJECTION_LAT: f64 = 85.0;

/// Variance added to both diagonal entries of a node covariance before
/// inversion, in m².
pub const COVARIANCE_REGULARIZATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !(-180.0..180.0).contains(&lon) {
            return Err(Error::InvalidCoordinate(format!("lon {lon} outside [-180, 180)")));
        }
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidCoordinate(format!("lat {lat} outside [-90, 90]")));
        }
        Ok(Self { lon, lat })
    }
}

/// Meters east (`x`) and north (`y`) of a projection reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }
}

impl Add for LocalPoint {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for LocalPoint {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for LocalPoint {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

/// Equirectangular projection anchored at a fixed reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    reference: GeoPoint,
    cos_ref: f64,
}

impl Projection {
    pub fn new(reference: GeoPoint) -> Result<Self> {
        check_projectable(reference)?;
        Ok(Self {
            reference,
            cos_ref: reference.lat.to_radians().cos(),
        })
    }

    pub fn reference(&self) -> GeoPoint {
        self.reference
    }

    pub fn project(&self, p: GeoPoint) -> Result<LocalPoint> {
        check_projectable(p)?;
        Ok(self.project_unchecked(p))
    }

    pub(crate) fn project_unchecked(&self, p: GeoPoint) -> LocalPoint {
        LocalPoint {
            x: EARTH_RADIUS_M * (p.lon - self.reference.lon).to_radians() * self.cos_ref,
            y: EARTH_RADIUS_M * (p.lat - self.reference.lat).to_radians(),
        }
    }

    pub fn unproject(&self, p: LocalPoint) -> GeoPoint {
        GeoPoint {
            lon: self.reference.lon + (p.x / (EARTH_RADIUS_M * self.cos_ref)).to_degrees(),
            lat: self.reference.lat + (p.y / EARTH_RADIUS_M).to_degrees(),
        }
    }
}

fn check_projectable(p: GeoPoint) -> Result<()> {
    if !p.lon.is_finite() || !p.lat.is_finite() || p.lat.abs() > MAX_PROJECTION_LAT {
        return Err(Error::InvalidCoordinate(format!(
            "({}, {}) cannot be projected (|lat| must be <= {MAX_PROJECTION_LAT})",
            p.lon, p.lat
        )));
    }
    Ok(())
}

/// Projects `p` onto the plane anchored at `reference`.
pub fn project(p: GeoPoint, reference: GeoPoint) -> Result<LocalPoint> {
    Projection::new(reference)?.project(p)
}

/// Symmetric 2×2 covariance in m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const IDENTITY: Cov2 = Cov2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn regularized(&self) -> Cov2 {
        Cov2 {
            xx: self.xx + COVARIANCE_REGULARIZATION,
            xy: self.xy,
            yy: self.yy + COVARIANCE_REGULARIZATION,
        }
    }

    /// Inverse as `(xx, xy, yy)` of the symmetric inverse matrix.
    pub fn inverse(&self) -> Result<Cov2> {
        let det = self.det();
        if !det.is_finite() || det <= f64::EPSILON * (self.xx.abs() + self.yy.abs()).powi(2) {
            return Err(Error::Numeric(format!(
                "singular covariance [{}, {}; {}, {}]",
                self.xx, self.xy, self.xy, self.yy
            )));
        }
        Ok(Cov2 {
            xx: self.yy / det,
            xy: -self.xy / det,
            yy: self.xx / det,
        })
    }

    /// Population covariance of `points` around `mean`.
    pub fn of_points(points: &[LocalPoint], mean: LocalPoint) -> Cov2 {
        let n = points.len().max(1) as f64;
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        for p in points {
            let d = *p - mean;
            xx += d.x * d.x;
            xy += d.x * d.y;
            yy += d.y * d.y;
        }
        Cov2 {
            xx: xx / n,
            xy: xy / n,
            yy: yy / n,
        }
    }
}

/// A node of the traffic graph: mean position and spread of a cluster of
/// turning points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidalGate {
    pub mean: LocalPoint,
    pub covariance: Cov2,
}

impl EllipsoidalGate {
    pub fn new(mean: LocalPoint, covariance: Cov2) -> Self {
        Self { mean, covariance }
    }

    /// Mean and covariance of a non-empty point set.
    pub fn from_points(points: &[LocalPoint]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let n = points.len() as f64;
        let sum = points.iter().fold(LocalPoint::default(), |acc, p| acc + *p);
        let mean = sum * (1.0 / n);
        Some(Self {
            mean,
            covariance: Cov2::of_points(points, mean),
        })
    }
}

/// Squared Mahalanobis distance `(p-μ)ᵀ Σ⁻¹ (p-μ)` with the gate covariance
/// regularized by [`COVARIANCE_REGULARIZATION`] on the diagonal.
pub fn mahalanobis_sq(p: LocalPoint, gate: &EllipsoidalGate) -> Result<f64> {
    let inv = gate.covariance.regularized().inverse()?;
    Ok(quadratic_form(p - gate.mean, &inv))
}

/// Squared Mahalanobis distance using the covariance exactly as given.
pub fn mahalanobis_sq_unregularized(p: LocalPoint, gate: &EllipsoidalGate) -> Result<f64> {
    let inv = gate.covariance.inverse()?;
    Ok(quadratic_form(p - gate.mean, &inv))
}

fn quadratic_form(d: LocalPoint, inv: &Cov2) -> f64 {
    (d.x * d.x * inv.xx + 2.0 * d.x * d.y * inv.xy + d.y * d.y * inv.yy).max(0.0)
}

/// Chi-square quantile with two degrees of freedom: `-2 ln(1 - p)`.
pub fn chi_square_2dof_quantile(probability: f64) -> f64 {
    -2.0 * (1.0 - probability).ln()
}

/// Distance from `p` to the segment `ab`, clamped to the nearer endpoint when
/// the orthogonal projection falls outside the segment.
pub fn perpendicular_distance(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> Result<f64> {
    let ab = b - a;
    let len_sq = ab.dot(ab);
    if len_sq == 0.0 {
        return Err(Error::DegenerateSegment);
    }
    Ok(segment_distance(p, a, ab, len_sq))
}

#[inline]
fn segment_distance(p: LocalPoint, a: LocalPoint, ab: LocalPoint, len_sq: f64) -> f64 {
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Compass bearing of `b` seen from `a`, degrees in `[0, 360)`.
pub fn bearing(a: LocalPoint, b: LocalPoint) -> Result<f64> {
    let d = b - a;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(Error::DegenerateSegment);
    }
    Ok(normalize_degrees(d.x.atan2(d.y).to_degrees()))
}

pub fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Absolute difference between two bearings folded to `[0, 180]`.
pub fn bearing_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Difference between two undirected line orientations, folded to `[0, 90]`.
pub fn axial_difference(a: f64, b: f64) -> f64 {
    let d = bearing_difference(a, b);
    if d > 90.0 {
        180.0 - d
    } else {
        d
    }
}

/// Ramer-Douglas-Peucker simplification.
///
/// Returns the strictly increasing indices of the retained vertices; the
/// first and last index are always kept. Uses an explicit stack, so deep
/// tracks do not recurse.
pub fn rdp_simplify(points: &[LocalPoint], epsilon: f64) -> Result<Vec<usize>> {
    if points.len() < 2 {
        return Err(Error::EmptyTrack(points.len()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Config(format!("rdp epsilon must be >= 0, got {epsilon}")));
    }
    let last = points.len() - 1;
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[last] = true;

    let mut stack = vec![(0usize, last)];
    while let Some((start, end)) = stack.pop() {
        if end <= start + 1 {
            continue;
        }
        let a = points[start];
        let ab = points[end] - a;
        let len_sq = ab.dot(ab);
        let mut max_dist = -1.0;
        let mut max_idx = start;
        for (i, p) in points.iter().enumerate().take(end).skip(start + 1) {
            let d = if len_sq == 0.0 {
                p.distance(a)
            } else {
                segment_distance(*p, a, ab, len_sq)
            };
            if d > max_dist {
                max_dist = d;
                max_idx = i;
            }
        }
        if max_dist > epsilon {
            keep[max_idx] = true;
            stack.push((max_idx, end));
            stack.push((start, max_idx));
        }
    }
    Ok(keep
        .iter()
        .enumerate()
        .filter_map(|(i, k)| k.then_some(i))
        .collect())
}
