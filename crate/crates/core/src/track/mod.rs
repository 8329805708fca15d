//! Racetracks: centerline and boundary geometry, file loading, synthetic
//! generators and the signed distance field used by the obstacle factor.

mod generate;
mod io;
mod sdf;

pub use generate::{chicane, oval, ring, straight, TrackKind};
pub use io::{load_track, load_track_boundaries, parse_track, parse_track_boundaries, write_track};
pub use sdf::{build_sdf, hinge_cost, ObstacleCostParams, SdfError, SdfGrid, SdfSample};

use nalgebra::Vector2;
use thiserror::Error;

pub type Point = Vector2<f64>;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("track needs at least 3 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("duplicate consecutive waypoints at index {0}")]
    DuplicateWaypoint(usize),
    #[error("{boundary} boundary self-intersects between segments {a} and {b}")]
    SelfIntersection {
        boundary: &'static str,
        a: usize,
        b: usize,
    },
    #[error("left and right boundaries intersect (segments {a} and {b})")]
    BoundariesCross { a: usize, b: usize },
    #[error("invalid track: {0}")]
    Invalid(String),
}

/// Validated racetrack with a uniformly resampled centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub centerline: Vec<Point>,
    pub left_boundary: Vec<Point>,
    pub right_boundary: Vec<Point>,
    pub closed: bool,
    cumulative: Vec<f64>,
}

/// Nearest point on the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub lateral: f64,
    pub segment: usize,
    pub distance: f64,
}

impl Track {
    /// Builds a track from a centerline and half-widths to either side of
    /// the direction of travel, resampling to `spacing`.
    pub fn from_centerline(
        points: &[Point],
        w_left: &[f64],
        w_right: &[f64],
        closed: bool,
        spacing: f64,
    ) -> Result<Self, TrackError> {
        if points.len() != w_left.len() || points.len() != w_right.len() {
            return Err(TrackError::Invalid("width columns do not match points".into()));
        }
        check_raw_points(points, closed)?;
        if w_left.iter().chain(w_right).any(|w| !(*w > 0.0)) {
            return Err(TrackError::Invalid("half-widths must be positive".into()));
        }
        let samples: Vec<[f64; 4]> = points
            .iter()
            .zip(w_left.iter().zip(w_right))
            .map(|(p, (l, r))| [p.x, p.y, *l, *r])
            .collect();
        let res = resample(&samples, closed, spacing)?;
        let centerline: Vec<Point> = res.iter().map(|s| Point::new(s[0], s[1])).collect();
        let n = centerline.len();
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for i in 0..n {
            let t = vertex_tangent(&centerline, i, closed);
            let normal = Point::new(-t.y, t.x);
            left.push(centerline[i] + normal * res[i][2]);
            right.push(centerline[i] - normal * res[i][3]);
        }
        for i in 0..segment_count(n, closed) {
            let j = (i + 1) % n;
            let c = centerline[j] - centerline[i];
            for (side, b) in [("left", &left), ("right", &right)] {
                if (b[j] - b[i]).dot(&c) <= 0.0 {
                    return Err(TrackError::Invalid(format!(
                        "{side} boundary folds back at waypoint {i}; half-width exceeds the turn radius"
                    )));
                }
            }
        }
        Self::assemble(centerline, left, right, closed)
    }

    /// Builds a track from paired boundary points. The centerline is the
    /// resampled midpoint polyline; the boundaries are kept as given.
    pub fn from_boundaries(
        left: &[Point],
        right: &[Point],
        closed: bool,
        spacing: f64,
    ) -> Result<Self, TrackError> {
        if left.len() != right.len() {
            return Err(TrackError::Invalid(format!(
                "boundary files have {} and {} points",
                left.len(),
                right.len()
            )));
        }
        check_raw_points(left, closed)?;
        check_raw_points(right, closed)?;
        let mids: Vec<[f64; 4]> = left
            .iter()
            .zip(right)
            .map(|(l, r)| {
                let m = (l + r) * 0.5;
                [m.x, m.y, 0.0, 0.0]
            })
            .collect();
        let res = resample(&mids, closed, spacing)?;
        let centerline = res.iter().map(|s| Point::new(s[0], s[1])).collect();
        Self::assemble(centerline, left.to_vec(), right.to_vec(), closed)
    }

    fn assemble(
        centerline: Vec<Point>,
        left: Vec<Point>,
        right: Vec<Point>,
        closed: bool,
    ) -> Result<Self, TrackError> {
        if centerline.len() < 3 {
            return Err(TrackError::TooFewWaypoints(centerline.len()));
        }
        check_simple(&left, closed, "left")?;
        check_simple(&right, closed, "right")?;
        if let Some((a, b)) = first_crossing(&left, &right, closed) {
            return Err(TrackError::BoundariesCross { a, b });
        }
        let mut cumulative = vec![0.0];
        let segs = segment_count(centerline.len(), closed);
        for i in 0..segs {
            let next = (i + 1) % centerline.len();
            let len = (centerline[next] - centerline[i]).norm();
            cumulative.push(cumulative[i] + len);
        }
        Ok(Self {
            centerline,
            left_boundary: left,
            right_boundary: right,
            closed,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.centerline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centerline.is_empty()
    }

    /// Total centerline length, including the closing segment of a loop.
    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arc length at waypoint `i`.
    pub fn station(&self, i: usize) -> f64 {
        self.cumulative[i]
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.cumulative.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn normalize_s(&self, s: f64) -> f64 {
        let len = self.length();
        if self.closed {
            s.rem_euclid(len)
        } else {
            s.clamp(0.0, len)
        }
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let s = self.normalize_s(s);
        let segs = self.cumulative.len() - 1;
        let idx = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(segs - 1),
            Err(i) => i.saturating_sub(1).min(segs - 1),
        };
        let len = self.cumulative[idx + 1] - self.cumulative[idx];
        let t = if len > 0.0 {
            ((s - self.cumulative[idx]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (idx, t)
    }

    /// Centerline point at arc length `s` (wrapped on loops, clamped otherwise).
    pub fn point_at(&self, s: f64) -> Point {
        let (i, t) = self.segment_at(s);
        let a = self.centerline[i];
        let b = self.centerline[(i + 1) % self.len()];
        a + (b - a) * t
    }

    /// Unit tangent of the segment containing arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Point {
        let (i, _) = self.segment_at(s);
        let a = self.centerline[i];
        let b = self.centerline[(i + 1) % self.len()];
        (b - a).normalize()
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let t = self.tangent_at(s);
        t.y.atan2(t.x)
    }

    /// Global nearest centerline point. Ties go to the smallest segment index.
    pub fn project(&self, p: &Point) -> Projection {
        let segs = self.cumulative.len() - 1;
        self.project_segments(p, 0..segs)
    }

    /// Nearest centerline point among segments within `window` arc length of `hint`.
    pub fn project_near(&self, p: &Point, hint: f64, window: f64) -> Projection {
        let segs = self.cumulative.len() - 1;
        if window * 2.0 >= self.length() {
            return self.project(p);
        }
        let (center, _) = self.segment_at(hint);
        let mean_len = self.length() / segs as f64;
        let reach = (window / mean_len).ceil() as isize + 1;
        let ids = (-reach..=reach).filter_map(|o| {
            let i = center as isize + o;
            if self.closed {
                Some(i.rem_euclid(segs as isize) as usize)
            } else if (0..segs as isize).contains(&i) {
                Some(i as usize)
            } else {
                None
            }
        });
        let mut ids: Vec<usize> = ids.collect();
        ids.sort_unstable();
        ids.dedup();
        self.project_segments(p, ids.into_iter())
    }

    fn project_segments(&self, p: &Point, ids: impl Iterator<Item = usize>) -> Projection {
        let mut best: Option<Projection> = None;
        for i in ids {
            let a = self.centerline[i];
            let b = self.centerline[(i + 1) % self.len()];
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = if len2 > 0.0 {
                ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let foot = a + ab * t;
            let d = (p - foot).norm();
            if best.map_or(true, |b| d < b.distance) {
                let cross = ab.x * (p.y - a.y) - ab.y * (p.x - a.x);
                best = Some(Projection {
                    s: self.cumulative[i] + t * len2.sqrt(),
                    lateral: d.copysign(cross),
                    segment: i,
                    distance: d,
                });
            }
        }
        best.expect("track has segments")
    }

    /// Closed rings bounding the drivable region under the even-odd rule.
    pub fn boundary_rings(&self) -> Vec<Vec<Point>> {
        if self.closed {
            vec![self.left_boundary.clone(), self.right_boundary.clone()]
        } else {
            let mut ring = self.left_boundary.clone();
            ring.extend(self.right_boundary.iter().rev());
            vec![ring]
        }
    }

    /// Even-odd point-in-region test against [`Track::boundary_rings`].
    pub fn contains(&self, p: &Point) -> bool {
        self.boundary_rings()
            .iter()
            .fold(false, |inside, ring| inside ^ point_in_ring(ring, p))
    }

    /// Axis-aligned bounds of all boundary points: `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.left_boundary.iter().chain(&self.right_boundary) {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

pub(crate) fn point_in_ring(ring: &[Point], p: &Point) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segment_count(n: usize, closed: bool) -> usize {
    if closed {
        n
    } else {
        n - 1
    }
}

fn vertex_tangent(points: &[Point], i: usize, closed: bool) -> Point {
    let n = points.len();
    let (prev, next) = if closed {
        (points[(i + n - 1) % n], points[(i + 1) % n])
    } else {
        (points[i.saturating_sub(1)], points[(i + 1).min(n - 1)])
    };
    (next - prev).normalize()
}

fn check_raw_points(points: &[Point], closed: bool) -> Result<(), TrackError> {
    if points.len() < 3 {
        return Err(TrackError::TooFewWaypoints(points.len()));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(TrackError::Invalid("non-finite coordinate".into()));
    }
    for i in 1..points.len() {
        if (points[i] - points[i - 1]).norm() < 1e-9 {
            return Err(TrackError::DuplicateWaypoint(i));
        }
    }
    if closed && (points[0] - points[points.len() - 1]).norm() < 1e-9 {
        return Err(TrackError::DuplicateWaypoint(points.len() - 1));
    }
    Ok(())
}

/// Uniform arc-length resampling of `[x, y, a, b]` samples; the two extra
/// channels are interpolated linearly alongside the position.
fn resample(samples: &[[f64; 4]], closed: bool, spacing: f64) -> Result<Vec<[f64; 4]>, TrackError> {
    if !(spacing > 0.0) {
        return Err(TrackError::Invalid(format!("spacing must be positive, got {spacing}")));
    }
    let n = samples.len();
    let segs = segment_count(n, closed);
    let mut cum = vec![0.0];
    for i in 0..segs {
        let a = samples[i];
        let b = samples[(i + 1) % n];
        cum.push(cum[i] + (b[0] - a[0]).hypot(b[1] - a[1]));
    }
    let total = cum[segs];
    let count = ((total / spacing).round() as usize).max(if closed { 3 } else { 2 });
    let step = total / count as f64;
    let out_len = if closed { count } else { count + 1 };
    let mut out = Vec::with_capacity(out_len);
    let mut seg = 0;
    for k in 0..out_len {
        let s = (k as f64 * step).min(total);
        while seg + 1 < segs && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let a = samples[seg];
        let b = samples[(seg + 1) % n];
        out.push(std::array::from_fn(|c| a[c] + (b[c] - a[c]) * t));
    }
    if out.len() < 3 {
        return Err(TrackError::TooFewWaypoints(out.len()));
    }
    Ok(out)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let cross = |o: Point, a: Point, b: Point| (a - o).perp(&(b - o));
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d3 != 0.0
}

fn segments(points: &[Point], closed: bool) -> Vec<(Point, Point)> {
    let n = points.len();
    (0..segment_count(n, closed))
        .map(|i| (points[i], points[(i + 1) % n]))
        .collect()
}

fn check_simple(points: &[Point], closed: bool, boundary: &'static str) -> Result<(), TrackError> {
    let segs = segments(points, closed);
    let n = segs.len();
    for a in 0..n {
        for b in a + 2..n {
            if closed && a == 0 && b == n - 1 {
                continue;
            }
            if bbox_overlap(segs[a], segs[b])
                && segments_intersect(segs[a].0, segs[a].1, segs[b].0, segs[b].1)
            {
                return Err(TrackError::SelfIntersection { boundary, a, b });
            }
        }
    }
    Ok(())
}

fn first_crossing(left: &[Point], right: &[Point], closed: bool) -> Option<(usize, usize)> {
    let ls = segments(left, closed);
    let rs = segments(right, closed);
    for (a, sa) in ls.iter().enumerate() {
        for (b, sb) in rs.iter().enumerate() {
            if bbox_overlap(*sa, *sb) && segments_intersect(sa.0, sa.1, sb.0, sb.1) {
                return Some((a, b));
            }
        }
    }
    None
}

fn bbox_overlap(a: (Point, Point), b: (Point, Point)) -> bool {
    a.0.x.min(a.1.x) <= b.0.x.max(b.1.x)
        && b.0.x.min(b.1.x) <= a.0.x.max(a.1.x)
        && a.0.y.min(a.1.y) <= b.0.y.max(b.1.y)
        && b.0.y.min(b.1.y) <= a.0.y.max(a.1.y)
}

#[cfg(test)]
mod tests;
