//! Synthetic 1:43-scale tracks.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Point, Track, TrackError};

const DENSE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Ring,
    Oval,
    Chicane,
    Straight,
}

impl TrackKind {
    /// Generator with the built-in dimensions.
    pub fn build(self, spacing: f64) -> Result<Track, TrackError> {
        match self {
            TrackKind::Ring => ring(1.0, 1.4, spacing),
            TrackKind::Oval => oval(2.0, 0.6, 0.4, spacing),
            TrackKind::Chicane => chicane(spacing),
            TrackKind::Straight => straight(10.0, 0.4, spacing),
        }
    }
}

impl fmt::Display for TrackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackKind::Ring => "ring",
            TrackKind::Oval => "oval",
            TrackKind::Chicane => "chicane",
            TrackKind::Straight => "straight",
        })
    }
}

impl FromStr for TrackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ring" => Ok(TrackKind::Ring),
            "oval" => Ok(TrackKind::Oval),
            "chicane" => Ok(TrackKind::Chicane),
            "straight" => Ok(TrackKind::Straight),
            other => Err(format!("unknown track generator `{other}`")),
        }
    }
}

/// Turtle-graphics centerline: straights and constant-radius arcs.
struct Turtle {
    pos: Point,
    heading: f64,
    points: Vec<Point>,
}

impl Turtle {
    fn new(pos: Point, heading: f64) -> Self {
        Self {
            pos,
            heading,
            points: vec![pos],
        }
    }

    fn straight(&mut self, length: f64) -> &mut Self {
        let n = (length / DENSE_STEP).ceil() as usize;
        let step = length / n as f64;
        for _ in 0..n {
            self.pos += Point::new(self.heading.cos(), self.heading.sin()) * step;
            self.points.push(self.pos);
        }
        self
    }

    /// Positive `angle` turns left.
    fn arc(&mut self, radius: f64, angle: f64) -> &mut Self {
        let length = radius * angle.abs();
        let n = (length / DENSE_STEP).ceil() as usize;
        let dh = angle / n as f64;
        let center = self.pos + Point::new(-self.heading.sin(), self.heading.cos()) * radius * angle.signum();
        let start = self.heading;
        for k in 1..=n {
            let h = start + dh * k as f64;
            let offset = Point::new(h.sin(), -h.cos()) * radius * angle.signum();
            self.pos = center + offset;
            self.points.push(self.pos);
        }
        self.heading = start + angle;
        self
    }

    fn closed_loop(mut self) -> Vec<Point> {
        // the last point coincides with the first
        self.points.pop();
        self.points
    }
}

/// Counter-clockwise annulus between radii `r_inner` and `r_outer`, starting
/// at `(r_c, 0)` heading along +y.
pub fn ring(r_inner: f64, r_outer: f64, spacing: f64) -> Result<Track, TrackError> {
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(TrackError::Invalid("ring radii must satisfy 0 < r_inner < r_outer".into()));
    }
    let rc = 0.5 * (r_inner + r_outer);
    let half = 0.5 * (r_outer - r_inner);
    let n = ((2.0 * PI * rc) / DENSE_STEP).ceil() as usize;
    let points: Vec<Point> = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            Point::new(rc * a.cos(), rc * a.sin())
        })
        .collect();
    let w = vec![half; n];
    Track::from_centerline(&points, &w, &w, true, spacing)
}

/// Stadium: two straights joined by half circles, counter-clockwise.
pub fn oval(straight_len: f64, radius: f64, width: f64, spacing: f64) -> Result<Track, TrackError> {
    let mut t = Turtle::new(Point::zeros(), 0.0);
    t.straight(straight_len)
        .arc(radius, PI)
        .straight(straight_len)
        .arc(radius, PI);
    let points = t.closed_loop();
    let w = vec![0.5 * width; points.len()];
    Track::from_centerline(&points, &w, &w, true, spacing)
}

/// Loop with two hairpins and an S-shaped bump on the back straight that
/// swings 0.3 m outward. About 10.6 m long and 0.4 m wide.
pub fn chicane(spacing: f64) -> Result<Track, TrackError> {
    let hairpin = 0.7;
    let bump_radius = 0.3;
    let bump_angle = PI / 3.0;
    let main = 3.0;
    let bump_dx = 4.0 * bump_radius * bump_angle.sin();
    let lead = 0.5 * (main - bump_dx);
    let mut t = Turtle::new(Point::zeros(), 0.0);
    t.straight(main)
        .arc(hairpin, PI)
        .straight(lead)
        .arc(bump_radius, -bump_angle)
        .arc(bump_radius, 2.0 * bump_angle)
        .arc(bump_radius, -bump_angle)
        .straight(lead)
        .arc(hairpin, PI);
    let points = t.closed_loop();
    let w = vec![0.2; points.len()];
    Track::from_centerline(&points, &w, &w, true, spacing)
}

/// Open straight along +x.
pub fn straight(length: f64, width: f64, spacing: f64) -> Result<Track, TrackError> {
    let mut t = Turtle::new(Point::zeros(), 0.0);
    t.straight(length);
    let points = t.points;
    let w = vec![0.5 * width; points.len()];
    Track::from_centerline(&points, &w, &w, false, spacing)
}
