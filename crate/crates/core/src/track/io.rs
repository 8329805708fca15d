//! Comma-separated track files.
//!
//! Schema A: header `x_c,y_c,w_left,w_right`, one centerline waypoint per
//! row with half-widths. Schema B: two files with headers `x_l,y_l` and
//! `x_r,y_r` holding paired boundary points. Lines starting with `#` are
//! comments. A track is treated as a loop when its last point sits within
//! three typical segment lengths of the first, unless `closed` overrides it.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Point, Track, TrackError};

fn read(path: &Path) -> Result<String, TrackError> {
    fs::read_to_string(path).map_err(|source| TrackError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_rows(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>, TrackError> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_header {
            if fields != header {
                return Err(TrackError::Parse {
                    line: i + 1,
                    message: format!("expected header `{}`, found `{line}`", header.join(",")),
                });
            }
            seen_header = true;
            continue;
        }
        if fields.len() != header.len() {
            return Err(TrackError::Parse {
                line: i + 1,
                message: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        let values = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| TrackError::Parse {
                    line: i + 1,
                    message: format!("invalid number `{f}`"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(values);
    }
    if !seen_header {
        return Err(TrackError::Parse {
            line: 1,
            message: format!("missing header `{}`", header.join(",")),
        });
    }
    Ok(rows)
}

fn infer_closed(points: &[Point]) -> bool {
    if points.len() < 3 {
        return false;
    }
    let mut seg: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    seg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = seg[seg.len() / 2];
    (points[0] - points[points.len() - 1]).norm() < 3.0 * median
}

/// Parses schema A text.
pub fn parse_track(text: &str, spacing: f64, closed: Option<bool>) -> Result<Track, TrackError> {
    let rows = parse_rows(text, &["x_c", "y_c", "w_left", "w_right"])?;
    let points: Vec<Point> = rows.iter().map(|r| Point::new(r[0], r[1])).collect();
    let wl: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let wr: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let closed = closed.unwrap_or_else(|| infer_closed(&points));
    Track::from_centerline(&points, &wl, &wr, closed, spacing)
}

/// Parses schema B text pair.
pub fn parse_track_boundaries(
    left: &str,
    right: &str,
    spacing: f64,
    closed: Option<bool>,
) -> Result<Track, TrackError> {
    let l: Vec<Point> = parse_rows(left, &["x_l", "y_l"])?
        .iter()
        .map(|r| Point::new(r[0], r[1]))
        .collect();
    let r: Vec<Point> = parse_rows(right, &["x_r", "y_r"])?
        .iter()
        .map(|r| Point::new(r[0], r[1]))
        .collect();
    let closed = closed.unwrap_or_else(|| infer_closed(&l));
    Track::from_boundaries(&l, &r, closed, spacing)
}

pub fn load_track(path: &Path, spacing: f64, closed: Option<bool>) -> Result<Track, TrackError> {
    parse_track(&read(path)?, spacing, closed)
}

pub fn load_track_boundaries(
    left: &Path,
    right: &Path,
    spacing: f64,
    closed: Option<bool>,
) -> Result<Track, TrackError> {
    parse_track_boundaries(&read(left)?, &read(right)?, spacing, closed)
}

/// Writes a track in schema A. Half-widths are measured to the boundary
/// points, so this is exact for tracks built from widths.
pub fn write_track(track: &Track, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# {} waypoints, {}", track.len(), if track.closed { "closed" } else { "open" })?;
    writeln!(out, "x_c,y_c,w_left,w_right")?;
    let paired = track.left_boundary.len() == track.len() && track.right_boundary.len() == track.len();
    for (i, c) in track.centerline.iter().enumerate() {
        let (wl, wr) = if paired {
            ((track.left_boundary[i] - c).norm(), (track.right_boundary[i] - c).norm())
        } else {
            let wl = track.left_boundary.iter().map(|b| (b - c).norm()).fold(f64::INFINITY, f64::min);
            let wr = track.right_boundary.iter().map(|b| (b - c).norm()).fold(f64::INFINITY, f64::min);
            (wl, wr)
        };
        writeln!(out, "{:.9},{:.9},{:.9},{:.9}", c.x, c.y, wl, wr)?;
    }
    Ok(())
}
