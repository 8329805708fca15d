//! Lap statistics: cumulative curvature, distance, speed and solve time.

use serde::{Deserialize, Serialize};

use crate::track::Point;
use crate::vehicle::VehicleState;

/// Inverse circumradius of the triangle `a, b, c`; `None` if two points coincide.
pub fn menger_curvature(a: &Point, b: &Point, c: &Point) -> Option<f64> {
    let ab = b - a;
    let bc = c - b;
    let ac = c - a;
    let denom = ab.norm() * bc.norm() * ac.norm();
    if ab.norm() == 0.0 || bc.norm() == 0.0 || ac.norm() == 0.0 {
        return None;
    }
    Some(2.0 * ab.perp(&bc).abs() / denom)
}

/// Sum of three-point curvatures over all interior samples. Triples with
/// repeated points are skipped.
pub fn cumulative_curvature(positions: &[Point]) -> f64 {
    let mut skipped = 0;
    let total = positions
        .windows(3)
        .filter_map(|w| {
            let k = menger_curvature(&w[0], &w[1], &w[2]);
            if k.is_none() {
                skipped += 1;
            }
            k
        })
        .sum();
    if skipped > 0 {
        log::warn!("cumulative curvature skipped {skipped} triples with repeated points");
    }
    total
}

pub fn path_length(positions: &[Point]) -> f64 {
    positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapMetrics {
    pub cumulative_curvature: f64,
    /// Meters.
    pub distance: f64,
    /// Planar speed statistics, m/s.
    pub mean_speed: f64,
    pub max_speed: f64,
    pub min_speed: f64,
    /// Per-step solve time statistics, milliseconds.
    pub mean_solve_ms: f64,
    pub median_solve_ms: f64,
    pub max_solve_ms: f64,
    pub min_solve_ms: f64,
}

fn stats(values: &[f64]) -> (f64, f64, f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    (mean, median, sorted[n - 1], sorted[0])
}

/// Metrics of a closed-loop trace; `solve_ms` holds one wall time per step.
pub fn lap_metrics(states: &[VehicleState], solve_ms: &[f64]) -> LapMetrics {
    let positions: Vec<Point> = states.iter().map(|s| s.position()).collect();
    let speeds: Vec<f64> = states.iter().map(|s| s.speed()).collect();
    let (mean_speed, _, max_speed, min_speed) = stats(&speeds);
    let (mean_solve_ms, median_solve_ms, max_solve_ms, min_solve_ms) = stats(solve_ms);
    LapMetrics {
        cumulative_curvature: cumulative_curvature(&positions),
        distance: path_length(&positions),
        mean_speed,
        max_speed,
        min_speed,
        mean_solve_ms,
        median_solve_ms,
        max_solve_ms,
        min_solve_ms,
    }
}
