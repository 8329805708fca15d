use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Point, Track};

const MAGIC: &[u8; 4] = b"SDF1";
const HEADER_LEN: usize = 4 + 4 + 4 + 3 * 8;
/// Grid padding around the track bounding box, in cells.
const MARGIN_CELLS: f64 = 8.0;
/// Queries further than this many cells outside the grid are rejected.
const MAX_EXTRAPOLATION_CELLS: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SdfError {
    #[error("resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("query ({x:.4}, {y:.4}) lies {distance:.4} m outside the distance field")]
    OutOfBounds { x: f64, y: f64, distance: f64 },
    #[error("malformed SDF cache: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Signed distances sampled on a regular grid; sample `(i, j)` sits at
/// `origin + (i, j)·resolution` and is stored at `j·width + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub distance: f64,
    pub gradient: Point,
    /// The point was outside the grid and the value was extended linearly.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleCostParams {
    /// Safety distance, meters.
    pub epsilon: f64,
    pub sigma_obs: f64,
}

impl Default for ObstacleCostParams {
    fn default() -> Self {
        Self {
            epsilon: 0.015,
            sigma_obs: 1e-4,
        }
    }
}

/// Hinge penalty `ε − d` for `d ≤ ε`, zero beyond the safety distance.
pub fn hinge_cost(distance: f64, epsilon: f64) -> f64 {
    if distance <= epsilon {
        epsilon - distance
    } else {
        0.0
    }
}

/// Exact signed Euclidean distance to the track boundaries at every grid
/// sample, positive inside the drivable region.
pub fn build_sdf(track: &Track, resolution: f64) -> Result<SdfGrid, SdfError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(SdfError::BadResolution(resolution));
    }
    let (lo, hi) = track.bounding_box();
    let margin = MARGIN_CELLS * resolution;
    let origin = [lo.x - margin, lo.y - margin];
    let width = ((hi.x - lo.x + 2.0 * margin) / resolution).ceil() as usize + 1;
    let height = ((hi.y - lo.y + 2.0 * margin) / resolution).ceil() as usize + 1;

    let rings = track.boundary_rings();
    let segments: Vec<(Point, Point)> = rings
        .iter()
        .flat_map(|r| (0..r.len()).map(move |i| (r[i], r[(i + 1) % r.len()])))
        .collect();
    let index = SegmentIndex::new(&segments, origin, width, height, resolution);

    let mut values = vec![0.0; width * height];
    let mut crossings = Vec::new();
    for j in 0..height {
        let y = origin[1] + j as f64 * resolution;
        crossings.clear();
        for &(a, b) in &segments {
            if (a.y > y) != (b.y > y) {
                crossings.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut next = 0;
        for i in 0..width {
            let x = origin[0] + i as f64 * resolution;
            while next < crossings.len() && crossings[next] <= x {
                next += 1;
            }
            // even-odd: an odd count of crossings to the right means inside
            let inside = (crossings.len() - next) % 2 == 1;
            let d = index.distance(&Point::new(x, y));
            values[j * width + i] = if inside { d } else { -d };
        }
    }
    Ok(SdfGrid {
        origin,
        resolution,
        width,
        height,
        values,
    })
}

pub(crate) fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Uniform bins of segment indices for nearest-segment search.
struct SegmentIndex<'a> {
    segments: &'a [(Point, Point)],
    origin: [f64; 2],
    bin: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl<'a> SegmentIndex<'a> {
    fn new(
        segments: &'a [(Point, Point)],
        origin: [f64; 2],
        width: usize,
        height: usize,
        resolution: f64,
    ) -> Self {
        let extent_x = width as f64 * resolution;
        let extent_y = height as f64 * resolution;
        let bin = (16.0 * resolution).max(extent_x.max(extent_y) / 256.0);
        let nx = (extent_x / bin).ceil() as usize + 1;
        let ny = (extent_y / bin).ceil() as usize + 1;
        let mut bins = vec![Vec::new(); nx * ny];
        for (k, (a, b)) in segments.iter().enumerate() {
            let (i0, j0) = Self::cell(origin, bin, nx, ny, &a.inf(b));
            let (i1, j1) = Self::cell(origin, bin, nx, ny, &a.sup(b));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(k as u32);
                }
            }
        }
        Self {
            segments,
            origin,
            bin,
            nx,
            ny,
            bins,
        }
    }

    fn cell(origin: [f64; 2], bin: f64, nx: usize, ny: usize, p: &Point) -> (usize, usize) {
        let i = ((p.x - origin[0]) / bin).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((p.y - origin[1]) / bin).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    }

    fn distance(&self, p: &Point) -> f64 {
        let (ci, cj) = Self::cell(self.origin, self.bin, self.nx, self.ny, p);
        let mut best = f64::INFINITY;
        let max_ring = self.nx.max(self.ny);
        for r in 0..=max_ring {
            let (r_i, ci_i, cj_i) = (r as isize, ci as isize, cj as isize);
            for j in (cj_i - r_i)..=(cj_i + r_i) {
                if j < 0 || j >= self.ny as isize {
                    continue;
                }
                let on_edge_row = j == cj_i - r_i || j == cj_i + r_i;
                let step = if on_edge_row { 1 } else { (2 * r_i).max(1) };
                let mut i = ci_i - r_i;
                while i <= ci_i + r_i {
                    if i >= 0 && i < self.nx as isize {
                        for &k in &self.bins[j as usize * self.nx + i as usize] {
                            let (a, b) = &self.segments[k as usize];
                            best = best.min(point_segment_distance(p, a, b));
                        }
                    }
                    i += step;
                }
            }
            if best <= r as f64 * self.bin {
                break;
            }
        }
        best
    }
}

impl SdfGrid {
    pub fn extent(&self) -> (Point, Point) {
        let lo = Point::new(self.origin[0], self.origin[1]);
        let hi = lo
            + Point::new(
                (self.width - 1) as f64 * self.resolution,
                (self.height - 1) as f64 * self.resolution,
            );
        (lo, hi)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    /// Bilinear distance and the exact gradient of the bilinear patch.
    pub fn query(&self, p: &Point) -> Result<SdfSample, SdfError> {
        let (lo, hi) = self.extent();
        let clamped = p.sup(&lo).inf(&hi);
        let outside = (p - clamped).norm();
        if outside > MAX_EXTRAPOLATION_CELLS * self.resolution || !outside.is_finite() {
            return Err(SdfError::OutOfBounds {
                x: p.x,
                y: p.y,
                distance: outside,
            });
        }
        let fx = (clamped.x - self.origin[0]) / self.resolution;
        let fy = (clamped.y - self.origin[1]) / self.resolution;
        let i = (fx.floor() as usize).min(self.width - 2);
        let j = (fy.floor() as usize).min(self.height - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let v00 = self.value(i, j);
        let v10 = self.value(i + 1, j);
        let v01 = self.value(i, j + 1);
        let v11 = self.value(i + 1, j + 1);
        let mut distance = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
        let mut gradient = Point::new(
            ((1.0 - ty) * (v10 - v00) + ty * (v11 - v01)) / self.resolution,
            ((1.0 - tx) * (v01 - v00) + tx * (v11 - v10)) / self.resolution,
        );
        if outside > 0.0 {
            let dir = (p - clamped) / outside;
            distance -= outside;
            // clamped axes no longer see the patch; they follow the extension
            if p.x != clamped.x {
                gradient.x = -dir.x;
            }
            if p.y != clamped.y {
                gradient.y = -dir.y;
            }
        }
        Ok(SdfSample {
            distance,
            gradient,
            extrapolated: outside > 0.0,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&self.origin[0].to_le_bytes());
        out.extend_from_slice(&self.origin[1].to_le_bytes());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SdfError> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(SdfError::Format("missing SDF1 header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let width = u32_at(4);
        let height = u32_at(8);
        let origin = [f64_at(12), f64_at(20)];
        let resolution = f64_at(28);
        if width < 2 || height < 2 {
            return Err(SdfError::Format(format!("grid {width}x{height} too small")));
        }
        if !(resolution > 0.0) || !origin.iter().all(|v| v.is_finite()) {
            return Err(SdfError::Format("invalid origin or resolution".into()));
        }
        let expected = HEADER_LEN + 8 * width * height;
        if bytes.len() != expected {
            return Err(SdfError::Format(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SdfError::Format("non-finite distance".into()));
        }
        Ok(Self {
            origin,
            resolution,
            width,
            height,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SdfError> {
        fs::write(path, self.to_bytes()).map_err(|source| SdfError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SdfError> {
        let bytes = fs::read(path).map_err(|source| SdfError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
