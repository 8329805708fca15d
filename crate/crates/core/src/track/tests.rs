use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn brute_distance(track: &Track, p: &Point) -> f64 {
    track
        .boundary_rings()
        .iter()
        .flat_map(|r| (0..r.len()).map(move |i| (r[i], r[(i + 1) % r.len()])))
        .map(|(a, b)| sdf::point_segment_distance(p, &a, &b))
        .fold(f64::INFINITY, f64::min)
}

fn annulus_distance(p: &Point, r_in: f64, r_out: f64) -> f64 {
    let r = p.norm();
    (r - r_in).min(r_out - r)
}

#[test]
fn ring_is_closed_and_uniform() {
    let t = ring(1.0, 1.4, 0.01).unwrap();
    assert!(t.closed);
    let expected = 2.0 * PI * 1.2;
    assert!((t.length() - expected).abs() / expected < 5e-3);
    assert_eq!(t.len(), (expected / 0.01).round() as usize);
    let segs = t.segment_lengths();
    let mean = t.length() / segs.len() as f64;
    for s in &segs {
        assert!((s - mean).abs() / mean < 0.01);
    }
    // wrap-around segment included
    assert_eq!(segs.len(), t.len());
}

#[test]
fn resampling_preserves_length() {
    // irregular waypoints on a stadium
    let dense = oval(2.0, 0.6, 0.4, 0.001).unwrap();
    let pts: Vec<Point> = dense.centerline.iter().step_by(37).copied().collect();
    let w = vec![0.2; pts.len()];
    let coarse = Track::from_centerline(&pts, &w, &w, true, 0.02).unwrap();
    let raw: f64 = (0..pts.len()).map(|i| (pts[(i + 1) % pts.len()] - pts[i]).norm()).sum();
    assert!((coarse.length() - raw).abs() / raw < 5e-3);
    let segs = coarse.segment_lengths();
    let mean = coarse.length() / segs.len() as f64;
    assert!(segs.iter().all(|s| (s - mean).abs() / mean < 0.01));
}

#[test]
fn duplicate_waypoint_rejected() {
    let pts = vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(1.0, 1.0),
    ];
    let w = vec![0.1; 4];
    assert!(matches!(
        Track::from_centerline(&pts, &w, &w, false, 0.05),
        Err(TrackError::DuplicateWaypoint(2))
    ));
}

#[test]
fn too_few_waypoints_rejected() {
    let pts = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
    let w = vec![0.1; 2];
    assert!(matches!(
        Track::from_centerline(&pts, &w, &w, false, 0.05),
        Err(TrackError::TooFewWaypoints(2))
    ));
}

#[test]
fn crossing_boundaries_rejected() {
    // hairpin tighter than the half-width folds the inner boundary
    let mut pts: Vec<Point> = (0..=20).map(|k| Point::new(0.1 * k as f64, 0.0)).collect();
    for k in 1..20 {
        let a = -PI / 2.0 + PI * k as f64 / 20.0;
        pts.push(Point::new(2.0 + 0.15 * a.cos(), 0.15 + 0.15 * a.sin()));
    }
    pts.extend((0..=20).map(|k| Point::new(2.0 - 0.1 * k as f64, 0.3)));
    let w = vec![0.2; pts.len()];
    assert!(Track::from_centerline(&pts, &w, &w, false, 0.02).is_err());
}

#[test]
fn schema_a_round_trip() {
    let t = chicane(0.02).unwrap();
    let mut buf = Vec::new();
    write_track(&t, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with('#'));
    let back = parse_track(&text, 0.02, None).unwrap();
    assert!(back.closed);
    assert!((back.length() - t.length()).abs() / t.length() < 5e-3);
    assert_eq!(back.len(), t.len());
}

#[test]
fn schema_a_errors_report_line() {
    let text = "# comment\nx_c,y_c,w_left,w_right\n0,0,0.2,0.2\n1,0,abc,0.2\n";
    match parse_track(text, 0.05, None) {
        Err(TrackError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        parse_track("x,y\n0,0\n", 0.05, None),
        Err(TrackError::Parse { line: 1, .. })
    ));
}

#[test]
fn schema_b_parse() {
    let mut left = String::from("# left\nx_l,y_l\n");
    let mut right = String::from("x_r,y_r\n");
    for k in 0..=50 {
        let x = k as f64 * 0.1;
        left.push_str(&format!("{x},0.2\n"));
        right.push_str(&format!("{x},-0.2\n"));
    }
    let t = parse_track_boundaries(&left, &right, 0.05, None).unwrap();
    assert!(!t.closed);
    assert!((t.length() - 5.0).abs() < 1e-9);
    assert!(t.contains(&Point::new(2.5, 0.1)));
    assert!(!t.contains(&Point::new(2.5, 0.3)));
    assert!(t.centerline.iter().all(|c| c.y.abs() < 1e-12));
}

#[test]
fn closure_inferred_from_endpoints() {
    let ring_text = {
        let t = ring(1.0, 1.4, 0.05).unwrap();
        let mut buf = Vec::new();
        write_track(&t, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    assert!(parse_track(&ring_text, 0.05, None).unwrap().closed);
    assert!(!parse_track(&ring_text, 0.05, Some(false)).unwrap().closed);
}

#[test]
fn projection_on_ring() {
    let t = ring(1.0, 1.4, 0.01).unwrap();
    let p = Point::new(0.0, 1.3);
    let proj = t.project(&p);
    // a quarter of the loop, left of a counter-clockwise lap is inward
    assert!((proj.s - t.length() / 4.0).abs() < 0.01);
    assert!((proj.lateral + 0.1).abs() < 1e-3);
    let near = t.project_near(&p, proj.s + 0.05, 0.3);
    assert!((near.s - proj.s).abs() < 1e-12);
}

#[test]
fn point_and_heading_wrap() {
    let t = ring(1.0, 1.4, 0.01).unwrap();
    let a = t.point_at(0.3);
    let b = t.point_at(0.3 + t.length());
    assert!((a - b).norm() < 1e-12);
    assert!((t.heading_at(0.0) - PI / 2.0).abs() < 0.01);
    let s = straight(10.0, 0.4, 0.05).unwrap();
    assert!((s.point_at(20.0) - Point::new(10.0, 0.0)).norm() < 1e-9);
}

#[test]
fn generators_build() {
    for kind in [TrackKind::Ring, TrackKind::Oval, TrackKind::Chicane, TrackKind::Straight] {
        let t = kind.build(0.02).unwrap();
        assert_eq!(kind.to_string().parse::<TrackKind>().unwrap(), kind);
        assert!(t.contains(&t.centerline[t.len() / 2]));
    }
    let c = chicane(0.02).unwrap();
    assert!((c.length() - 10.6).abs() < 0.2, "length {}", c.length());
}

#[test]
fn annulus_sdf_matches_analytic() {
    let t = ring(1.0, 1.4, 0.01).unwrap();
    let res = 0.005;
    let grid = build_sdf(&t, res).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        // inside the grid, which extends eight cells past the outer wall
        let r = rng.random_range(0.8..1.43);
        let a = rng.random_range(0.0..2.0 * PI);
        let p = Point::new(r * a.cos(), r * a.sin());
        let d = grid.query(&p).unwrap().distance;
        let exact = annulus_distance(&p, 1.0, 1.4);
        assert!((d - exact).abs() <= res / 2.0, "r={r} d={d} exact={exact}");
    }
}

#[test]
fn sdf_samples_match_brute_force() {
    let t = chicane(0.02).unwrap();
    let grid = build_sdf(&t, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let i = rng.random_range(0..grid.width);
        let j = rng.random_range(0..grid.height);
        let p = Point::new(
            grid.origin[0] + i as f64 * grid.resolution,
            grid.origin[1] + j as f64 * grid.resolution,
        );
        let v = grid.value(i, j);
        assert!((v.abs() - brute_distance(&t, &p)).abs() < 1e-12);
        assert_eq!(v > 0.0, t.contains(&p), "sign at ({}, {})", p.x, p.y);
    }
}

#[test]
fn sdf_is_lipschitz() {
    let t = chicane(0.02).unwrap();
    let grid = build_sdf(&t, 0.01).unwrap();
    let r = grid.resolution;
    for j in 0..grid.height - 1 {
        for i in 0..grid.width - 1 {
            let v = grid.value(i, j);
            assert!((grid.value(i + 1, j) - v).abs() <= r * (1.0 + 1e-9));
            assert!((grid.value(i, j + 1) - v).abs() <= r * (1.0 + 1e-9));
        }
    }
}

#[test]
fn sdf_cell_centers_reproduce_samples() {
    let t = ring(1.0, 1.4, 0.02).unwrap();
    let grid = build_sdf(&t, 0.01).unwrap();
    for (i, j) in [(3, 5), (40, 100), (grid.width - 1, grid.height - 1), (0, 0)] {
        let p = Point::new(
            grid.origin[0] + i as f64 * grid.resolution,
            grid.origin[1] + j as f64 * grid.resolution,
        );
        let s = grid.query(&p).unwrap();
        assert!((s.distance - grid.value(i, j)).abs() < 1e-12);
        assert!(!s.extrapolated);
    }
}

#[test]
fn sdf_gradient_points_radially() {
    let t = ring(1.0, 1.4, 0.01).unwrap();
    let grid = build_sdf(&t, 0.005).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        // stay away from the medial circle and the boundaries
        let r = if rng.random_bool(0.5) {
            rng.random_range(1.03..1.17)
        } else {
            rng.random_range(1.23..1.37)
        };
        let a = rng.random_range(0.0..2.0 * PI);
        let p = Point::new(r * a.cos(), r * a.sin());
        let g = grid.query(&p).unwrap().gradient;
        let radial = p.normalize() * if r < 1.2 { 1.0 } else { -1.0 };
        let angle = g.normalize().dot(&radial).clamp(-1.0, 1.0).acos();
        assert!(angle < 5f64.to_radians(), "angle {} at r={r}", angle.to_degrees());
    }
}

#[test]
fn sdf_gradient_matches_finite_differences() {
    let t = chicane(0.02).unwrap();
    let grid = build_sdf(&t, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-7;
    for _ in 0..200 {
        let p = t.point_at(rng.random_range(0.0..t.length()))
            + Point::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let s = grid.query(&p).unwrap();
        let fx = (grid.query(&(p + Point::new(h, 0.0))).unwrap().distance
            - grid.query(&(p - Point::new(h, 0.0))).unwrap().distance)
            / (2.0 * h);
        let fy = (grid.query(&(p + Point::new(0.0, h))).unwrap().distance
            - grid.query(&(p - Point::new(0.0, h))).unwrap().distance)
            / (2.0 * h);
        // bilinear patches kink on cell edges, so allow either one-sided slope there
        let ok = (s.gradient.x - fx).abs() < 1e-5 && (s.gradient.y - fy).abs() < 1e-5;
        let fx_fwd = (grid.query(&(p + Point::new(h, 0.0))).unwrap().distance - s.distance) / h;
        let fy_fwd = (grid.query(&(p + Point::new(0.0, h))).unwrap().distance - s.distance) / h;
        let ok_fwd = (s.gradient.x - fx_fwd).abs() < 1e-5 && (s.gradient.y - fy_fwd).abs() < 1e-5;
        assert!(ok || ok_fwd, "grad {:?} vs ({fx}, {fy})", s.gradient);
    }
}

#[test]
fn sdf_extrapolates_then_rejects() {
    let t = ring(1.0, 1.4, 0.02).unwrap();
    let grid = build_sdf(&t, 0.01).unwrap();
    let (_, hi) = grid.extent();
    let edge = grid.query(&Point::new(hi.x, 0.0)).unwrap();
    let out = grid.query(&Point::new(hi.x + 0.1, 0.0)).unwrap();
    assert!(out.extrapolated);
    assert!((out.distance - (edge.distance - 0.1)).abs() < 1e-9);
    assert!((out.gradient.x + 1.0).abs() < 1e-12);
    assert!(matches!(
        grid.query(&Point::new(hi.x + 5.0, 0.0)),
        Err(SdfError::OutOfBounds { .. })
    ));
}

#[test]
fn sdf_binary_round_trip() {
    let t = oval(2.0, 0.6, 0.4, 0.02).unwrap();
    let grid = build_sdf(&t, 0.02).unwrap();
    let bytes = grid.to_bytes();
    assert_eq!(&bytes[..4], b"SDF1");
    assert_eq!(bytes.len(), 36 + 8 * grid.width * grid.height);
    let back = SdfGrid::from_bytes(&bytes).unwrap();
    assert_eq!(back, grid);
    // rebuilding is bit-identical
    assert_eq!(build_sdf(&t, 0.02).unwrap().to_bytes(), bytes);
    assert!(SdfGrid::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(SdfGrid::from_bytes(&bad).is_err());
}

#[test]
fn hinge_values() {
    let eps = 0.015;
    assert_eq!(hinge_cost(0.02, eps), 0.0);
    assert_eq!(hinge_cost(eps, eps), 0.0);
    assert!((hinge_cost(-0.01, eps) - 0.025).abs() < 1e-15);
}

#[test]
fn bad_resolution_rejected() {
    let t = ring(1.0, 1.4, 0.05).unwrap();
    assert!(matches!(build_sdf(&t, 0.0), Err(SdfError::BadResolution(_))));
    assert!(matches!(build_sdf(&t, f64::NAN), Err(SdfError::BadResolution(_))));
}
