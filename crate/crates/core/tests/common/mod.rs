//! Independent oracles and fixtures shared by integration tests.

#![allow(dead_code)]

use rand::Rng;
use ruinscan::geom::point_in_polygon;
use ruinscan::segment::Mbb;
use ruinscan::Point2;

/// Smallest enclosing-rectangle area over orientations `0, step, 2 step, ...`
/// below 90 degrees.
pub fn mbb_angle_sweep(points: &[Point2], step_deg: f64) -> f64 {
    let steps = (90.0 / step_deg).round() as usize;
    (0..steps)
        .map(|k| {
            let t = (k as f64 * step_deg).to_radians();
            let (s, c) = t.sin_cos();
            let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in points {
                let u = p.x * c + p.y * s;
                let v = -p.x * s + p.y * c;
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            (u1 - u0) * (v1 - v0)
        })
        .fold(f64::MAX, f64::min)
}

/// Area of `a ∩ b` by counting `cell`-sized squares whose centers lie in
/// both polygons.
pub fn raster_intersection_area(a: &[Point2], b: &[Point2], cell: f64) -> f64 {
    let bound = |r: &[Point2]| {
        r.iter().fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |(x0, y0, x1, y1), p| {
            (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y))
        })
    };
    let (ax0, ay0, ax1, ay1) = bound(a);
    let (bx0, by0, bx1, by1) = bound(b);
    let (x0, y0, x1, y1) = (ax0.max(bx0), ay0.max(by0), ax1.min(bx1), ay1.min(by1));
    if x0 >= x1 || y0 >= y1 {
        return 0.0;
    }
    let nx = ((x1 - x0) / cell).ceil() as usize;
    let ny = ((y1 - y0) / cell).ceil() as usize;
    let mut hits = 0usize;
    for j in 0..ny {
        let y = y0 + (j as f64 + 0.5) * cell;
        for i in 0..nx {
            let p = Point2::new(x0 + (i as f64 + 0.5) * cell, y);
            if point_in_polygon(p, a) && point_in_polygon(p, b) {
                hits += 1;
            }
        }
    }
    hits as f64 * cell * cell
}

/// Area of one polygon by the same cell count.
pub fn raster_area(ring: &[Point2], cell: f64) -> f64 {
    raster_intersection_area(ring, ring, cell)
}

/// Star-shaped simple polygon around `center`: `n >= 4` jittered angles
/// with random radii in `[r_min, r_max]`. Counter-clockwise.
pub fn star_polygon(rng: &mut impl Rng, center: Point2, n: usize, r_min: f64, r_max: f64) -> Vec<Point2> {
    assert!(n >= 4);
    let step = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|k| {
            let t = (k as f64 + rng.random_range(0.2..0.8)) * step;
            let r = rng.random_range(r_min..r_max);
            Point2::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect()
}

pub fn random_mbb(rng: &mut impl Rng, center: Point2) -> Mbb {
    let a: f64 = rng.random_range(1.0..10.0);
    let b: f64 = rng.random_range(1.0..10.0);
    Mbb {
        center,
        len_major: a.max(b),
        len_minor: a.min(b),
        angle: rng.random_range(0.0..std::f64::consts::PI),
    }
}

pub fn axis_mbb(x0: f64, y0: f64, x1: f64, y1: f64) -> Mbb {
    let (w, h) = (x1 - x0, y1 - y0);
    Mbb {
        center: Point2::new((x0 + x1) / 2.0, (y0 + y1) / 2.0),
        len_major: w.max(h),
        len_minor: w.min(h),
        angle: if w >= h { 0.0 } else { std::f64::consts::FRAC_PI_2 },
    }
}

pub fn rect_ring(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ]
}
