use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, BBox, Point2};

/// Rotated rectangle. `angle` is the direction of the major side, in
/// `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mbb {
    pub center: Point2,
    pub len_major: f64,
    pub len_minor: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MbbMode {
    /// True minimum-area rotated rectangle.
    #[default]
    MinArea,
    /// Axis-aligned bounding box, kept for comparison runs.
    AxisAligned,
}

impl std::str::FromStr for MbbMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min_area" => Ok(MbbMode::MinArea),
            "axis_aligned" => Ok(MbbMode::AxisAligned),
            other => Err(Error::InvalidParameter(format!("unknown mbb mode {other:?}"))),
        }
    }
}

impl Mbb {
    pub fn area(&self) -> f64 {
        self.len_major * self.len_minor
    }

    pub fn circumference(&self) -> f64 {
        2.0 * (self.len_major + self.len_minor)
    }

    /// `len_minor / len_major`, in `(0, 1]`.
    pub fn aspect_ratio(&self) -> f64 {
        self.len_minor / self.len_major
    }

    /// Unit vectors along the major and minor sides.
    pub fn axes(&self) -> (Point2, Point2) {
        let u = Point2::new(self.angle.cos(), self.angle.sin());
        (u, Point2::new(-u.y, u.x))
    }

    /// Same rectangle with every side pushed outward by `margin`.
    pub fn widened(&self, margin: f64) -> Mbb {
        Mbb {
            len_major: self.len_major + 2.0 * margin,
            len_minor: self.len_minor + 2.0 * margin,
            ..*self
        }
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Point2; 4] {
        let (u, v) = self.axes();
        let a = u.scale(self.len_major / 2.0);
        let b = v.scale(self.len_minor / 2.0);
        let c = self.center;
        [
            c.sub(a).sub(b),
            c.add(a).sub(b),
            c.add(a).add(b),
            c.sub(a).add(b),
        ]
    }

    /// Closed five-point ring.
    pub fn ring(&self) -> Vec<Point2> {
        let c = self.corners();
        vec![c[0], c[1], c[2], c[3], c[0]]
    }

    pub fn contains(&self, p: Point2, slack: f64) -> bool {
        let (u, v) = self.axes();
        let d = p.sub(self.center);
        d.dot(u).abs() <= self.len_major / 2.0 + slack && d.dot(v).abs() <= self.len_minor / 2.0 + slack
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.corners()).expect("four corners")
    }

    fn from_extents(u: Point2, lo_u: f64, hi_u: f64, lo_v: f64, hi_v: f64) -> Mbb {
        let v = Point2::new(-u.y, u.x);
        let center = u.scale((lo_u + hi_u) / 2.0).add(v.scale((lo_v + hi_v) / 2.0));
        let (wu, wv) = (hi_u - lo_u, hi_v - lo_v);
        let (len_major, len_minor, dir) = if wu >= wv { (wu, wv, u) } else { (wv, wu, v) };
        let mut angle = dir.y.atan2(dir.x);
        if angle < 0.0 {
            angle += std::f64::consts::PI;
        }
        if angle >= std::f64::consts::PI - 1e-12 {
            angle = (angle - std::f64::consts::PI).max(0.0);
        }
        if len_major == len_minor && angle >= std::f64::consts::FRAC_PI_2 {
            angle -= std::f64::consts::FRAC_PI_2;
        }
        Mbb {
            center,
            len_major,
            len_minor,
            angle,
        }
    }
}

/// Minimum-area enclosing rectangle of a point set (rotating calipers over
/// the convex hull).
pub fn min_bounding_box(points: &[Point2], mode: MbbMode) -> Result<Mbb> {
    let pts = geom::open_ring(points);
    if pts.is_empty() {
        return Err(Error::Degenerate("no vertices".into()));
    }
    // Work relative to the first vertex to limit cancellation.
    let origin = pts[0];
    let local: Vec<Point2> = pts.iter().map(|p| p.sub(origin)).collect();
    let hull = geom::convex_hull(&local);
    if hull.len() < 3 || geom::signed_area(&hull) <= 0.0 {
        return Err(Error::Degenerate("collinear or repeated vertices".into()));
    }
    let mut mbb = match mode {
        MbbMode::AxisAligned => {
            let b = BBox::of(&hull).expect("hull non-empty");
            Mbb::from_extents(Point2::new(1.0, 0.0), b.min_x, b.max_x, b.min_y, b.max_y)
        }
        MbbMode::MinArea => calipers(&hull),
    };
    mbb.center = mbb.center.add(origin);
    Ok(mbb)
}

fn calipers(hull: &[Point2]) -> Mbb {
    let n = hull.len();
    let next = |i: usize| (i + 1) % n;
    let proj = |i: usize, d: Point2| hull[i].dot(d);

    let dir = |i: usize| {
        let e = hull[next(i)].sub(hull[i]);
        e.scale(1.0 / e.norm())
    };

    let u0 = dir(0);
    let v0 = Point2::new(-u0.y, u0.x);
    let argmax = |d: Point2| (0..n).max_by(|&a, &b| proj(a, d).total_cmp(&proj(b, d))).unwrap();
    let (mut i_max_u, mut i_max_v, mut i_min_u) = (argmax(u0), argmax(v0), argmax(u0.scale(-1.0)));

    let mut best: Option<(f64, Mbb)> = None;
    for i in 0..n {
        let u = dir(i);
        let v = Point2::new(-u.y, u.x);
        let neg_u = u.scale(-1.0);
        // Each extreme index only moves forward around the hull.
        for _ in 0..n {
            if proj(next(i_max_u), u) > proj(i_max_u, u) {
                i_max_u = next(i_max_u);
            } else {
                break;
            }
        }
        for _ in 0..n {
            if proj(next(i_max_v), v) > proj(i_max_v, v) {
                i_max_v = next(i_max_v);
            } else {
                break;
            }
        }
        for _ in 0..n {
            if proj(next(i_min_u), neg_u) > proj(i_min_u, neg_u) {
                i_min_u = next(i_min_u);
            } else {
                break;
            }
        }
        let lo_u = proj(i_min_u, u);
        let hi_u = proj(i_max_u, u);
        let lo_v = proj(i, v);
        let hi_v = proj(i_max_v, v);
        let area = (hi_u - lo_u) * (hi_v - lo_v);
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            best = Some((area, Mbb::from_extents(u, lo_u, hi_u, lo_v, hi_v)));
        }
    }
    best.expect("hull has edges").1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: f64, h: f64, angle: f64, c: Point2) -> Vec<Point2> {
        let (s, co) = angle.sin_cos();
        [(-w / 2.0, -h / 2.0), (w / 2.0, -h / 2.0), (w / 2.0, h / 2.0), (-w / 2.0, h / 2.0)]
            .iter()
            .map(|&(x, y)| Point2::new(c.x + x * co - y * s, c.y + x * s + y * co))
            .collect()
    }

    #[test]
    fn axis_aligned_rectangle() {
        let m = min_bounding_box(&rect(4.0, 2.0, 0.0, Point2::new(2.0, 1.0)), MbbMode::MinArea).unwrap();
        assert!((m.len_major - 4.0).abs() < 1e-12);
        assert!((m.len_minor - 2.0).abs() < 1e-12);
        assert!(m.angle.abs() < 1e-12);
        assert!((m.area() - 8.0).abs() < 1e-12);
        assert!((m.center.x - 2.0).abs() < 1e-12 && (m.center.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_rectangle() {
        let a = 30f64.to_radians();
        let m = min_bounding_box(&rect(4.0, 2.0, a, Point2::new(100.0, -50.0)), MbbMode::MinArea).unwrap();
        assert!((m.angle - a).abs() < 1e-6, "angle {}", m.angle.to_degrees());
        assert!((m.area() - 8.0).abs() < 1e-9);
        assert!((m.aspect_ratio() - 0.5).abs() < 1e-9);
        let aa = min_bounding_box(&rect(4.0, 2.0, a, Point2::new(100.0, -50.0)), MbbMode::AxisAligned).unwrap();
        assert!(aa.area() > m.area());
    }

    #[test]
    fn collinear_rejected() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)];
        assert!(matches!(min_bounding_box(&pts, MbbMode::MinArea), Err(Error::Degenerate(_))));
    }

    #[test]
    fn contains_and_widen() {
        let m = Mbb {
            center: Point2::new(0.0, 0.0),
            len_major: 4.0,
            len_minor: 2.0,
            angle: 0.0,
        };
        assert!(m.contains(Point2::new(2.0, 1.0), 1e-9));
        assert!(!m.contains(Point2::new(2.1, 0.0), 1e-9));
        let w = m.widened(5.0 / 3.0);
        assert!((w.len_major - m.len_major - 10.0 / 3.0).abs() < 1e-12);
        assert!((w.circumference() - (m.circumference() + 8.0 * 5.0 / 3.0)).abs() < 1e-12);
        assert!(geom::signed_area(&m.ring()) > 0.0);
    }
}
