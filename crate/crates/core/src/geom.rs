//! Planar geometry shared by the segmentation and labeling stages.
//!
//! Rings are accepted either open or closed (last vertex repeating the first);
//! every routine here strips the closing duplicate before working.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn of(points: &[Point2]) -> Option<BBox> {
        let first = points.first()?;
        let mut b = BBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in &points[1..] {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains_point(&self, p: Point2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn contains(&self, o: &BBox) -> bool {
        o.min_x >= self.min_x && o.max_x <= self.max_x && o.min_y >= self.min_y && o.max_y <= self.max_y
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min_x <= o.max_x && o.min_x <= self.max_x && self.min_y <= o.max_y && o.min_y <= self.max_y
    }
}

/// Drops the closing vertex of a ring if present.
pub fn open_ring(ring: &[Point2]) -> &[Point2] {
    match ring {
        [first, .., last] if ring.len() > 1 && first == last => &ring[..ring.len() - 1],
        _ => ring,
    }
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point2]) -> f64 {
    let r = open_ring(ring);
    if r.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut prev = r[r.len() - 1];
    for &p in r {
        acc += prev.x * p.y - p.x * prev.y;
        prev = p;
    }
    0.5 * acc
}

pub fn polygon_area(ring: &[Point2]) -> f64 {
    signed_area(ring).abs()
}

pub fn perimeter(ring: &[Point2]) -> f64 {
    let r = open_ring(ring);
    if r.len() < 2 {
        return 0.0;
    }
    let mut prev = r[r.len() - 1];
    r.iter()
        .map(|&p| {
            let d = p.dist(prev);
            prev = p;
            d
        })
        .sum()
}

/// Even-odd point-in-polygon test. Points exactly on an edge may land on
/// either side.
pub fn point_in_polygon(p: Point2, ring: &[Point2]) -> bool {
    let r = open_ring(ring);
    let n = r.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (r[i], r[j]);
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

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    b.sub(a).cross(c.sub(a))
}

/// Monotone-chain convex hull, counter-clockwise, without collinear points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Sutherland-Hodgman clip of an arbitrary simple `subject` ring against a
/// convex counter-clockwise `clip` ring. The result may contain degenerate
/// zero-width bridges for non-convex subjects; its shoelace area is still the
/// area of the intersection.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let clip = open_ring(clip);
    let mut output: Vec<Point2> = open_ring(subject).to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let edge = b.sub(a);
        let side = |p: Point2| edge.cross(p.sub(a));
        let input = std::mem::take(&mut output);
        let mut prev = input[input.len() - 1];
        let mut prev_side = side(prev);
        for &cur in &input {
            let cur_side = side(cur);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    output.push(intersect_param(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_side >= 0.0 {
                output.push(intersect_param(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output
}

fn intersect_param(p: Point2, q: Point2, sp: f64, sq: f64) -> Point2 {
    let t = sp / (sp - sq);
    p.add(q.sub(p).scale(t))
}

/// Area of the intersection of a simple ring with a convex counter-clockwise
/// ring.
pub fn convex_intersection_area(subject: &[Point2], convex_ccw: &[Point2]) -> f64 {
    polygon_area(&clip_convex(subject, convex_ccw))
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// True when no two non-adjacent edges of the ring touch.
pub fn is_simple(ring: &[Point2]) -> bool {
    let r = open_ring(ring);
    let n = r.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (r[i], r[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(a, b, r[j], r[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(s: f64) -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(s, 0.0),
            Point2::new(s, s),
            Point2::new(0.0, s),
        ]
    }

    #[test]
    fn shoelace_orientation() {
        let mut sq = square(2.0);
        assert_eq!(signed_area(&sq), 4.0);
        sq.reverse();
        assert_eq!(signed_area(&sq), -4.0);
        sq.push(sq[0]);
        assert_eq!(polygon_area(&sq), 4.0);
        assert_eq!(perimeter(&sq), 8.0);
    }

    #[test]
    fn hull_drops_interior_and_collinear() {
        let mut pts = square(1.0);
        pts.push(Point2::new(0.5, 0.5));
        pts.push(Point2::new(0.5, 0.0));
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(signed_area(&h) > 0.0);
    }

    #[test]
    fn clip_half_overlap() {
        let a = square(2.0);
        let b: Vec<Point2> = square(2.0).iter().map(|p| Point2::new(p.x + 1.0, p.y)).collect();
        assert!((convex_intersection_area(&a, &b) - 2.0).abs() < 1e-12);
        let far: Vec<Point2> = square(1.0).iter().map(|p| Point2::new(p.x + 5.0, p.y)).collect();
        assert_eq!(convex_intersection_area(&a, &far), 0.0);
    }

    #[test]
    fn clip_nonconvex_subject() {
        // U shape: 3x3 square minus the 1x2 notch at the top middle.
        let u = vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.0, 3.0),
            Point2::new(2.0, 3.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 3.0),
            Point2::new(0.0, 3.0),
        ];
        assert_eq!(polygon_area(&u), 7.0);
        let band = vec![
            Point2::new(-1.0, 2.0),
            Point2::new(4.0, 2.0),
            Point2::new(4.0, 4.0),
            Point2::new(-1.0, 4.0),
        ];
        assert!((convex_intersection_area(&u, &band) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pip_and_simplicity() {
        let sq = square(1.0);
        assert!(point_in_polygon(Point2::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(Point2::new(1.5, 0.5), &sq));
        assert!(is_simple(&sq));
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(!is_simple(&bowtie));
    }
}
