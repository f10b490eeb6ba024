//! Outermost-contour reduction.
//!
//! A contour is dropped when one of its vertices lies inside another
//! contour. Level sets of one function at one level never cross, so a
//! single vertex decides containment. Candidates are visited in order of
//! decreasing bounding-box area: a container always has a bounding box at
//! least as large as what it contains, and containment is transitive, so
//! only already-kept contours need to be tested.

use super::Contour;
use crate::geom::{self, BBox, Point2};

/// Ring prepared for repeated point-in-polygon queries.
struct IndexedRing {
    verts: Vec<Point2>,
    bbox: BBox,
    bands: Option<Bands>,
}

/// Edges bucketed by horizontal band so a query only scans edges whose
/// y-extent covers the query point.
struct Bands {
    y0: f64,
    band_h: f64,
    edges: Vec<Vec<u32>>,
}

const BANDED_MIN_VERTS: usize = 64;

impl IndexedRing {
    fn new(contour: &Contour) -> Self {
        let verts = geom::open_ring(&contour.vertices).to_vec();
        let bbox = BBox::of(&verts).expect("contour has vertices");
        let bands = (verts.len() >= BANDED_MIN_VERTS && bbox.height() > 0.0).then(|| {
            let n_bands = (verts.len() as f64).sqrt().ceil() as usize;
            let band_h = bbox.height() / n_bands as f64;
            let mut edges = vec![Vec::new(); n_bands];
            let n = verts.len();
            for i in 0..n {
                let (a, b) = (verts[i], verts[(i + 1) % n]);
                let lo = ((a.y.min(b.y) - bbox.min_y) / band_h).floor().max(0.0) as usize;
                let hi = (((a.y.max(b.y) - bbox.min_y) / band_h).floor() as usize).min(n_bands - 1);
                for band in &mut edges[lo.min(n_bands - 1)..=hi] {
                    band.push(i as u32);
                }
            }
            Bands {
                y0: bbox.min_y,
                band_h,
                edges,
            }
        });
        Self { verts, bbox, bands }
    }

    fn contains(&self, p: Point2) -> bool {
        if !self.bbox.contains_point(p) {
            return false;
        }
        let Some(bands) = &self.bands else {
            return geom::point_in_polygon(p, &self.verts);
        };
        let band = (((p.y - bands.y0) / bands.band_h).floor().max(0.0) as usize).min(bands.edges.len() - 1);
        let n = self.verts.len();
        let mut inside = false;
        for &i in &bands.edges[band] {
            let (a, b) = (self.verts[i as usize], self.verts[(i as usize + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// Uniform grid over bounding boxes of kept contours.
struct BoxGrid {
    bounds: BBox,
    n: usize,
    cells: Vec<Vec<u32>>,
}

impl BoxGrid {
    fn new(bounds: BBox, n: usize) -> Self {
        Self {
            bounds,
            n,
            cells: vec![Vec::new(); n * n],
        }
    }

    fn cell_range(&self, lo: f64, hi: f64, min: f64, span: f64) -> (usize, usize) {
        let f = |v: f64| {
            if span <= 0.0 {
                0
            } else {
                (((v - min) / span * self.n as f64).floor().max(0.0) as usize).min(self.n - 1)
            }
        };
        (f(lo), f(hi))
    }

    fn insert(&mut self, id: u32, b: &BBox) {
        let (c0, c1) = self.cell_range(b.min_x, b.max_x, self.bounds.min_x, self.bounds.width());
        let (r0, r1) = self.cell_range(b.min_y, b.max_y, self.bounds.min_y, self.bounds.height());
        for r in r0..=r1 {
            for c in c0..=c1 {
                self.cells[r * self.n + c].push(id);
            }
        }
    }

    fn query(&self, p: Point2) -> &[u32] {
        let (c, _) = self.cell_range(p.x, p.x, self.bounds.min_x, self.bounds.width());
        let (r, _) = self.cell_range(p.y, p.y, self.bounds.min_y, self.bounds.height());
        &self.cells[r * self.n + c]
    }
}

/// Keeps the contours that are not contained in any other contour, in input
/// order, with `is_outer` set.
pub fn reduce_hierarchy(contours: Vec<Contour>) -> Vec<Contour> {
    if contours.is_empty() {
        return contours;
    }
    let boxes: Vec<BBox> = contours
        .iter()
        .map(|c| BBox::of(&c.vertices).expect("contour has vertices"))
        .collect();
    let union = boxes.iter().skip(1).fold(boxes[0], |a, b| BBox {
        min_x: a.min_x.min(b.min_x),
        min_y: a.min_y.min(b.min_y),
        max_x: a.max_x.max(b.max_x),
        max_y: a.max_y.max(b.max_y),
    });
    let mut order: Vec<usize> = (0..contours.len()).collect();
    order.sort_by(|&a, &b| boxes[b].area().total_cmp(&boxes[a].area()).then(a.cmp(&b)));

    let grid_n = ((contours.len() as f64).sqrt().ceil() as usize).clamp(1, 64);
    let mut grid = BoxGrid::new(union, grid_n);
    let mut kept: Vec<IndexedRing> = Vec::new();
    let mut keep = vec![false; contours.len()];
    for &i in &order {
        let probe = contours[i].vertices[0];
        let contained = grid
            .query(probe)
            .iter()
            .any(|&k| kept[k as usize].bbox.contains(&boxes[i]) && kept[k as usize].contains(probe));
        if !contained {
            keep[i] = true;
            grid.insert(kept.len() as u32, &boxes[i]);
            kept.push(IndexedRing::new(&contours[i]));
        }
    }
    contours
        .into_iter()
        .zip(keep)
        .filter_map(|(mut c, k)| {
            k.then(|| {
                c.is_outer = true;
                c
            })
        })
        .collect()
}
