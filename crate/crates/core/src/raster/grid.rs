use rayon::prelude::*;

use super::Raster;
use crate::error::{Error, Result};
use crate::geom::{BBox, Point2};
use crate::ingest::GroundPoint;

/// Nearest-neighbor gridding of ground points.
///
/// The grid's first pixel center sits on the minimum x / maximum y of the
/// points and the grid extends until the last pixel center reaches the
/// opposite bound. Each pixel takes `z0` of the closest point; equidistant
/// points resolve to the lowest input index. Pixels farther than
/// `max_search` from every point are nodata.
pub fn grid_nearest(points: &[GroundPoint], resolution: f64, max_search: f64) -> Result<Raster> {
    if points.is_empty() {
        return Err(Error::Empty("no ground points to grid".into()));
    }
    if !(resolution > 0.0) || !(max_search > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "resolution and max_search must be positive (got {resolution}, {max_search})"
        )));
    }
    let xy: Vec<Point2> = points.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let b = BBox::of(&xy).expect("non-empty");
    let width = (b.width() / resolution).ceil() as usize + 1;
    let height = (b.height() / resolution).ceil() as usize + 1;
    let mut raster = Raster::filled(b.min_x, b.max_y, resolution, width, height, 0.0);

    let buckets = Buckets::build(&raster, points);
    let max_ring = ((max_search / resolution).ceil() as usize + 1).max(1);

    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..height)
        .into_par_iter()
        .map(|row| {
            let mut vals = vec![0.0; width];
            let mut mask = vec![false; width];
            for col in 0..width {
                let center = raster.world(col as f64, row as f64);
                match buckets.nearest(points, col, row, center, max_ring, resolution) {
                    Some((d2, idx)) if d2.sqrt() <= max_search => vals[col] = points[idx].z0,
                    _ => mask[col] = true,
                }
            }
            (vals, mask)
        })
        .collect();
    for (row, (vals, mask)) in rows.into_iter().enumerate() {
        let start = row * width;
        raster.values[start..start + width].copy_from_slice(&vals);
        raster.nodata[start..start + width].copy_from_slice(&mask);
    }
    Ok(raster)
}

/// Compressed per-pixel buckets of point indices (ascending within a bucket).
struct Buckets {
    width: usize,
    height: usize,
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl Buckets {
    fn build(r: &Raster, points: &[GroundPoint]) -> Self {
        let cell_of = |p: &GroundPoint| {
            let (c, rr) = r.pixel(Point2::new(p.x, p.y));
            let c = (c.round().max(0.0) as usize).min(r.width - 1);
            let rr = (rr.round().max(0.0) as usize).min(r.height - 1);
            rr * r.width + c
        };
        let n_cells = r.width * r.height;
        let mut counts = vec![0u32; n_cells + 1];
        let cells: Vec<usize> = points.iter().map(cell_of).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Self {
            width: r.width,
            height: r.height,
            offsets: counts,
            items,
        }
    }

    fn bucket(&self, col: usize, row: usize) -> &[u32] {
        let i = row * self.width + col;
        &self.items[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    /// Ring search outward from `(col, row)`. A point in ring `k` is at
    /// least `(k - 1/2) * res` away from the pixel center, which bounds the
    /// search once a candidate is found.
    fn nearest(
        &self,
        points: &[GroundPoint],
        col: usize,
        row: usize,
        center: Point2,
        max_ring: usize,
        res: f64,
    ) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        let consider = |idx: u32, best: &mut Option<(f64, usize)>| {
            let p = &points[idx as usize];
            let d2 = (p.x - center.x).powi(2) + (p.y - center.y).powi(2);
            let cand = (d2, idx as usize);
            match best {
                Some(b) if (b.0, b.1) <= cand => {}
                _ => *best = Some(cand),
            }
        };
        let max_extent = self.width.max(self.height);
        for k in 0..=max_ring.min(max_extent) {
            if k > 0 {
                let lower = (k as f64 - 0.5) * res;
                if let Some((d2, _)) = best {
                    if d2 < lower * lower {
                        break;
                    }
                }
            }
            let (c, r, k_i) = (col as isize, row as isize, k as isize);
            let visit = |cc: isize, rr: isize, best: &mut Option<(f64, usize)>| {
                if cc >= 0 && rr >= 0 && (cc as usize) < self.width && (rr as usize) < self.height {
                    for &idx in self.bucket(cc as usize, rr as usize) {
                        consider(idx, best);
                    }
                }
            };
            if k == 0 {
                visit(c, r, &mut best);
                continue;
            }
            for dc in -k_i..=k_i {
                visit(c + dc, r - k_i, &mut best);
                visit(c + dc, r + k_i, &mut best);
            }
            for dr in (-k_i + 1)..k_i {
                visit(c - k_i, r + dr, &mut best);
                visit(c + k_i, r + dr, &mut best);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(x: f64, y: f64, z0: f64) -> GroundPoint {
        GroundPoint { x, y, z0 }
    }

    #[test]
    fn single_point_single_cell() {
        let r = grid_nearest(&[gp(0.0, 0.0, 5.0)], 0.3, 3.0).unwrap();
        assert_eq!((r.width, r.height), (1, 1));
        assert_eq!(r.values, vec![5.0]);
        assert!(!r.nodata[0]);
    }

    #[test]
    fn step_function() {
        let r = grid_nearest(&[gp(0.0, 0.0, 0.0), gp(3.0, 0.0, 1.0)], 1.0, 3.0).unwrap();
        assert_eq!((r.width, r.height), (4, 1));
        assert_eq!(r.values, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let r = grid_nearest(&[gp(2.0, 0.0, 9.0), gp(0.0, 0.0, 4.0)], 1.0, 3.0).unwrap();
        assert_eq!(r.values, vec![4.0, 9.0, 9.0]);
        let r = grid_nearest(&[gp(0.0, 0.0, 4.0), gp(2.0, 0.0, 9.0)], 1.0, 3.0).unwrap();
        assert_eq!(r.values, vec![4.0, 4.0, 9.0]);
    }

    #[test]
    fn far_cells_are_nodata() {
        let r = grid_nearest(&[gp(0.0, 0.0, 1.0), gp(10.0, 0.0, 2.0)], 1.0, 2.0).unwrap();
        assert_eq!(r.width, 11);
        let masked: Vec<usize> = (0..11).filter(|&c| r.nodata[c]).collect();
        assert_eq!(masked, vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(grid_nearest(&[], 0.3, 3.0), Err(Error::Empty(_))));
    }
}
