//! Marching-squares level sets with oriented segment linking.
//!
//! The raster is surrounded by a one-pixel frame that is always below the
//! level, so every level set closes. Crossings on an edge towards the frame
//! (or towards a nodata pixel) are placed on the inside pixel itself, which
//! makes border-touching contours run along the outermost pixel centers.
//!
//! Segments are oriented with the region above the level on their left, so
//! outer boundaries come out counter-clockwise and hole boundaries clockwise.

use std::sync::OnceLock;

use super::Contour;
use crate::geom::Point2;
use crate::raster::Raster;

const T: u8 = 0;
const R: u8 = 1;
const B: u8 = 2;
const L: u8 = 3;

/// Oriented `(from, to)` edge pairs for a cell case; saddles have two.
type CellSegments = [Option<(u8, u8)>; 2];

struct Table {
    /// Indexed by case bits `TL<<3 | TR<<2 | BR<<1 | BL`.
    plain: [CellSegments; 16],
    /// Saddle cases when the cell-center average is above the level.
    saddle_center_in: [CellSegments; 16],
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

fn build_table() -> Table {
    // Unit cell in map orientation: TL=(0,1) TR=(1,1) BR=(1,0) BL=(0,0).
    let corner = [Point2::new(0.0, 1.0), Point2::new(1.0, 1.0), Point2::new(1.0, 0.0), Point2::new(0.0, 0.0)];
    // Corner indices (TL=0, TR=1, BR=2, BL=3) bounding each edge.
    let edge_corners = [(0usize, 1usize), (1, 2), (3, 2), (0, 3)];
    let mid = |e: u8| {
        let (a, b) = edge_corners[e as usize];
        corner[a].add(corner[b]).scale(0.5)
    };
    let orient = |case: u8, e1: u8, e2: u8| -> (u8, u8) {
        let inside = |k: usize| (case >> (3 - k)) & 1 == 1;
        let (a, b) = edge_corners[e1 as usize];
        let (ci, co) = if inside(a) { (a, b) } else { (b, a) };
        let d = corner[ci].sub(corner[co]);
        let pq = mid(e2).sub(mid(e1));
        if pq.cross(d) > 0.0 {
            (e1, e2)
        } else {
            (e2, e1)
        }
    };
    let crossing_edges = |case: u8| -> Vec<u8> {
        let inside = |k: usize| (case >> (3 - k)) & 1 == 1;
        (0u8..4)
            .filter(|&e| {
                let (a, b) = edge_corners[e as usize];
                inside(a) != inside(b)
            })
            .collect()
    };
    let mut plain = [[None; 2]; 16];
    let mut saddle_center_in = [[None; 2]; 16];
    for case in 1u8..15 {
        match case {
            // TR + BL inside
            5 => {
                plain[5] = [Some(orient(5, T, R)), Some(orient(5, B, L))];
                saddle_center_in[5] = [Some(orient(5, L, T)), Some(orient(5, R, B))];
            }
            // TL + BR inside
            10 => {
                plain[10] = [Some(orient(10, L, T)), Some(orient(10, R, B))];
                saddle_center_in[10] = [Some(orient(10, T, R)), Some(orient(10, B, L))];
            }
            _ => {
                let e = crossing_edges(case);
                debug_assert_eq!(e.len(), 2);
                plain[case as usize] = [Some(orient(case, e[0], e[1])), None];
            }
        }
    }
    Table { plain, saddle_center_in }
}

struct Padded<'a> {
    raster: &'a Raster,
    level: f64,
    pw: usize,
    ph: usize,
    inside: Vec<bool>,
}

impl<'a> Padded<'a> {
    fn new(raster: &'a Raster, level: f64) -> Self {
        let pw = raster.width + 2;
        let ph = raster.height + 2;
        let mut inside = vec![false; pw * ph];
        for r in 0..raster.height {
            let src = r * raster.width;
            let dst = (r + 1) * pw + 1;
            for c in 0..raster.width {
                inside[dst + c] = !raster.nodata[src + c] && raster.values[src + c] > level;
            }
        }
        Self {
            raster,
            level,
            pw,
            ph,
            inside,
        }
    }

    /// Value of a padded vertex, `None` for the frame and nodata pixels.
    #[inline]
    fn value(&self, r: usize, c: usize) -> Option<f64> {
        if r == 0 || c == 0 || r == self.ph - 1 || c == self.pw - 1 {
            return None;
        }
        let i = (r - 1) * self.raster.width + (c - 1);
        (!self.raster.nodata[i]).then(|| self.raster.values[i])
    }

    fn world(&self, r: f64, c: f64) -> Point2 {
        self.raster.world(c - 1.0, r - 1.0)
    }

    /// Crossing position on a global edge id.
    fn crossing(&self, edge: u64) -> Point2 {
        let v = (edge / 2) as usize;
        let (r, c) = (v / self.pw, v % self.pw);
        let (r2, c2) = if edge % 2 == 0 { (r, c + 1) } else { (r + 1, c) };
        let a_in = self.inside[r * self.pw + c];
        let ((ri, ci), (ro, co)) = if a_in { ((r, c), (r2, c2)) } else { ((r2, c2), (r, c)) };
        let vi = self.value(ri, ci).expect("inside vertex is a valid pixel");
        match self.value(ro, co) {
            Some(vo) => {
                let t = (self.level - vi) / (vo - vi);
                let fr = ri as f64 + t * (ro as f64 - ri as f64);
                let fc = ci as f64 + t * (co as f64 - ci as f64);
                self.world(fr, fc)
            }
            None => self.world(ri as f64, ci as f64),
        }
    }

    /// Average deviation sign at the cell center, nodata counting as neutral.
    fn center_above(&self, r: usize, c: usize) -> bool {
        let mut sum = 0.0;
        for (rr, cc) in [(r, c), (r, c + 1), (r + 1, c + 1), (r + 1, c)] {
            if let Some(v) = self.value(rr, cc) {
                sum += v - self.level;
            }
        }
        sum > 0.0
    }
}

/// Extracts every closed level-set contour of `raster` at `level`. Pixels
/// strictly above the level are inside.
pub fn extract_contours(raster: &Raster, level: f64) -> Vec<Contour> {
    if raster.width == 0 || raster.height == 0 || !level.is_finite() {
        return Vec::new();
    }
    let grid = Padded::new(raster, level);
    if !grid.inside.iter().any(|&b| b) {
        return Vec::new();
    }
    let tab = table();
    let pw = grid.pw as u64;
    let h_edge = |r: usize, c: usize| (r as u64 * pw + c as u64) * 2;
    let v_edge = |r: usize, c: usize| (r as u64 * pw + c as u64) * 2 + 1;

    let mut segs: Vec<(u64, u64)> = Vec::new();
    let inside = &grid.inside;
    for r in 0..grid.ph - 1 {
        let top = r * grid.pw;
        let bot = top + grid.pw;
        for c in 0..grid.pw - 1 {
            let case = (u8::from(inside[top + c]) << 3)
                | (u8::from(inside[top + c + 1]) << 2)
                | (u8::from(inside[bot + c + 1]) << 1)
                | u8::from(inside[bot + c]);
            if case == 0 || case == 15 {
                continue;
            }
            let cell = if (case == 5 || case == 10) && grid.center_above(r, c) {
                &tab.saddle_center_in[case as usize]
            } else {
                &tab.plain[case as usize]
            };
            for &(from, to) in cell.iter().flatten() {
                let id = |e: u8| match e {
                    T => h_edge(r, c),
                    B => h_edge(r + 1, c),
                    L => v_edge(r, c),
                    _ => v_edge(r, c + 1),
                };
                segs.push((id(from), id(to)));
            }
        }
    }
    link(&grid, segs, level)
}

fn link(grid: &Padded<'_>, mut segs: Vec<(u64, u64)>, level: f64) -> Vec<Contour> {
    segs.sort_unstable_by_key(|s| s.0);
    let mut used = vec![false; segs.len()];
    let find = |e: u64| segs.binary_search_by_key(&e, |s| s.0).ok();
    let mut out = Vec::new();
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        let mut verts: Vec<Point2> = Vec::new();
        let mut i = start;
        loop {
            used[i] = true;
            let p = grid.crossing(segs[i].0);
            if verts.last() != Some(&p) {
                verts.push(p);
            }
            match find(segs[i].1) {
                Some(j) if !used[j] => i = j,
                _ => break,
            }
        }
        while verts.len() > 1 && verts.first() == verts.last() {
            verts.pop();
        }
        if distinct_count(&verts) < 3 {
            continue;
        }
        verts.push(verts[0]);
        out.push(Contour {
            vertices: verts,
            level,
            is_outer: false,
        });
    }
    out
}

fn distinct_count(v: &[Point2]) -> usize {
    let mut pts: Vec<(u64, u64)> = v.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
    pts.sort_unstable();
    pts.dedup();
    pts.len()
}
