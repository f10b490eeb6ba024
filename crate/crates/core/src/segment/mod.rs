//! Candidate segmentation of a local DEM.
//!
//! Level-set contours at `delta0` are reduced to the outermost ones, each is
//! enclosed by its minimum-area rectangle, and rectangles outside the house
//! size/shape envelope are discarded.

mod contour;
mod hierarchy;
mod mbb;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use contour::extract_contours;
pub use hierarchy::reduce_hierarchy;
pub use mbb::{min_bounding_box, Mbb, MbbMode};

use crate::error::{Error, Result};
use crate::geom::{self, BBox, Point2};
use crate::ingest::ring_coordinates;
use crate::raster::{gray_to_value, Raster};

/// Closed level-set polyline of the local DEM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    /// Closed ring (first vertex repeated at the end).
    pub vertices: Vec<Point2>,
    pub level: f64,
    pub is_outer: bool,
}

impl Contour {
    pub fn area(&self) -> f64 {
        geom::polygon_area(&self.vertices)
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.vertices).expect("contour has vertices")
    }

    /// Vertex used for containment tests.
    pub fn test_vertex(&self) -> Point2 {
        self.vertices[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefilterRules {
    pub min_area_sq_m: f64,
    /// Longest allowed major:minor ratio (10 means 1:10).
    pub max_aspect: f64,
    pub min_circumference_m: f64,
    pub max_circumference_m: f64,
}

impl Default for PrefilterRules {
    fn default() -> Self {
        Self {
            min_area_sq_m: 3.0,
            max_aspect: 10.0,
            min_circumference_m: 10.0,
            max_circumference_m: 200.0,
        }
    }
}

impl PrefilterRules {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.min_area_sq_m, self.max_aspect, self.min_circumference_m, self.max_circumference_m]
            .iter()
            .all(|v| *v > 0.0);
        if !all_positive || self.min_circumference_m >= self.max_circumference_m {
            return Err(Error::InvalidParameter(format!("invalid prefilter rules {self:?}")));
        }
        Ok(())
    }

    pub fn accepts(&self, m: &Mbb) -> bool {
        let circ = m.circumference();
        m.area() >= self.min_area_sq_m
            && m.aspect_ratio() >= 1.0 / self.max_aspect
            && circ >= self.min_circumference_m
            && circ <= self.max_circumference_m
    }
}

/// Keeps the boxes accepted by `rules`, in order.
pub fn prefilter(mbbs: &[Mbb], rules: &PrefilterRules) -> Vec<Mbb> {
    mbbs.iter().filter(|m| rules.accepts(m)).copied().collect()
}

/// Candidate region: an outermost contour and its bounding rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub contour: Contour,
    pub mbb: Mbb,
}

/// Full result of segmenting at one level.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub level_m: f64,
    pub contour_count: usize,
    pub reduced: Vec<Contour>,
    /// Boxes of reduced contours before pre-filtering.
    pub mbb_count: usize,
    pub candidates: Vec<Candidate>,
}

/// Contours, hierarchy reduction, boxes and pre-filter at `level_m`.
pub fn segment(local: &Raster, level_m: f64, rules: &PrefilterRules, mode: MbbMode) -> Result<Segmentation> {
    rules.validate()?;
    let contours = extract_contours(local, level_m);
    let contour_count = contours.len();
    let reduced = reduce_hierarchy(contours);
    let mut mbb_count = 0;
    let mut candidates = Vec::new();
    for c in &reduced {
        let Ok(m) = min_bounding_box(&c.vertices, mode) else {
            continue;
        };
        mbb_count += 1;
        if rules.accepts(&m) {
            candidates.push(Candidate {
                id: candidates.len(),
                contour: c.clone(),
                mbb: m,
            });
        }
    }
    Ok(Segmentation {
        level_m,
        contour_count,
        reduced,
        mbb_count,
        candidates,
    })
}

/// Number of pre-filtered outermost boxes at `level_m`.
///
/// A box passing the area rule has a contour whose axis-aligned bounding
/// box is at least as large, and so does anything containing that contour.
/// Smaller contours can neither pass nor contain a passing one, so they are
/// dropped before the hierarchy pass without changing the count.
fn count_at(local: &Raster, level_m: f64, rules: &PrefilterRules, mode: MbbMode) -> usize {
    let mut contours = extract_contours(local, level_m);
    contours.retain(|c| c.bbox().area() >= rules.min_area_sq_m);
    reduce_hierarchy(contours)
        .iter()
        .filter_map(|c| min_bounding_box(&c.vertices, mode).ok())
        .filter(|m| rules.accepts(m))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta0Tuning {
    /// Chosen grayscale level.
    pub level: u8,
    /// The chosen level in meters of local elevation.
    pub level_m: f64,
    /// `(level, count)` for every evaluated grayscale level.
    pub curve: Vec<(u8, usize)>,
}

/// Sweeps the 256 grayscale levels of the local DEM and picks the one with
/// the most pre-filtered outermost boxes (ties go to the lowest level).
///
/// With `meters_window`, only levels whose elevation lies inside the window
/// are evaluated.
pub fn tune_delta0(
    local: &Raster,
    rules: &PrefilterRules,
    mode: MbbMode,
    meters_window: Option<(f64, f64)>,
) -> Result<Delta0Tuning> {
    rules.validate()?;
    let (lo, hi) = local
        .value_range()
        .ok_or_else(|| Error::Empty("local DEM has no valid pixels".into()))?;
    if !(hi > lo) {
        return Err(Error::InvalidParameter("local DEM has zero value range".into()));
    }
    let levels: Vec<u8> = (0u8..=255)
        .filter(|&g| match meters_window {
            Some((a, b)) => {
                let v = gray_to_value(g, lo, hi);
                v >= a && v <= b
            }
            None => true,
        })
        .collect();
    if levels.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no grayscale level falls in the window {meters_window:?} (local range {lo}..{hi})"
        )));
    }
    let curve: Vec<(u8, usize)> = levels
        .par_iter()
        .map(|&g| (g, count_at(local, gray_to_value(g, lo, hi), rules, mode)))
        .collect();
    let &(level, _) = curve
        .iter()
        .fold(None, |best: Option<&(u8, usize)>, e| match best {
            Some(b) if b.1 >= e.1 => Some(b),
            _ => Some(e),
        })
        .expect("non-empty curve");
    Ok(Delta0Tuning {
        level,
        level_m: gray_to_value(level, lo, hi),
        curve,
    })
}

pub fn write_curve_csv(path: impl AsRef<Path>, curve: &[(u8, usize)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "count"])?;
    for (l, c) in curve {
        w.write_record([l.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn contours_geojson(contours: &[Contour]) -> Value {
    let features: Vec<Value> = contours
        .iter()
        .enumerate()
        .map(|(i, c)| {
            json!({
                "type": "Feature",
                "properties": { "id": i, "level": c.level, "is_outer": c.is_outer },
                "geometry": { "type": "LineString", "coordinates": ring_coordinates(&c.vertices) },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn mbbs_geojson(candidates: &[Candidate]) -> Value {
    let features: Vec<Value> = candidates
        .iter()
        .map(|c| {
            json!({
                "type": "Feature",
                "properties": {
                    "id": c.id,
                    "level": c.contour.level,
                    "area": c.mbb.area(),
                    "circumference": c.mbb.circumference(),
                    "aspect": c.mbb.aspect_ratio(),
                    "angle": c.mbb.angle,
                },
                "geometry": { "type": "Polygon", "coordinates": [ring_coordinates(&c.mbb.ring())] },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(w: f64, h: f64) -> Mbb {
        Mbb {
            center: Point2::new(0.0, 0.0),
            len_major: w.max(h),
            len_minor: w.min(h),
            angle: 0.0,
        }
    }

    #[test]
    fn prefilter_rules() {
        let rules = PrefilterRules::default();
        // area 3.0 but circumference 7.0
        assert!(!rules.accepts(&boxed(2.0, 1.5)));
        assert!(rules.accepts(&boxed(4.0, 3.0)));
        // 1:150
        assert!(!rules.accepts(&boxed(30.0, 0.2)));
        // exactly 1:10 passes, circumference 22
        assert!(rules.accepts(&boxed(10.0, 1.0)));
        // too long
        assert!(!rules.accepts(&boxed(60.0, 50.0)));
    }

    #[test]
    fn prefilter_keeps_order_and_is_idempotent() {
        let boxes = vec![boxed(4.0, 3.0), boxed(2.0, 1.5), boxed(8.0, 5.0), boxed(30.0, 0.2)];
        let rules = PrefilterRules::default();
        let once = prefilter(&boxes, &rules);
        assert_eq!(once, vec![boxed(4.0, 3.0), boxed(8.0, 5.0)]);
        assert_eq!(prefilter(&once, &rules), once);
    }

    #[test]
    fn invalid_rules_rejected() {
        let r = PrefilterRules {
            min_circumference_m: 300.0,
            ..Default::default()
        };
        assert!(r.validate().is_err());
    }

    fn plateau_raster() -> Raster {
        // Two 20x20-pixel plateaus at 1 m resolution, 0.5 m high.
        let (w, h) = (60, 30);
        let mut v = vec![0.0; w * h];
        for r in 5..25 {
            for c in (5..25).chain(35..55) {
                v[r * w + c] = 0.5;
            }
        }
        v[0] = -0.1;
        Raster::from_values(0.0, 0.0, 1.0, w, h, v).unwrap()
    }

    #[test]
    fn segment_two_plateaus() {
        let s = segment(&plateau_raster(), 0.25, &PrefilterRules::default(), MbbMode::MinArea).unwrap();
        assert_eq!(s.candidates.len(), 2);
        for c in &s.candidates {
            assert!((c.mbb.area() - 400.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tune_top_level_is_empty() {
        let t = tune_delta0(&plateau_raster(), &PrefilterRules::default(), MbbMode::MinArea, None).unwrap();
        assert_eq!(t.curve.len(), 256);
        assert_eq!(t.curve[255], (255, 0));
        assert_eq!(t.curve[t.level as usize].1, 2);
        // Lowest level where both plateaus separate from the background.
        assert!(t.level_m >= 0.0 && t.level_m < 0.5);
        let windowed = tune_delta0(&plateau_raster(), &PrefilterRules::default(), MbbMode::MinArea, Some((0.2, 0.5))).unwrap();
        assert!(windowed.curve.iter().all(|&(g, _)| {
            let v = gray_to_value(g, -0.1, 0.5);
            (0.2..=0.5).contains(&v)
        }));
    }
}
