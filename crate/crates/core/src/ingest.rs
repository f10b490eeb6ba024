//! Point-cloud and annotation ingestion.
//!
//! The point format is plain ASCII XYZ, one LiDAR return per line. Multiple
//! returns of one pulse share the same `(x, y)`; [`reduce_to_ground`] keeps
//! the lowest of them as the bare-ground sample.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geom::{self, BBox, Point2};

/// Default grouping tolerance for returns sharing one location.
pub const DEFAULT_EPS_XY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub records: Vec<PointRecord>,
    pub bounds: BBox,
}

impl PointCloud {
    pub fn new(records: Vec<PointRecord>) -> Result<Self> {
        let xy: Vec<Point2> = records.iter().map(|r| Point2::new(r.x, r.y)).collect();
        let bounds = BBox::of(&xy).ok_or_else(|| Error::Empty("point cloud has no records".into()))?;
        Ok(Self { records, bounds })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Lowest return at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
    pub z0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPolygon {
    pub id: String,
    /// Closed counter-clockwise ring.
    pub ring: Vec<Point2>,
    pub area_sq_m: f64,
}

impl AnnotationPolygon {
    /// Validates and normalizes a ring: closing vertex appended, orientation
    /// counter-clockwise, self-intersections rejected.
    pub fn new(id: impl Into<String>, ring: Vec<Point2>) -> Result<Self> {
        let id = id.into();
        let mut open: Vec<Point2> = geom::open_ring(&ring).to_vec();
        open.dedup();
        if open.len() < 3 {
            return Err(Error::InvalidGeometry(format!("annotation {id}: ring needs at least 3 distinct vertices")));
        }
        if open.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidGeometry(format!("annotation {id}: non-finite coordinate")));
        }
        if !geom::is_simple(&open) {
            return Err(Error::InvalidGeometry(format!("annotation {id}: self-intersecting ring")));
        }
        let signed = geom::signed_area(&open);
        if signed == 0.0 {
            return Err(Error::InvalidGeometry(format!("annotation {id}: zero area")));
        }
        if signed < 0.0 {
            open.reverse();
        }
        open.push(open[0]);
        Ok(Self {
            id,
            ring: open,
            area_sq_m: signed.abs(),
        })
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.ring).expect("ring is non-empty")
    }
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(BufReader::with_capacity(1 << 20, file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses `x y z` lines; blank lines and `#` comments are skipped. Extra
/// columns after the third are ignored.
pub fn parse_xyz<R: BufRead>(mut reader: R) -> Result<PointCloud> {
    let mut records = Vec::new();
    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io("<xyz>", e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut coords = [0.0f64; 3];
        for (k, c) in coords.iter_mut().enumerate() {
            let tok = fields.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {k}"),
            })?;
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a number: {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value: {tok:?}"),
                });
            }
            *c = v;
        }
        records.push(PointRecord {
            x: coords[0],
            y: coords[1],
            z: coords[2],
        });
    }
    if records.is_empty() {
        return Err(Error::Empty("xyz file contains no points".into()));
    }
    PointCloud::new(records)
}

pub fn write_xyz(path: impl AsRef<Path>, records: &[PointRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    for r in records {
        writeln!(w, "{:.3} {:.3} {:.3}", r.x, r.y, r.z).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Collapses returns sharing a location to their lowest elevation.
///
/// Locations are snapped to an `eps_xy` lattice; output order follows the
/// first occurrence of each location in the input.
pub fn reduce_to_ground(cloud: &PointCloud, eps_xy: f64) -> Result<Vec<GroundPoint>> {
    if !(eps_xy > 0.0) {
        return Err(Error::InvalidParameter(format!("eps_xy must be positive, got {eps_xy}")));
    }
    if cloud.records.is_empty() {
        return Err(Error::Empty("point cloud has no records".into()));
    }
    let mut slot: HashMap<(i64, i64), usize> = HashMap::with_capacity(cloud.records.len());
    let mut out: Vec<GroundPoint> = Vec::with_capacity(cloud.records.len());
    for r in &cloud.records {
        let key = ((r.x / eps_xy).round() as i64, (r.y / eps_xy).round() as i64);
        match slot.get(&key) {
            Some(&i) => {
                if r.z < out[i].z0 {
                    out[i].z0 = r.z;
                }
            }
            None => {
                slot.insert(key, out.len());
                out.push(GroundPoint { x: r.x, y: r.y, z0: r.z });
            }
        }
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationPolygon>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

/// Parses a GeoJSON FeatureCollection of Polygon features. Only the outer
/// ring is kept; interior rings are dropped with a warning.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationPolygon>> {
    let doc: Value = serde_json::from_str(text)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::InvalidGeometry("expected a GeoJSON FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidGeometry("FeatureCollection without features array".into()))?;
    let mut out = Vec::with_capacity(features.len());
    for (idx, feat) in features.iter().enumerate() {
        let id = feat
            .get("properties")
            .and_then(|p| p.get("id"))
            .or_else(|| feat.get("id"))
            .map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_else(|| idx.to_string());
        let geometry = feat
            .get("geometry")
            .ok_or_else(|| Error::InvalidGeometry(format!("feature {id} has no geometry")))?;
        let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("<missing>");
        if kind != "Polygon" {
            return Err(Error::InvalidGeometry(format!("feature {id}: expected Polygon, found {kind}")));
        }
        let rings = geometry
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidGeometry(format!("feature {id}: missing coordinates")))?;
        let outer = rings
            .first()
            .ok_or_else(|| Error::InvalidGeometry(format!("feature {id}: polygon has no rings")))?;
        if rings.len() > 1 {
            log::warn!("annotation {id}: {} interior ring(s) ignored", rings.len() - 1);
        }
        let ring = parse_ring(outer).ok_or_else(|| Error::InvalidGeometry(format!("feature {id}: bad coordinate array")))?;
        out.push(AnnotationPolygon::new(id, ring)?);
    }
    Ok(out)
}

fn parse_ring(v: &Value) -> Option<Vec<Point2>> {
    v.as_array()?
        .iter()
        .map(|c| {
            let c = c.as_array()?;
            Some(Point2::new(c.first()?.as_f64()?, c.get(1)?.as_f64()?))
        })
        .collect()
}

pub fn ring_coordinates(ring: &[Point2]) -> Value {
    Value::Array(ring.iter().map(|p| json!([p.x, p.y])).collect())
}

pub fn annotations_to_geojson(polys: &[AnnotationPolygon]) -> Value {
    let features: Vec<Value> = polys
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "properties": { "id": p.id, "area": p.area_sq_m },
                "geometry": { "type": "Polygon", "coordinates": [ring_coordinates(&p.ring)] },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_annotations(path: impl AsRef<Path>, polys: &[AnnotationPolygon]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&annotations_to_geojson(polys))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
