//! Synthetic LiDAR sites with planted ground truth.
//!
//! Returns lie on a jittered lattice over rolling terrain. Houses are
//! rectangular wall rings, optionally with an entrance gap; decoys (mounds,
//! solid platforms, free-standing walls) supply realistic negatives.
//! Vegetation appears as extra, higher returns at the exact location of a
//! ground return, written before it.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::ingest::{write_annotations, write_xyz, AnnotationPolygon, PointRecord};
use crate::raster::LocalizeParams;
use crate::rng::{derive_seed, seeded};

const EDGE_MARGIN_M: f64 = 6.0;
const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseSpec {
    pub count: usize,
    pub side_range_m: (f64, f64),
    pub min_area_sq_m: f64,
    pub wall_height_m: (f64, f64),
    pub wall_thickness_m: f64,
    /// Probability that a house has an entrance gap in one long wall.
    pub entrance_prob: f64,
    pub entrance_width_m: f64,
}

impl Default for HouseSpec {
    fn default() -> Self {
        Self {
            count: 50,
            side_range_m: (4.0, 9.0),
            min_area_sq_m: 20.0,
            wall_height_m: (0.4, 0.5),
            wall_thickness_m: 0.5,
            entrance_prob: 0.3,
            entrance_width_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainWave {
    pub amplitude_m: f64,
    pub wavelength_m: f64,
    pub direction_rad: f64,
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoySpec {
    /// Smooth domes, 5 to 10 m across.
    pub mounds: usize,
    /// Solid raised rectangles of house size.
    pub platforms: usize,
    /// Thick free-standing wall segments.
    pub walls: usize,
}

impl Default for DecoySpec {
    fn default() -> Self {
        Self {
            mounds: 6,
            platforms: 3,
            walls: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub extent_m: (f64, f64),
    /// Returns per square meter before vegetation.
    pub point_density: f64,
    /// Largest lattice offset of a return, as a fraction of the spacing.
    pub jitter_frac: f64,
    pub houses: HouseSpec,
    pub decoys: DecoySpec,
    pub terrain: Vec<TerrainWave>,
    /// Vegetation returns per square meter.
    pub vegetation_spike_rate: f64,
    pub spike_height_m: (f64, f64),
    pub noise_sigma_m: f64,
    /// Clear gap kept between planted features.
    pub min_separation_m: f64,
    pub seed: u64,
}

impl Default for SiteSpec {
    fn default() -> Self {
        Self {
            extent_m: (500.0, 500.0),
            point_density: 1.0 / 0.09,
            jitter_frac: 0.15,
            houses: HouseSpec::default(),
            decoys: DecoySpec::default(),
            terrain: vec![
                TerrainWave {
                    amplitude_m: 2.0,
                    wavelength_m: 180.0,
                    direction_rad: 0.3,
                    phase_rad: 0.0,
                },
                TerrainWave {
                    amplitude_m: 0.8,
                    wavelength_m: 45.0,
                    direction_rad: 1.2,
                    phase_rad: 1.0,
                },
                TerrainWave {
                    amplitude_m: 0.25,
                    wavelength_m: 16.0,
                    direction_rad: 2.3,
                    phase_rad: 2.0,
                },
            ],
            vegetation_spike_rate: 0.02,
            spike_height_m: (0.5, 8.0),
            noise_sigma_m: 0.05,
            min_separation_m: 4.0,
            seed: 1,
        }
    }
}

impl SiteSpec {
    /// Empty flat site of the given size: no features, terrain, noise or
    /// vegetation.
    pub fn bare(width: f64, height: f64, seed: u64) -> Self {
        Self {
            extent_m: (width, height),
            houses: HouseSpec {
                count: 0,
                ..Default::default()
            },
            decoys: DecoySpec {
                mounds: 0,
                platforms: 0,
                walls: 0,
            },
            terrain: vec![],
            vegetation_spike_rate: 0.0,
            noise_sigma_m: 0.0,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let (w, h) = self.extent_m;
        if !(w > 2.0 * EDGE_MARGIN_M && h > 2.0 * EDGE_MARGIN_M) {
            return bad(format!("extent {w} x {h} m too small"));
        }
        if !(self.point_density > 0.0) {
            return bad("point density must be positive".into());
        }
        if !(0.0..0.5).contains(&self.jitter_frac) {
            return bad(format!("jitter fraction {} outside [0, 0.5)", self.jitter_frac));
        }
        let hs = &self.houses;
        let (lo, hi) = hs.side_range_m;
        if !(lo > 2.0 * hs.wall_thickness_m && hi >= lo && hi * hi >= hs.min_area_sq_m) {
            return bad(format!("house sides {lo}..{hi} m cannot reach {} m^2", hs.min_area_sq_m));
        }
        if !(hs.wall_height_m.0 > 0.0 && hs.wall_height_m.1 >= hs.wall_height_m.0 && hs.wall_thickness_m > 0.0) {
            return bad("wall height and thickness must be positive".into());
        }
        if !(0.0..=1.0).contains(&hs.entrance_prob) || !(hs.entrance_width_m > 0.0 && hs.entrance_width_m < lo - 2.0 * hs.wall_thickness_m) {
            return bad("invalid entrance settings".into());
        }
        let min_wl = 4.0 * LocalizeParams::default().lambda_m;
        if let Some(t) = self.terrain.iter().find(|t| !(t.wavelength_m >= min_wl) || !(t.amplitude_m >= 0.0)) {
            return bad(format!("terrain wavelength {} m below {min_wl} m", t.wavelength_m));
        }
        if !(self.vegetation_spike_rate >= 0.0) || !(self.spike_height_m.0 > 0.0 && self.spike_height_m.1 >= self.spike_height_m.0) {
            return bad("invalid vegetation settings".into());
        }
        if !(self.noise_sigma_m >= 0.0) || !(self.min_separation_m >= 0.0) {
            return bad("noise and separation must be non-negative".into());
        }
        Ok(())
    }

    pub fn terrain_height(&self, x: f64, y: f64) -> f64 {
        self.terrain
            .iter()
            .map(|t| {
                let k = 2.0 * std::f64::consts::PI / t.wavelength_m;
                let s = x * t.direction_rad.cos() + y * t.direction_rad.sin();
                t.amplitude_m * (k * s + t.phase_rad).sin()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    House,
    Mound,
    Platform,
    Wall,
}

/// A planted feature and its pose. `length_m` runs along `angle_rad`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub id: String,
    pub kind: FeatureKind,
    pub center: Point2,
    pub length_m: f64,
    pub width_m: f64,
    pub angle_rad: f64,
    pub height_m: f64,
    pub wall_thickness_m: Option<f64>,
    pub entrance_width_m: Option<f64>,
}

impl PlantedFeature {
    fn radius(&self) -> f64 {
        0.5 * self.length_m.hypot(self.width_m)
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.angle_rad.sin_cos();
        let (dx, dy) = (x - self.center.x, y - self.center.y);
        (dx * c + dy * s, -dx * s + dy * c)
    }

    /// Height above terrain contributed at `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.local(x, y);
        let (hl, hw) = (self.length_m / 2.0, self.width_m / 2.0);
        match self.kind {
            FeatureKind::Mound => {
                let r = u.hypot(v) / hl;
                if r < 1.0 {
                    self.height_m * (std::f64::consts::FRAC_PI_2 * r).cos().powi(2)
                } else {
                    0.0
                }
            }
            FeatureKind::Platform | FeatureKind::Wall => {
                if u.abs() <= hl && v.abs() <= hw {
                    self.height_m
                } else {
                    0.0
                }
            }
            FeatureKind::House => {
                let t = self.wall_thickness_m.unwrap_or(0.5);
                let in_outer = u.abs() <= hl && v.abs() <= hw;
                let in_inner = u.abs() < hl - t && v.abs() < hw - t;
                let in_gap = self.entrance_width_m.is_some_and(|g| v > 0.0 && u.abs() < g / 2.0);
                if in_outer && !in_inner && !in_gap {
                    self.height_m
                } else {
                    0.0
                }
            }
        }
    }

    /// Outer footprint, counter-clockwise.
    pub fn footprint(&self) -> Vec<Point2> {
        let (s, c) = self.angle_rad.sin_cos();
        let (hl, hw) = (self.length_m / 2.0, self.width_m / 2.0);
        [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
            .iter()
            .map(|&(u, v)| Point2::new(self.center.x + u * c - v * s, self.center.y + u * s + v * c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: SiteSpec,
    pub ground_points: usize,
    pub vegetation_returns: usize,
    pub features: Vec<PlantedFeature>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSite {
    pub records: Vec<PointRecord>,
    pub annotations: Vec<AnnotationPolygon>,
    pub manifest: Manifest,
}

impl SyntheticSite {
    /// Writes `points.xyz`, `annotations.geojson` and `truth.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_xyz(dir.join("points.xyz"), &self.records)?;
        write_annotations(dir.join("annotations.geojson"), &self.annotations)?;
        let p = dir.join("truth.json");
        fs::write(&p, serde_json::to_string_pretty(&self.manifest)? + "\n").map_err(|e| Error::io(&p, e))
    }
}

fn place(spec: &SiteSpec, rng: &mut impl Rng, placed: &[PlantedFeature], mut make: impl FnMut(&mut dyn FnMut() -> f64, Point2) -> PlantedFeature) -> Result<PlantedFeature> {
    let (w, h) = spec.extent_m;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let center = Point2::new(
            rng.random_range(EDGE_MARGIN_M..w - EDGE_MARGIN_M),
            rng.random_range(EDGE_MARGIN_M..h - EDGE_MARGIN_M),
        );
        let mut u = || rng.random::<f64>();
        let f = make(&mut u, center);
        let r = f.radius();
        let inside = center.x - r >= EDGE_MARGIN_M && center.x + r <= w - EDGE_MARGIN_M && center.y - r >= EDGE_MARGIN_M && center.y + r <= h - EDGE_MARGIN_M;
        let clear = placed
            .iter()
            .all(|o| o.center.dist(center) >= o.radius() + r + spec.min_separation_m);
        if inside && clear {
            return Ok(f);
        }
    }
    Err(Error::InvalidParameter(format!(
        "could not place feature {} without overlap in {MAX_PLACEMENT_ATTEMPTS} attempts; extent too small",
        placed.len()
    )))
}

fn lerp(range: (f64, f64), t: f64) -> f64 {
    range.0 + (range.1 - range.0) * t
}

fn plant_features(spec: &SiteSpec) -> Result<Vec<PlantedFeature>> {
    let mut rng = seeded(derive_seed(spec.seed, 0));
    let hs = &spec.houses;
    let mut placed: Vec<PlantedFeature> = Vec::new();
    for i in 0..hs.count {
        let f = place(spec, &mut rng, &placed, |u, center| {
            let (mut a, mut b);
            loop {
                a = lerp(hs.side_range_m, u());
                b = lerp(hs.side_range_m, u());
                if a * b >= hs.min_area_sq_m {
                    break;
                }
            }
            let angle = u() * std::f64::consts::PI;
            let height = lerp(hs.wall_height_m, u());
            let entrance = (u() < hs.entrance_prob).then_some(hs.entrance_width_m);
            PlantedFeature {
                id: format!("house-{i:03}"),
                kind: FeatureKind::House,
                center,
                length_m: a.max(b),
                width_m: a.min(b),
                angle_rad: angle,
                height_m: height,
                wall_thickness_m: Some(hs.wall_thickness_m),
                entrance_width_m: entrance,
            }
        })?;
        placed.push(f);
    }
    let d = &spec.decoys;
    let kinds = std::iter::repeat_n(FeatureKind::Mound, d.mounds)
        .chain(std::iter::repeat_n(FeatureKind::Platform, d.platforms))
        .chain(std::iter::repeat_n(FeatureKind::Wall, d.walls));
    for (i, kind) in kinds.enumerate() {
        let f = place(spec, &mut rng, &placed, |u, center| {
            let (length, width, height) = match kind {
                FeatureKind::Mound => {
                    let dia = lerp((5.0, 10.0), u());
                    (dia, dia, lerp((0.5, 1.0), u()))
                }
                FeatureKind::Platform => (lerp((5.0, 9.0), u()), lerp((4.0, 6.0), u()), lerp((0.4, 0.6), u())),
                _ => (lerp((6.0, 12.0), u()), lerp((1.0, 1.5), u()), lerp((0.4, 0.6), u())),
            };
            PlantedFeature {
                id: format!("decoy-{i:03}"),
                kind,
                center,
                length_m: length,
                width_m: width,
                angle_rad: u() * std::f64::consts::PI,
                height_m: height,
                wall_thickness_m: None,
                entrance_width_m: None,
            }
        })?;
        placed.push(f);
    }
    Ok(placed)
}

/// Bins features by a coarse grid for per-point lookup.
struct FeatureIndex {
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl FeatureIndex {
    fn new(features: &[PlantedFeature], extent: (f64, f64)) -> Self {
        let cell = 10.0;
        let nx = (extent.0 / cell).ceil() as usize + 1;
        let ny = (extent.1 / cell).ceil() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (k, f) in features.iter().enumerate() {
            let r = f.radius() + 1.0;
            let c0 = ((f.center.x - r) / cell).floor().max(0.0) as usize;
            let c1 = (((f.center.x + r) / cell).floor() as usize).min(nx - 1);
            let r0 = ((f.center.y - r) / cell).floor().max(0.0) as usize;
            let r1 = (((f.center.y + r) / cell).floor() as usize).min(ny - 1);
            for row in r0..=r1 {
                for col in c0..=c1 {
                    cells[row * nx + col].push(k);
                }
            }
        }
        Self { cell, nx, ny, cells }
    }

    fn near(&self, x: f64, y: f64) -> &[usize] {
        let c = ((x / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let r = ((y / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        &self.cells[r * self.nx + c]
    }
}

fn mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Generates a site. The same spec always yields the same site.
pub fn generate(spec: &SiteSpec) -> Result<SyntheticSite> {
    spec.validate()?;
    let features = plant_features(spec)?;
    render(spec, features)
}

/// Renders a site around caller-placed features; the spec's house and
/// decoy counts are ignored.
pub fn generate_with(spec: &SiteSpec, features: Vec<PlantedFeature>) -> Result<SyntheticSite> {
    spec.validate()?;
    render(spec, features)
}

fn render(spec: &SiteSpec, features: Vec<PlantedFeature>) -> Result<SyntheticSite> {
    let index = FeatureIndex::new(&features, spec.extent_m);

    let spacing = 1.0 / spec.point_density.sqrt();
    let nx = (spec.extent_m.0 / spacing).floor() as usize;
    let ny = (spec.extent_m.1 / spacing).floor() as usize;
    let mut jitter_rng = seeded(derive_seed(spec.seed, 1));
    let mut noise_rng = seeded(derive_seed(spec.seed, 2));
    let noise = (spec.noise_sigma_m > 0.0).then(|| Normal::new(0.0, spec.noise_sigma_m).expect("positive sigma"));
    let clamp = 4.0 * spec.noise_sigma_m;

    let jf = spec.jitter_frac;
    let mut jitter = || if jf > 0.0 { jitter_rng.random_range(-jf..jf) } else { 0.0 };
    let mut ground = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = mm((i as f64 + 0.5 + jitter()) * spacing);
            let y = mm((j as f64 + 0.5 + jitter()) * spacing);
            let feature = index
                .near(x, y)
                .iter()
                .map(|&k| features[k].height_at(x, y))
                .fold(0.0, f64::max);
            let e = noise.map_or(0.0, |n| n.sample(&mut noise_rng).clamp(-clamp, clamp));
            ground.push(PointRecord {
                x,
                y,
                z: mm(spec.terrain_height(x, y) + feature + e),
            });
        }
    }

    let mut veg_rng = seeded(derive_seed(spec.seed, 3));
    let n_spikes = (spec.vegetation_spike_rate * spec.extent_m.0 * spec.extent_m.1).round() as usize;
    let mut spikes: Vec<(usize, f64)> = (0..n_spikes)
        .map(|_| {
            let at = veg_rng.random_range(0..ground.len());
            (at, lerp(spec.spike_height_m, veg_rng.random::<f64>()))
        })
        .collect();
    spikes.sort_by_key(|s| s.0);

    let mut records = Vec::with_capacity(ground.len() + spikes.len());
    let mut next = spikes.iter().peekable();
    for (k, g) in ground.iter().enumerate() {
        while let Some(&&(at, dz)) = next.peek() {
            if at != k {
                break;
            }
            records.push(PointRecord { z: mm(g.z + dz), ..*g });
            next.next();
        }
        records.push(*g);
    }

    let annotations = features
        .iter()
        .filter(|f| f.kind == FeatureKind::House)
        .map(|f| AnnotationPolygon::new(f.id.clone(), f.footprint()))
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticSite {
        records,
        annotations,
        manifest: Manifest {
            seed: spec.seed,
            spec: spec.clone(),
            ground_points: ground.len(),
            vegetation_returns: spikes.len(),
            features,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_site_is_flat() {
        let s = generate(&SiteSpec::bare(20.0, 20.0, 3)).unwrap();
        assert!(s.records.iter().all(|r| r.z == 0.0));
        assert!(s.annotations.is_empty());
        assert_eq!(s.records.len(), s.manifest.ground_points);
    }

    #[test]
    fn same_seed_same_site() {
        let spec = SiteSpec {
            extent_m: (80.0, 60.0),
            houses: HouseSpec {
                count: 4,
                ..Default::default()
            },
            decoys: DecoySpec {
                mounds: 1,
                platforms: 1,
                walls: 1,
            },
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.manifest, b.manifest);
        let c = generate(&SiteSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn houses_meet_area_floor_and_wall_points_stand_on_terrain() {
        let spec = SiteSpec {
            extent_m: (100.0, 100.0),
            houses: HouseSpec {
                count: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        let s = generate(&spec).unwrap();
        assert_eq!(s.annotations.len(), 8);
        assert!(s.annotations.iter().all(|a| a.area_sq_m >= 20.0));
        let houses: Vec<&PlantedFeature> = s.manifest.features.iter().filter(|f| f.kind == FeatureKind::House).collect();
        let mut lowest: std::collections::HashMap<(i64, i64), f64> = Default::default();
        for r in &s.records {
            let k = ((r.x * 1000.0).round() as i64, (r.y * 1000.0).round() as i64);
            let e = lowest.entry(k).or_insert(f64::INFINITY);
            *e = e.min(r.z);
        }
        let mut walls = 0;
        for (&(xi, yi), &z) in &lowest {
            let (x, y) = (xi as f64 / 1000.0, yi as f64 / 1000.0);
            if houses.iter().any(|h| h.height_at(x, y) > 0.0) {
                walls += 1;
                assert!(z >= spec.terrain_height(x, y) - 1e-3, "wall return below terrain at {x},{y}");
            }
        }
        assert!(walls > 100);
    }

    #[test]
    fn vegetation_precedes_ground_and_is_higher() {
        let spec = SiteSpec {
            extent_m: (30.0, 30.0),
            houses: HouseSpec {
                count: 0,
                ..Default::default()
            },
            decoys: DecoySpec {
                mounds: 0,
                platforms: 0,
                walls: 0,
            },
            vegetation_spike_rate: 0.5,
            ..Default::default()
        };
        let s = generate(&spec).unwrap();
        assert_eq!(s.records.len(), s.manifest.ground_points + s.manifest.vegetation_returns);
        // Runs of returns sharing a location end with the ground return,
        // which is the lowest of the run.
        let mut start = 0;
        for k in 1..=s.records.len() {
            let same = k < s.records.len() && s.records[k].x == s.records[start].x && s.records[k].y == s.records[start].y;
            if !same {
                let ground = s.records[k - 1].z;
                assert!(s.records[start..k - 1].iter().all(|r| r.z > ground));
                start = k;
            }
        }
    }

    #[test]
    fn placement_failure_reported() {
        let spec = SiteSpec {
            extent_m: (30.0, 30.0),
            houses: HouseSpec {
                count: 40,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(generate(&spec), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn short_terrain_wavelength_rejected() {
        let mut spec = SiteSpec::bare(50.0, 50.0, 1);
        spec.terrain.push(TerrainWave {
            amplitude_m: 1.0,
            wavelength_m: 5.0,
            direction_rad: 0.0,
            phase_rad: 0.0,
        });
        assert!(spec.validate().is_err());
    }
}
