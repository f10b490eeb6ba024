//! Fixed-size image chips cut from the local DEM along candidate boxes.
//!
//! A chip samples the (optionally widened) rotated rectangle on an `n x n`
//! lattice, with columns running along the major axis and row 0 on the
//! `+minor` side. Chips are normalized to zero mean and unit range; training
//! positives are additionally widened in steps and turned by quarter turns.

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::raster::Raster;
use crate::segment::Mbb;

pub const DEFAULT_CHIP_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chip {
    pub n: usize,
    /// Row-major `n * n` samples.
    pub pixels: Vec<f64>,
    pub candidate_id: usize,
    pub widen_step: usize,
    pub rotation: usize,
}

impl Chip {
    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    /// Outward margins in meters.
    pub widen_steps: Vec<f64>,
    pub augment_positives: bool,
    pub augment_negatives: bool,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            widen_steps: (0..6).map(|k| k as f64 / 3.0).collect(),
            augment_positives: true,
            augment_negatives: false,
        }
    }
}

impl AugmentPlan {
    pub const ROTATIONS: usize = 4;

    pub fn validate(&self) -> Result<()> {
        let s = &self.widen_steps;
        let ok = !s.is_empty()
            && s[0] >= 0.0
            && s.windows(2).all(|w| w[0] < w[1])
            && s.iter().all(|&m| m < 2.0);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "widen steps must be non-negative, strictly increasing and below 2 m: {s:?}"
            )));
        }
        Ok(())
    }

    pub fn augments(&self, label: Label) -> bool {
        match label {
            Label::Positive => self.augment_positives,
            Label::Negative => self.augment_negatives,
        }
    }

    /// Training chips emitted for one candidate of class `label`.
    pub fn chips_per_candidate(&self, label: Label) -> usize {
        if self.augments(label) {
            self.widen_steps.len() * Self::ROTATIONS
        } else {
            1
        }
    }
}

/// Samples the widened box on an `n x n` lattice of cell centers.
/// Samples beyond the raster take the nearest edge value.
pub fn crop_chip(dem: &Raster, mbb: &Mbb, margin: f64, n: usize) -> Result<Chip> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!("chip size {n} below 8")));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidParameter(format!("negative margin {margin}")));
    }
    let m = mbb.widened(margin);
    let half = dem.resolution / 2.0;
    let extent = crate::geom::BBox {
        min_x: dem.origin_x - half,
        max_x: dem.origin_x + (dem.width as f64 - 1.0) * dem.resolution + half,
        min_y: dem.origin_y - (dem.height as f64 - 1.0) * dem.resolution - half,
        max_y: dem.origin_y + half,
    };
    if !m.bbox().intersects(&extent) {
        return Err(Error::InvalidGeometry("box lies outside the raster".into()));
    }
    let (u, v) = m.axes();
    let step_u = m.len_major / n as f64;
    let step_v = m.len_minor / n as f64;
    let mut pixels = Vec::with_capacity(n * n);
    for i in 0..n {
        let t = m.len_minor / 2.0 - (i as f64 + 0.5) * step_v;
        for j in 0..n {
            let s = -m.len_major / 2.0 + (j as f64 + 0.5) * step_u;
            let p = m.center.add(u.scale(s)).add(v.scale(t));
            let (c, r) = dem.pixel(p);
            pixels.push(dem.sample_bilinear(c, r));
        }
    }
    Ok(Chip {
        n,
        pixels,
        candidate_id: 0,
        widen_step: 0,
        rotation: 0,
    })
}

/// `(x - mean) / (max - min)`; a constant chip becomes all zeros.
pub fn normalize(mut chip: Chip) -> Chip {
    let range = chip.range();
    if !(range > 0.0) || !range.is_finite() {
        chip.pixels.iter_mut().for_each(|p| *p = 0.0);
        return chip;
    }
    let mean = chip.mean();
    chip.pixels.iter_mut().for_each(|p| *p = (*p - mean) / range);
    chip
}

/// Quarter-turn index maps on an `n x n` grid (0-based):
/// `m=1: (i,j) <- (j, n-1-i)`, `m=2: (i,j) <- (n-1-j, i)`,
/// `m=3: (i,j) <- (n-1-i, n-1-j)`.
pub fn rotate(chip: &Chip, m: usize) -> Chip {
    let n = chip.n;
    let src = |i: usize, j: usize| -> usize {
        let (si, sj) = match m % 4 {
            0 => (i, j),
            1 => (j, n - 1 - i),
            2 => (n - 1 - j, i),
            _ => (n - 1 - i, n - 1 - j),
        };
        si * n + sj
    };
    let pixels = (0..n * n).map(|k| chip.pixels[src(k / n, k % n)]).collect();
    Chip {
        pixels,
        rotation: m % 4,
        ..chip.clone()
    }
}

/// All four rotations when the plan augments `label`, else the chip itself.
pub fn augment(chip: &Chip, plan: &AugmentPlan, label: Label) -> Vec<Chip> {
    if plan.augments(label) {
        (0..AugmentPlan::ROTATIONS).map(|m| rotate(chip, m)).collect()
    } else {
        vec![chip.clone()]
    }
}

/// Training chips for labeled boxes, ordered by (input order, widen step,
/// rotation). Augmented classes get every widen step and rotation; others a
/// single margin-0 chip.
pub fn training_chips(dem: &Raster, boxes: &[(usize, Mbb, Label)], plan: &AugmentPlan, n: usize) -> Result<Vec<(Chip, Label)>> {
    plan.validate()?;
    let per: Vec<Vec<(Chip, Label)>> = boxes
        .par_iter()
        .map(|&(id, mbb, label)| {
            let steps: &[f64] = if plan.augments(label) { &plan.widen_steps } else { &[0.0] };
            let mut out = Vec::with_capacity(steps.len() * AugmentPlan::ROTATIONS);
            for (k, &margin) in steps.iter().enumerate() {
                let mut chip = normalize(crop_chip(dem, &mbb, margin, n)?);
                chip.candidate_id = id;
                chip.widen_step = k;
                out.extend(augment(&chip, plan, label).into_iter().map(|c| (c, label)));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// One margin-0, unrotated chip per box.
pub fn test_chips(dem: &Raster, boxes: &[(usize, Mbb)], n: usize) -> Result<Vec<Chip>> {
    boxes
        .par_iter()
        .map(|&(id, mbb)| {
            let mut chip = normalize(crop_chip(dem, &mbb, 0.0, n)?);
            chip.candidate_id = id;
            Ok(chip)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Test,
}

impl SplitPart {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredChip {
    pub chip: Chip,
    pub label: Label,
    pub split: SplitPart,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    chip_id: usize,
    candidate_id: usize,
    n: usize,
    m: usize,
    label: String,
    split: String,
}

fn chip_file(dir: &Path, chip_id: usize) -> PathBuf {
    dir.join(format!("{chip_id:06}.f32"))
}

/// Writes `dir/index.csv` and one little-endian `f32` file per chip.
pub fn write_chip_store(dir: impl AsRef<Path>, chips: &[StoredChip]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let index_path = dir.join("index.csv");
    let mut w = csv::Writer::from_path(&index_path)?;
    for (chip_id, s) in chips.iter().enumerate() {
        w.serialize(IndexRow {
            chip_id,
            candidate_id: s.chip.candidate_id,
            n: s.chip.widen_step,
            m: s.chip.rotation,
            label: s.label.as_str().into(),
            split: s.split.as_str().into(),
        })?;
        let path = chip_file(dir, chip_id);
        let mut bytes = Vec::with_capacity(s.chip.pixels.len() * 4);
        for &p in &s.chip.pixels {
            bytes.extend_from_slice(&(p as f32).to_le_bytes());
        }
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&index_path, e))
}

/// Reads a chip store; chip sides are inferred from file sizes.
pub fn read_chip_store(dir: impl AsRef<Path>) -> Result<Vec<StoredChip>> {
    let dir = dir.as_ref();
    let mut r = csv::Reader::from_path(dir.join("index.csv"))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: IndexRow = row?;
        let path = chip_file(dir, row.chip_id);
        let mut bytes = Vec::new();
        fs::File::open(&path)
            .map(BufReader::new)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&path, e))?;
        let count = bytes.len() / 4;
        let n = (count as f64).sqrt().round() as usize;
        if n * n != count || bytes.len() % 4 != 0 {
            return Err(Error::Parse {
                line: row.chip_id + 2,
                message: format!("{} is not a square float32 grid", path.display()),
            });
        }
        let pixels = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let split = match row.split.as_str() {
            "train" => SplitPart::Train,
            "test" => SplitPart::Test,
            other => {
                return Err(Error::Parse {
                    line: row.chip_id + 2,
                    message: format!("unknown split {other:?}"),
                })
            }
        };
        out.push(StoredChip {
            chip: Chip {
                n,
                pixels,
                candidate_id: row.candidate_id,
                widen_step: row.n,
                rotation: row.m,
            },
            label: row.label.parse()?,
            split,
        });
    }
    Ok(out)
}
