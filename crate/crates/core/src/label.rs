//! Overlap labeling of candidate boxes against annotated house footprints,
//! and the seeded train/test split.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::ingest::AnnotationPolygon;
use crate::rng;
use crate::segment::Mbb;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HouseRule {
    /// Minimum share of the box covered by the house.
    pub a1: f64,
    /// Minimum share of the house covered by the box.
    pub a2: f64,
    pub min_house_area_sq_m: f64,
}

impl Default for HouseRule {
    fn default() -> Self {
        Self {
            a1: 0.3,
            a2: 0.3,
            min_house_area_sq_m: 20.0,
        }
    }
}

impl HouseRule {
    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        if !frac(self.a1) || !frac(self.a2) || !(self.min_house_area_sq_m >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid house rule {self:?}")));
        }
        Ok(())
    }

    /// Annotations large enough to count as houses.
    pub fn eligible(&self, annotations: &[AnnotationPolygon]) -> Vec<AnnotationPolygon> {
        annotations
            .iter()
            .filter(|a| a.area_sq_m >= self.min_house_area_sq_m)
            .cloned()
            .collect()
    }

    pub fn is_house(&self, frac_box: f64, frac_house: f64) -> bool {
        frac_box >= self.a1 && frac_house >= self.a2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            other => Err(Error::InvalidParameter(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCandidate {
    pub candidate_id: usize,
    pub mbb: Mbb,
    pub label: Label,
    pub matched_annotation: Option<String>,
    pub frac_box: f64,
    pub frac_house: f64,
}

/// Area of `poly` clipped to the rotated rectangle.
pub fn intersection_area(mbb: &Mbb, poly: &AnnotationPolygon) -> Result<f64> {
    if !(mbb.len_minor > 0.0) || !(poly.area_sq_m > 0.0) {
        return Err(Error::Degenerate("zero-area shape in intersection".into()));
    }
    if !mbb.bbox().intersects(&poly.bbox()) {
        return Ok(0.0);
    }
    Ok(geom::convex_intersection_area(&poly.ring, &mbb.ring()))
}

/// Labels each box; `annotations` are expected to be pre-filtered with
/// [`HouseRule::eligible`].
///
/// A box is positive when any overlapping annotation meets both fraction
/// thresholds; the qualifying annotation with the largest intersection is
/// recorded (ties: smallest id). Negatives record the fractions of the
/// largest overlap, if any.
pub fn label_candidates(mbbs: &[(usize, Mbb)], annotations: &[AnnotationPolygon], rule: &HouseRule) -> Result<Vec<LabeledCandidate>> {
    rule.validate()?;
    mbbs.iter()
        .map(|&(candidate_id, mbb)| {
            let box_area = mbb.area();
            // (intersection, id, frac_box, frac_house)
            let mut best_pos: Option<(f64, &str, f64, f64)> = None;
            let mut best_any: Option<(f64, &str, f64, f64)> = None;
            for a in annotations {
                let inter = intersection_area(&mbb, a)?;
                if inter <= 0.0 {
                    continue;
                }
                let entry = (inter, a.id.as_str(), inter / box_area, inter / a.area_sq_m);
                let better = |cur: &Option<(f64, &str, f64, f64)>| match cur {
                    None => true,
                    Some(c) => entry.0 > c.0 || (entry.0 == c.0 && entry.1 < c.1),
                };
                if better(&best_any) {
                    best_any = Some(entry);
                }
                if rule.is_house(entry.2, entry.3) && better(&best_pos) {
                    best_pos = Some(entry);
                }
            }
            Ok(match (best_pos, best_any) {
                (Some((_, id, fb, fh)), _) => LabeledCandidate {
                    candidate_id,
                    mbb,
                    label: Label::Positive,
                    matched_annotation: Some(id.to_string()),
                    frac_box: fb,
                    frac_house: fh,
                },
                (None, any) => LabeledCandidate {
                    candidate_id,
                    mbb,
                    label: Label::Negative,
                    matched_annotation: any.map(|e| e.1.to_string()),
                    frac_box: any.map_or(0.0, |e| e.2),
                    frac_house: any.map_or(0.0, |e| e.3),
                },
            })
        })
        .collect()
}

/// Annotations with no positive candidate.
pub fn unmatched_annotations(labeled: &[LabeledCandidate], annotations: &[AnnotationPolygon]) -> Vec<String> {
    annotations
        .iter()
        .filter(|a| {
            !labeled
                .iter()
                .any(|l| l.label.is_positive() && l.matched_annotation.as_deref() == Some(a.id.as_str()))
        })
        .map(|a| a.id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac_pos: f64,
    pub train_frac_neg: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.train_frac_pos) || !open(self.train_frac_neg) {
            return Err(Error::InvalidParameter(format!("split fractions must be in (0,1): {self:?}")));
        }
        Ok(())
    }
}

/// Candidate ids per partition, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_pos: Vec<usize>,
    pub train_neg: Vec<usize>,
    pub test_pos: Vec<usize>,
    pub test_neg: Vec<usize>,
}

impl Split {
    pub fn is_train(&self, id: usize) -> bool {
        self.train_pos.binary_search(&id).is_ok() || self.train_neg.binary_search(&id).is_ok()
    }

    pub fn is_test(&self, id: usize) -> bool {
        self.test_pos.binary_search(&id).is_ok() || self.test_neg.binary_search(&id).is_ok()
    }
}

/// Shuffles each class with the seeded generator and assigns the first
/// `round(frac * n)` members to training.
pub fn split(candidates: &[LabeledCandidate], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let ids = |want: Label| -> Vec<usize> {
        candidates
            .iter()
            .filter(|c| c.label == want)
            .map(|c| c.candidate_id)
            .collect()
    };
    let (pos, neg) = (ids(Label::Positive), ids(Label::Negative));
    if pos.is_empty() {
        return Err(Error::ClassAbsent("no positive candidates".into()));
    }
    if neg.is_empty() {
        return Err(Error::ClassAbsent("no negative candidates".into()));
    }
    let mut rng = rng::seeded(spec.seed);
    let mut part = |mut v: Vec<usize>, frac: f64| {
        v.shuffle(&mut rng);
        let n_train = ((v.len() as f64) * frac).round() as usize;
        let mut test = v.split_off(n_train.min(v.len()));
        v.sort_unstable();
        test.sort_unstable();
        (v, test)
    };
    let (train_pos, test_pos) = part(pos, spec.train_frac_pos);
    let (train_neg, test_neg) = part(neg, spec.train_frac_neg);
    Ok(Split {
        train_pos,
        train_neg,
        test_pos,
        test_neg,
    })
}

pub fn write_labels_csv(path: impl AsRef<Path>, labeled: &[LabeledCandidate]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["candidate_id", "label", "matched_annotation", "frac_box", "frac_house", "area", "circumference", "aspect"])?;
    for l in labeled {
        w.write_record([
            l.candidate_id.to_string(),
            l.label.as_str().to_string(),
            l.matched_annotation.clone().unwrap_or_default(),
            l.frac_box.to_string(),
            l.frac_house.to_string(),
            l.mbb.area().to_string(),
            l.mbb.circumference().to_string(),
            l.mbb.aspect_ratio().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
