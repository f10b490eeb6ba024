//! Ensemble scoring of candidate chips.
//!
//! The reference scorer is a logistic model over the block-averaged chip and
//! five standardized box features, trained by full-batch gradient descent.
//! `q` such models are trained on random subsamples and their scores fused
//! by median (robust), minimum (pessimistic) and maximum (optimistic).

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chips::Chip;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::rng;
use crate::segment::{Candidate, Contour};

pub const N_GEOM_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    ReferenceLinear,
    /// Scores come from a caller-supplied [`Scorer`]; nothing is trained here.
    External,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference_linear" => Ok(ScorerKind::ReferenceLinear),
            "external" => Ok(ScorerKind::External),
            other => Err(Error::InvalidParameter(format!("unknown scorer kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    /// Side of the block-averaged input grid.
    pub input_downsample: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        Self {
            kind: ScorerKind::ReferenceLinear,
            input_downsample: 20,
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-3,
        }
    }
}

impl ScorerSpec {
    pub fn validate(&self, chip_size: usize) -> Result<()> {
        if self.input_downsample == 0 || chip_size % self.input_downsample != 0 {
            return Err(Error::InvalidParameter(format!(
                "downsample {} does not divide chip size {chip_size}",
                self.input_downsample
            )));
        }
        if !(self.learning_rate > 0.0) || self.epochs == 0 || !(self.l2 > 0.0) {
            return Err(Error::InvalidParameter(format!("training hyperparameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub q: usize,
    pub subsample_frac: f64,
    /// One subsample seed per model.
    pub seeds: Vec<u64>,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self::with_seeds(10, 0.9, 0)
    }
}

impl EnsembleSpec {
    /// Model `i` gets seed `base + i`.
    pub fn with_seeds(q: usize, subsample_frac: f64, base: u64) -> Self {
        Self {
            q,
            subsample_frac,
            seeds: (0..q as u64).map(|i| base.wrapping_add(i)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || !(self.subsample_frac > 0.0 && self.subsample_frac <= 1.0) || self.seeds.len() != self.q {
            return Err(Error::InvalidParameter(format!("invalid ensemble spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomFeatures {
    pub area_sq_m: f64,
    pub circumference_m: f64,
    pub aspect: f64,
    /// Contour area over box area.
    pub fill_ratio: f64,
    pub contour_count: usize,
}

impl GeomFeatures {
    pub fn to_array(&self) -> [f64; N_GEOM_FEATURES] {
        [self.area_sq_m, self.circumference_m, self.aspect, self.fill_ratio, self.contour_count as f64]
    }
}

/// Box features of a candidate; `contour_count` counts contours of
/// `reduced` whose test vertex lies in the candidate's box.
pub fn extract_geom_features(candidate: &Candidate, reduced: &[Contour]) -> Result<GeomFeatures> {
    let m = &candidate.mbb;
    let area = m.area();
    let contour_area = candidate.contour.area();
    if !(area > 0.0) || !(contour_area > 0.0) {
        return Err(Error::Degenerate(format!("candidate {} has zero area", candidate.id)));
    }
    let slack = 1e-9 * (1.0 + m.len_major);
    let contour_count = reduced
        .iter()
        .filter(|c| m.contains(c.test_vertex(), slack))
        .count()
        .max(1);
    Ok(GeomFeatures {
        area_sq_m: area,
        circumference_m: m.circumference(),
        aspect: m.aspect_ratio(),
        fill_ratio: (contour_area / area).min(1.0),
        contour_count,
    })
}

/// Anything that maps a chip and its box features to a score in `[0, 1]`.
pub trait Scorer: Sync {
    fn chip_size(&self) -> usize;
    fn score(&self, chip: &Chip, features: &GeomFeatures) -> f64;
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn block_average(chip: &Chip, d: usize, out: &mut Vec<f64>) {
    let b = chip.n / d;
    let inv = 1.0 / (b * b) as f64;
    for bi in 0..d {
        for bj in 0..d {
            let mut s = 0.0;
            for i in bi * b..(bi + 1) * b {
                let row = &chip.pixels[i * chip.n + bj * b..i * chip.n + (bj + 1) * b];
                s += row.iter().sum::<f64>();
            }
            out.push(s * inv);
        }
    }
}

/// Training matrix with 0/1 targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

/// Mean binary cross-entropy plus `l2/2 * |w|^2` (bias unpenalized), and
/// its gradient. `params` holds the weights followed by the bias.
pub fn objective(params: &[f64], design: &Design, l2: f64) -> (f64, Vec<f64>) {
    let dim = params.len() - 1;
    let (w, b) = (&params[..dim], params[dim]);
    let mut grad = vec![0.0; dim + 1];
    let mut loss = 0.0;
    for (x, &y) in design.rows.iter().zip(&design.targets) {
        let z = b + x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad[..dim].iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[dim] += r;
    }
    let inv = 1.0 / design.rows.len() as f64;
    loss *= inv;
    grad.iter_mut().for_each(|g| *g *= inv);
    for (g, wi) in grad[..dim].iter_mut().zip(w) {
        *g += l2 * wi;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub chip_size: usize,
    pub downsample: usize,
    pub feature_mean: [f64; N_GEOM_FEATURES],
    pub feature_std: [f64; N_GEOM_FEATURES],
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    fn input(&self, chip: &Chip, f: &GeomFeatures) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.downsample * self.downsample + N_GEOM_FEATURES);
        block_average(chip, self.downsample, &mut x);
        for ((v, m), s) in f.to_array().iter().zip(&self.feature_mean).zip(&self.feature_std) {
            x.push((v - m) / s);
        }
        x
    }

    pub fn logit(&self, chip: &Chip, f: &GeomFeatures) -> f64 {
        self.bias + self.input(chip, f).iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Scorer for LinearModel {
    fn chip_size(&self) -> usize {
        self.chip_size
    }

    fn score(&self, chip: &Chip, features: &GeomFeatures) -> f64 {
        sigmoid(self.logit(chip, features))
    }
}

/// Training example: a chip, its candidate's box features and its class.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub chip: &'a Chip,
    pub features: GeomFeatures,
    pub label: Label,
}

fn standardization(samples: &[&Sample]) -> ([f64; N_GEOM_FEATURES], [f64; N_GEOM_FEATURES]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; N_GEOM_FEATURES];
    let mut std = [0.0; N_GEOM_FEATURES];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.features.to_array()) {
            *m += v / n;
        }
    }
    for s in samples {
        for ((sd, m), v) in std.iter_mut().zip(&mean).zip(s.features.to_array()) {
            *sd += (v - m).powi(2) / n;
        }
    }
    for sd in &mut std {
        *sd = if *sd > 0.0 { sd.sqrt() } else { 1.0 };
    }
    (mean, std)
}

/// Gradient descent from zero weights on the given samples.
pub fn train_linear(samples: &[&Sample], spec: &ScorerSpec) -> Result<LinearModel> {
    let Some(first) = samples.first() else {
        return Err(Error::Empty("no training samples".into()));
    };
    let n_pos = samples.iter().filter(|s| s.label.is_positive()).count();
    if n_pos == 0 || n_pos == samples.len() {
        return Err(Error::ClassAbsent("training set holds a single class".into()));
    }
    let chip_size = first.chip.n;
    spec.validate(chip_size)?;
    if let Some(s) = samples.iter().find(|s| s.chip.n != chip_size) {
        return Err(Error::DimensionMismatch {
            expected: chip_size,
            got: s.chip.n,
        });
    }
    let (feature_mean, feature_std) = standardization(samples);
    let d = spec.input_downsample;
    let mut model = LinearModel {
        chip_size,
        downsample: d,
        feature_mean,
        feature_std,
        weights: vec![0.0; d * d + N_GEOM_FEATURES],
        bias: 0.0,
    };
    let design = Design {
        rows: samples.iter().map(|s| model.input(s.chip, &s.features)).collect(),
        targets: samples.iter().map(|s| if s.label.is_positive() { 1.0 } else { 0.0 }).collect(),
    };
    let mut params = vec![0.0; model.weights.len() + 1];
    for epoch in 0..spec.epochs {
        let (loss, grad) = objective(&params, &design, spec.l2);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= spec.learning_rate * g;
        }
    }
    model.bias = params.pop().expect("bias");
    model.weights = params;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub scorer: ScorerSpec,
    pub ensemble: EnsembleSpec,
    pub models: Vec<LinearModel>,
}

impl Ensemble {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Trains `q` reference models, model `i` on a uniform subsample of
/// `round(frac * n)` samples shuffled with seed `ens.seeds[i]`.
pub fn train_ensemble(samples: &[Sample], spec: &ScorerSpec, ens: &EnsembleSpec) -> Result<Ensemble> {
    ens.validate()?;
    if spec.kind == ScorerKind::External {
        return Err(Error::InvalidParameter("external scorers are not trained by this crate".into()));
    }
    let n_pos = samples.iter().filter(|s| s.label.is_positive()).count();
    if n_pos == 0 || n_pos == samples.len() {
        return Err(Error::ClassAbsent("training chips hold a single class".into()));
    }
    let take = ((samples.len() as f64 * ens.subsample_frac).round() as usize).clamp(1, samples.len());
    let models = ens
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut idx: Vec<usize> = (0..samples.len()).collect();
            idx.shuffle(&mut rng::seeded(seed));
            idx.truncate(take);
            idx.sort_unstable();
            let subset: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            train_linear(&subset, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        scorer: spec.clone(),
        ensemble: ens.clone(),
        models,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Robust,
    Pessimistic,
    Optimistic,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Robust, FusionMode::Pessimistic, FusionMode::Optimistic];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Robust => "robust",
            FusionMode::Pessimistic => "pessimistic",
            FusionMode::Optimistic => "optimistic",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown fusion mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub candidate_id: usize,
    pub per_model: Vec<f64>,
    pub pessimistic: f64,
    pub robust: f64,
    pub optimistic: f64,
    pub label: Option<Label>,
}

impl ScoreRecord {
    pub fn from_scores(candidate_id: usize, per_model: Vec<f64>, label: Option<Label>) -> Self {
        let (pessimistic, robust, optimistic) = fuse(&per_model);
        Self {
            candidate_id,
            per_model,
            pessimistic,
            robust,
            optimistic,
            label,
        }
    }

    pub fn fused(&self, mode: FusionMode) -> f64 {
        match mode {
            FusionMode::Robust => self.robust,
            FusionMode::Pessimistic => self.pessimistic,
            FusionMode::Optimistic => self.optimistic,
        }
    }
}

/// `(min, median, max)`; an even count takes the mean of the middle two.
pub fn fuse(scores: &[f64]) -> (f64, f64, f64) {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 0 { (s[n / 2 - 1] + s[n / 2]) / 2.0 } else { s[n / 2] };
    (s[0], median, s[n - 1])
}

/// House decision: fused score strictly above `sigma`.
pub fn classify(record: &ScoreRecord, sigma: f64, mode: FusionMode) -> bool {
    record.fused(mode) > sigma
}

/// Test item: a chip (one per candidate), its box features and, if known,
/// its label.
#[derive(Debug, Clone)]
pub struct TestItem<'a> {
    pub chip: &'a Chip,
    pub features: GeomFeatures,
    pub label: Option<Label>,
}

/// Scores every item with every scorer, in item order.
pub fn score<S: Scorer>(scorers: &[S], items: &[TestItem]) -> Result<Vec<ScoreRecord>> {
    if scorers.is_empty() {
        return Err(Error::Empty("no scorers".into()));
    }
    for s in scorers {
        if let Some(it) = items.iter().find(|it| it.chip.n != s.chip_size()) {
            return Err(Error::DimensionMismatch {
                expected: s.chip_size(),
                got: it.chip.n,
            });
        }
    }
    Ok(items
        .par_iter()
        .map(|it| {
            let per: Vec<f64> = scorers.iter().map(|s| s.score(it.chip, &it.features).clamp(0.0, 1.0)).collect();
            ScoreRecord::from_scores(it.chip.candidate_id, per, it.label)
        })
        .collect())
}

pub fn write_scores_csv(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    let path = path.as_ref();
    let q = records.first().map_or(0, |r| r.per_model.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["candidate_id".to_string()];
    header.extend((1..=q).map(|i| format!("s{i}")));
    header.extend(["min", "median", "max", "label"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.candidate_id.to_string()];
        row.extend(r.per_model.iter().map(|s| s.to_string()));
        row.extend([r.pessimistic, r.robust, r.optimistic].map(|s| s.to_string()));
        row.push(r.label.map_or("", |l| l.as_str()).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| Error::Parse { line: i + 2, message: m };
        if rec.len() < 5 {
            return Err(bad("too few columns".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let candidate_id = rec[0].parse().map_err(|e| bad(format!("candidate id: {e}")))?;
        let q = rec.len() - 5;
        let per_model = (1..=q).map(|k| num(&rec[k])).collect::<Result<Vec<_>>>()?;
        let label = match &rec[rec.len() - 1] {
            "" => None,
            s => Some(s.parse()?),
        };
        out.push(ScoreRecord {
            candidate_id,
            per_model,
            pessimistic: num(&rec[q + 1])?,
            robust: num(&rec[q + 2])?,
            optimistic: num(&rec[q + 3])?,
            label,
        });
    }
    Ok(out)
}

/// Logistic classifier on the standardized box features alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBaseline {
    pub mean: [f64; N_GEOM_FEATURES],
    pub std: [f64; N_GEOM_FEATURES],
    pub weights: [f64; N_GEOM_FEATURES],
    pub bias: f64,
}

impl FeatureBaseline {
    pub fn train(features: &[GeomFeatures], labels: &[Label], spec: &ScorerSpec) -> Result<Self> {
        let n_pos = labels.iter().filter(|l| l.is_positive()).count();
        if features.len() != labels.len() || n_pos == 0 || n_pos == labels.len() {
            return Err(Error::ClassAbsent("baseline needs both classes".into()));
        }
        let dummy = Chip {
            n: 0,
            pixels: vec![],
            candidate_id: 0,
            widen_step: 0,
            rotation: 0,
        };
        let samples: Vec<Sample> = features
            .iter()
            .zip(labels)
            .map(|(&f, &label)| Sample {
                chip: &dummy,
                features: f,
                label,
            })
            .collect();
        let refs: Vec<&Sample> = samples.iter().collect();
        let (mean, std) = standardization(&refs);
        let design = Design {
            rows: features
                .iter()
                .map(|f| f.to_array().iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s).collect())
                .collect(),
            targets: labels.iter().map(|l| if l.is_positive() { 1.0 } else { 0.0 }).collect(),
        };
        let mut params = vec![0.0; N_GEOM_FEATURES + 1];
        for epoch in 0..spec.epochs {
            let (loss, grad) = objective(&params, &design, spec.l2);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= spec.learning_rate * g;
            }
        }
        let mut weights = [0.0; N_GEOM_FEATURES];
        weights.copy_from_slice(&params[..N_GEOM_FEATURES]);
        Ok(Self {
            mean,
            std,
            weights,
            bias: params[N_GEOM_FEATURES],
        })
    }

    pub fn score(&self, f: &GeomFeatures) -> f64 {
        let z = f
            .to_array()
            .iter()
            .enumerate()
            .map(|(k, v)| self.weights[k] * (v - self.mean[k]) / self.std[k])
            .sum::<f64>();
        sigmoid(self.bias + z)
    }
}

/// Area under the ROC curve by the rank-sum statistic (ties count half).
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| l.is_positive()).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| !l.is_positive()).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::ClassAbsent("ROC area needs both classes".into()));
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}
