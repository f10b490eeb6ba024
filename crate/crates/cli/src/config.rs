//! Flat `key = value` configuration with dotted keys.
//!
//! Every key has a default and a value kind; unknown keys and malformed
//! values are rejected when set. Values are stored in canonical form so the
//! per-stage hashes do not depend on how a number was spelled.

use std::collections::BTreeMap;
use std::path::Path;

use ruinscan::chips::AugmentPlan;
use ruinscan::label::{HouseRule, SplitSpec};
use ruinscan::model::{EnsembleSpec, ScorerKind, ScorerSpec};
use ruinscan::raster::{LocalizeParams, Rolloff};
use ruinscan::segment::{MbbMode, PrefilterRules};
use ruinscan::synth::{DecoySpec, HouseSpec, SiteSpec};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy)]
enum Kind {
    F64 { min: f64, max: f64 },
    Count,
    Seed,
    Bool,
    Choice(&'static [&'static str]),
    F64List,
    Path,
}

struct KeySpec {
    key: &'static str,
    default: &'static str,
    kind: Kind,
}

const POS: Kind = Kind::F64 { min: f64::MIN_POSITIVE, max: f64::INFINITY };
const NONNEG: Kind = Kind::F64 { min: 0.0, max: f64::INFINITY };
const FRAC: Kind = Kind::F64 { min: 0.0, max: 1.0 };

macro_rules! keys {
    ($( $k:literal = $d:literal : $kind:expr ),* $(,)?) => {
        &[ $( KeySpec { key: $k, default: $d, kind: $kind } ),* ]
    };
}

const KEYS: &[KeySpec] = keys![
    "input.points" = "" : Kind::Path,
    "input.annotations" = "" : Kind::Path,
    "synth.seed" = "1" : Kind::Seed,
    "synth.extent_x" = "500" : POS,
    "synth.extent_y" = "500" : POS,
    "synth.point_density" = "11.11111111111111" : POS,
    "synth.jitter" = "0.15" : Kind::F64 { min: 0.0, max: 0.49 },
    "synth.houses" = "50" : Kind::Count,
    "synth.house_side_min" = "4" : POS,
    "synth.house_side_max" = "9" : POS,
    "synth.house_min_area" = "20" : POS,
    "synth.wall_height_min" = "0.4" : POS,
    "synth.wall_height_max" = "0.5" : POS,
    "synth.wall_thickness" = "0.5" : POS,
    "synth.entrance_prob" = "0.3" : FRAC,
    "synth.mounds" = "6" : Kind::Count,
    "synth.platforms" = "3" : Kind::Count,
    "synth.walls" = "5" : Kind::Count,
    "synth.terrain" = "true" : Kind::Bool,
    "synth.spike_rate" = "0.02" : NONNEG,
    "synth.noise_sigma" = "0.05" : NONNEG,
    "grid.resolution" = "0.3" : POS,
    "grid.max_search" = "3" : POS,
    "grid.eps_xy" = "0.000001" : POS,
    "localize.lambda" = "3" : POS,
    "localize.rolloff" = "gaussian" : Kind::Choice(&["gaussian", "ideal"]),
    "delta0.mode" = "auto" : Kind::Choice(&["auto", "auto_range", "fixed"]),
    "delta0.meters" = "0.3" : Kind::F64 { min: 0.2, max: 0.5 },
    "delta0.range_min" = "0.2" : Kind::F64 { min: 0.2, max: 0.5 },
    "delta0.range_max" = "0.5" : Kind::F64 { min: 0.2, max: 0.5 },
    "segment.mbb" = "min_area" : Kind::Choice(&["min_area", "axis_aligned"]),
    "prefilter.min_area" = "3" : POS,
    "prefilter.max_aspect" = "10" : POS,
    "prefilter.min_circumference" = "10" : POS,
    "prefilter.max_circumference" = "200" : POS,
    "label.a1" = "0.3" : FRAC,
    "label.a2" = "0.3" : FRAC,
    "label.min_house_area" = "20" : NONNEG,
    "split.seed" = "1" : Kind::Seed,
    "split.train_frac_pos" = "0.7333333333333333" : FRAC,
    "split.train_frac_neg" = "0.605157593123209" : FRAC,
    "chips.size" = "100" : Kind::Count,
    "chips.widen_steps" = "0,0.3333333333333333,0.6666666666666666,1,1.3333333333333333,1.6666666666666667" : Kind::F64List,
    "chips.augment_positives" = "true" : Kind::Bool,
    "chips.augment_negatives" = "false" : Kind::Bool,
    "model.kind" = "reference_linear" : Kind::Choice(&["reference_linear", "external"]),
    "model.downsample" = "20" : Kind::Count,
    "model.learning_rate" = "0.5" : POS,
    "model.epochs" = "300" : Kind::Count,
    "model.l2" = "0.001" : POS,
    "model.q" = "10" : Kind::Count,
    "model.subsample" = "0.9" : FRAC,
    "model.seed" = "0" : Kind::Seed,
    "eval.sigma_step" = "0.01" : Kind::F64 { min: 1e-6, max: 1.0 },
];

/// Pipeline stages in data-flow order.
pub const STAGES: [&str; 9] = ["synth", "grid", "localize", "segment", "label", "chips", "train", "score", "eval"];

/// Key prefixes owned by each stage.
fn stage_prefixes(stage: &str) -> &'static [&'static str] {
    match stage {
        "synth" => &["synth."],
        "grid" => &["input.points", "grid."],
        "localize" => &["localize."],
        "segment" => &["delta0.", "segment.", "prefilter."],
        "label" => &["input.annotations", "label.", "split."],
        "chips" => &["chips."],
        "train" => &["model."],
        "score" => &[],
        "eval" => &["eval."],
        _ => &[],
    }
}

fn canonical(spec: &KeySpec, raw: &str) -> Result<String, CliError> {
    let raw = raw.trim();
    let bad = |why: String| CliError::Validation(format!("{}: {why}", spec.key));
    let float = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(format!("not a finite number: {s:?}")))
    };
    Ok(match spec.kind {
        Kind::F64 { min, max } => {
            let v = float(raw)?;
            if v < min || v > max {
                return Err(bad(format!("{v} outside [{min}, {max}]")));
            }
            v.to_string()
        }
        Kind::Count => raw
            .parse::<usize>()
            .map_err(|_| bad(format!("not a non-negative integer: {raw:?}")))?
            .to_string(),
        Kind::Seed => raw.parse::<u64>().map_err(|_| bad(format!("not a 64-bit seed: {raw:?}")))?.to_string(),
        Kind::Bool => match raw {
            "true" | "1" | "yes" => "true".into(),
            "false" | "0" | "no" => "false".into(),
            _ => return Err(bad(format!("not a boolean: {raw:?}"))),
        },
        Kind::Choice(options) => {
            if !options.contains(&raw) {
                return Err(bad(format!("expected one of {options:?}, got {raw:?}")));
            }
            raw.into()
        }
        Kind::F64List => raw
            .split(',')
            .map(|s| float(s).map(|v| v.to_string()))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        Kind::Path => raw.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|k| (k.key, canonical(k, k.default).expect("defaults are valid")))
                .collect(),
        }
    }
}

impl Config {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|k| k.key)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let spec = KEYS
            .iter()
            .find(|k| k.key == key)
            .ok_or_else(|| CliError::Validation(format!("unknown config key {key:?}")))?;
        let v = canonical(spec, value)?;
        self.values.insert(spec.key, v);
        Ok(())
    }

    /// Parses one `key=value` assignment.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v)
    }

    /// Applies a config file: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_assignment(line)
                .map_err(|e| CliError::Validation(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingArtifact(path.to_path_buf()))?;
        self.apply_text(&text)
    }

    /// Sets every seed key.
    pub fn set_seed(&mut self, seed: u64) {
        for k in ["synth.seed", "split.seed", "model.seed"] {
            self.values.insert(k, seed.to_string());
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated on set")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).parse().expect("validated on set")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).parse().expect("validated on set")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        let v = self.get(key);
        (!v.is_empty()).then(|| Path::new(v))
    }

    /// Serialized `key=value` lines in key order.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Stages whose outputs `stage` consumes, nearest first.
    pub fn upstream(&self, stage: &str) -> Vec<&'static str> {
        let pos = STAGES.iter().position(|s| *s == stage).unwrap_or(0);
        STAGES[..pos]
            .iter()
            .rev()
            .copied()
            .filter(|s| *s != "synth" || self.path("input.points").is_none())
            .collect()
    }

    /// Hash over the keys of `stage` and of every stage upstream of it.
    pub fn stage_hash(&self, stage: &str) -> String {
        let mut scope = self.upstream(stage);
        scope.push(STAGES.iter().copied().find(|s| *s == stage).unwrap_or("synth"));
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if scope.iter().any(|s| stage_prefixes(s).iter().any(|p| k.starts_with(p))) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Cross-field checks plus every typed view.
    pub fn validate(&self) -> Result<(), CliError> {
        self.site_spec().validate()?;
        self.prefilter().validate()?;
        self.house_rule().validate()?;
        self.split_spec().validate()?;
        self.augment_plan().validate()?;
        self.scorer_spec().validate(self.usize("chips.size"))?;
        self.ensemble_spec().validate()?;
        if self.f64("delta0.range_min") > self.f64("delta0.range_max") {
            return Err(CliError::Validation("delta0.range_min exceeds delta0.range_max".into()));
        }
        if self.usize("chips.size") < 8 {
            return Err(CliError::Validation("chips.size: must be at least 8".into()));
        }
        Ok(())
    }

    pub fn site_spec(&self) -> SiteSpec {
        let base = SiteSpec::default();
        SiteSpec {
            extent_m: (self.f64("synth.extent_x"), self.f64("synth.extent_y")),
            point_density: self.f64("synth.point_density"),
            jitter_frac: self.f64("synth.jitter"),
            houses: HouseSpec {
                count: self.usize("synth.houses"),
                side_range_m: (self.f64("synth.house_side_min"), self.f64("synth.house_side_max")),
                min_area_sq_m: self.f64("synth.house_min_area"),
                wall_height_m: (self.f64("synth.wall_height_min"), self.f64("synth.wall_height_max")),
                wall_thickness_m: self.f64("synth.wall_thickness"),
                entrance_prob: self.f64("synth.entrance_prob"),
                ..base.houses
            },
            decoys: DecoySpec {
                mounds: self.usize("synth.mounds"),
                platforms: self.usize("synth.platforms"),
                walls: self.usize("synth.walls"),
            },
            terrain: if self.bool("synth.terrain") { base.terrain } else { vec![] },
            vegetation_spike_rate: self.f64("synth.spike_rate"),
            noise_sigma_m: self.f64("synth.noise_sigma"),
            seed: self.u64("synth.seed"),
            ..base
        }
    }

    pub fn localize_params(&self) -> LocalizeParams {
        LocalizeParams {
            lambda_m: self.f64("localize.lambda"),
            rolloff: self.get("localize.rolloff").parse::<Rolloff>().expect("validated choice"),
        }
    }

    pub fn mbb_mode(&self) -> MbbMode {
        self.get("segment.mbb").parse().expect("validated choice")
    }

    pub fn prefilter(&self) -> PrefilterRules {
        PrefilterRules {
            min_area_sq_m: self.f64("prefilter.min_area"),
            max_aspect: self.f64("prefilter.max_aspect"),
            min_circumference_m: self.f64("prefilter.min_circumference"),
            max_circumference_m: self.f64("prefilter.max_circumference"),
        }
    }

    pub fn house_rule(&self) -> HouseRule {
        HouseRule {
            a1: self.f64("label.a1"),
            a2: self.f64("label.a2"),
            min_house_area_sq_m: self.f64("label.min_house_area"),
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_frac_pos: self.f64("split.train_frac_pos"),
            train_frac_neg: self.f64("split.train_frac_neg"),
            seed: self.u64("split.seed"),
        }
    }

    pub fn augment_plan(&self) -> AugmentPlan {
        AugmentPlan {
            widen_steps: self.get("chips.widen_steps").split(',').map(|s| s.parse().expect("validated list")).collect(),
            augment_positives: self.bool("chips.augment_positives"),
            augment_negatives: self.bool("chips.augment_negatives"),
        }
    }

    pub fn scorer_spec(&self) -> ScorerSpec {
        ScorerSpec {
            kind: self.get("model.kind").parse::<ScorerKind>().expect("validated choice"),
            input_downsample: self.usize("model.downsample"),
            learning_rate: self.f64("model.learning_rate"),
            epochs: self.usize("model.epochs"),
            l2: self.f64("model.l2"),
        }
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec::with_seeds(self.usize("model.q"), self.f64("model.subsample"), self.u64("model.seed"))
    }

    pub fn sigma_grid(&self) -> Vec<f64> {
        let step = self.f64("eval.sigma_step");
        let n = (1.0 / step + 1e-9).floor() as usize;
        (0..=n).map(|i| (i as f64 * step * 1e12).round() / 1e12).collect()
    }
}
