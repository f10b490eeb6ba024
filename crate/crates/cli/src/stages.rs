//! Stage runners. Each reads its inputs from the workspace, writes its
//! outputs and manifest, and returns the counts it logged.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use ruinscan::chips::{self, SplitPart, StoredChip};
use ruinscan::eval;
use ruinscan::ingest;
use ruinscan::label::{self, Label, LabeledCandidate, Split};
use ruinscan::model::{self, Ensemble, FeatureBaseline, GeomFeatures, Sample, TestItem};
use ruinscan::raster::{self, Raster};
use ruinscan::segment::{self, Mbb};
use ruinscan::synth;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Config, STAGES};
use crate::error::CliError;
use crate::workspace::{existing, Workspace};

/// Candidate as persisted by the segment stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: usize,
    pub mbb: Mbb,
    pub level_m: f64,
    pub features: GeomFeatures,
}

fn write_json<T: Serialize>(path: PathBuf, v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: PathBuf) -> Result<T, CliError> {
    let text = fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Emits one structured log line.
pub fn event(stage: &str, name: &str, fields: Value) {
    let mut obj = json!({ "stage": stage, "event": name });
    if let (Some(o), Value::Object(extra)) = (obj.as_object_mut(), fields) {
        o.extend(extra);
    }
    log::info!(target: "ruinscan::event", "{obj}");
}

fn points_path(ws: &Workspace, cfg: &Config) -> Result<PathBuf, CliError> {
    match cfg.path("input.points") {
        Some(p) => existing(p.to_path_buf()),
        None => ws.require("synth", "points.xyz"),
    }
}

fn annotations_path(ws: &Workspace, cfg: &Config) -> Result<PathBuf, CliError> {
    match cfg.path("input.annotations") {
        Some(p) => existing(p.to_path_buf()),
        None => ws.require("synth", "annotations.geojson"),
    }
}

pub fn synth(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let site = synth::generate(&cfg.site_spec())?;
    site.write(ws.output_dir("synth")?)?;
    Ok(json!({
        "returns": site.records.len(),
        "ground_points": site.manifest.ground_points,
        "vegetation_returns": site.manifest.vegetation_returns,
        "houses": site.annotations.len(),
        "features": site.manifest.features.len(),
    }))
}

pub fn grid(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let cloud = ingest::load_xyz(points_path(ws, cfg)?)?;
    let ground = ingest::reduce_to_ground(&cloud, cfg.f64("grid.eps_xy"))?;
    let dem = raster::grid_nearest(&ground, cfg.f64("grid.resolution"), cfg.f64("grid.max_search"))?;
    raster::write_raster(ws.output_dir("grid")?.join("dem.f32"), &dem)?;
    Ok(json!({
        "returns": cloud.len(),
        "ground_points": ground.len(),
        "width": dem.width,
        "height": dem.height,
        "nodata": dem.width * dem.height - dem.valid_count(),
    }))
}

pub fn localize(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let dem = raster::read_raster(ws.require("grid", "dem.f32")?)?;
    let local = raster::localize(&dem, &cfg.localize_params())?;
    let dir = ws.output_dir("localize")?;
    raster::write_raster(dir.join("local.f32"), &local)?;
    let (lo, hi) = local.value_range().unwrap_or((0.0, 0.0));
    if hi > lo {
        raster::write_pgm(dir.join("local.pgm"), &raster::to_grayscale(&local)?)?;
    }
    Ok(json!({ "width": local.width, "height": local.height, "min": lo, "max": hi }))
}

fn load_local(ws: &Workspace) -> Result<Raster, CliError> {
    Ok(raster::read_raster(ws.require("localize", "local.f32")?)?)
}

pub fn segment(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let local = load_local(ws)?;
    let rules = cfg.prefilter();
    let mode = cfg.mbb_mode();
    let dir = ws.output_dir("segment")?;
    let (level_m, level_gray) = match cfg.get("delta0.mode") {
        "fixed" => (cfg.f64("delta0.meters"), None),
        m => {
            let window = (m == "auto_range").then(|| (cfg.f64("delta0.range_min"), cfg.f64("delta0.range_max")));
            let t = segment::tune_delta0(&local, &rules, mode, window)?;
            segment::write_curve_csv(dir.join("delta0_curve.csv"), &t.curve)?;
            let peak = t.curve.iter().find(|(g, _)| *g == t.level).map_or(0, |c| c.1);
            event("segment", "delta0", json!({ "mode": m, "level": t.level, "level_m": t.level_m, "count": peak }));
            (t.level_m, Some(t.level))
        }
    };
    let seg = segment::segment(&local, level_m, &rules, mode)?;
    let records = seg
        .candidates
        .iter()
        .map(|c| {
            Ok(CandidateRecord {
                id: c.id,
                mbb: c.mbb,
                level_m,
                features: model::extract_geom_features(c, &seg.reduced)?,
            })
        })
        .collect::<Result<Vec<_>, ruinscan::Error>>()?;
    write_json(dir.join("candidates.json"), &records)?;
    write_json(dir.join("candidates.geojson"), &segment::mbbs_geojson(&seg.candidates))?;
    write_json(dir.join("contours.geojson"), &segment::contours_geojson(&seg.reduced))?;
    Ok(json!({
        "delta0_level": level_gray,
        "delta0_m": level_m,
        "contours": seg.contour_count,
        "outermost": seg.reduced.len(),
        "boxes_before_prefilter": seg.mbb_count,
        "candidates": seg.candidates.len(),
    }))
}

fn load_candidates(ws: &Workspace) -> Result<Vec<CandidateRecord>, CliError> {
    read_json(ws.require("segment", "candidates.json")?)
}

pub fn label(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let cands = load_candidates(ws)?;
    let rule = cfg.house_rule();
    let annotations = ingest::load_annotations(annotations_path(ws, cfg)?)?;
    let eligible = rule.eligible(&annotations);
    let boxes: Vec<(usize, Mbb)> = cands.iter().map(|c| (c.id, c.mbb)).collect();
    let labeled = label::label_candidates(&boxes, &eligible, &rule)?;
    let sp = label::split(&labeled, &cfg.split_spec())?;
    let unmatched = label::unmatched_annotations(&labeled, &eligible);
    let dir = ws.output_dir("label")?;
    label::write_labels_csv(dir.join("labels.csv"), &labeled)?;
    write_json(dir.join("labeled.json"), &labeled)?;
    write_json(dir.join("split.json"), &sp)?;
    write_json(dir.join("unmatched.json"), &unmatched)?;
    let pos = labeled.iter().filter(|l| l.label.is_positive()).count();
    Ok(json!({
        "annotations": annotations.len(),
        "eligible_annotations": eligible.len(),
        "matched_annotations": eligible.len() - unmatched.len(),
        "unmatched_annotations": unmatched.len(),
        "positives": pos,
        "negatives": labeled.len() - pos,
        "train_pos": sp.train_pos.len(),
        "train_neg": sp.train_neg.len(),
        "test_pos": sp.test_pos.len(),
        "test_neg": sp.test_neg.len(),
    }))
}

pub fn chips(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let local = load_local(ws)?;
    let labeled: Vec<LabeledCandidate> = read_json(ws.require("label", "labeled.json")?)?;
    let sp: Split = read_json(ws.require("label", "split.json")?)?;
    let n = cfg.usize("chips.size");
    let plan = cfg.augment_plan();
    let train_boxes: Vec<(usize, Mbb, Label)> = labeled
        .iter()
        .filter(|l| sp.is_train(l.candidate_id))
        .map(|l| (l.candidate_id, l.mbb, l.label))
        .collect();
    let test: Vec<&LabeledCandidate> = labeled.iter().filter(|l| sp.is_test(l.candidate_id)).collect();
    let train = chips::training_chips(&local, &train_boxes, &plan, n)?;
    let test_boxes: Vec<(usize, Mbb)> = test.iter().map(|l| (l.candidate_id, l.mbb)).collect();
    let test_chips = chips::test_chips(&local, &test_boxes, n)?;
    let n_train_pos = train.iter().filter(|(_, l)| l.is_positive()).count();
    let mut stored: Vec<StoredChip> = train
        .into_iter()
        .map(|(chip, label)| StoredChip {
            chip,
            label,
            split: SplitPart::Train,
        })
        .collect();
    let n_train = stored.len();
    stored.extend(test_chips.into_iter().zip(&test).map(|(chip, l)| StoredChip {
        chip,
        label: l.label,
        split: SplitPart::Test,
    }));
    let dir = ws.stage_dir("chips");
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    chips::write_chip_store(&dir, &stored)?;
    Ok(json!({
        "train_chips": n_train,
        "train_pos_chips": n_train_pos,
        "train_neg_chips": n_train - n_train_pos,
        "test_chips": stored.len() - n_train,
    }))
}

fn load_store(ws: &Workspace) -> Result<Vec<StoredChip>, CliError> {
    ws.require("chips", "index.csv")?;
    Ok(chips::read_chip_store(ws.stage_dir("chips"))?)
}

fn features_by_id(ws: &Workspace) -> Result<HashMap<usize, GeomFeatures>, CliError> {
    Ok(load_candidates(ws)?.into_iter().map(|c| (c.id, c.features)).collect())
}

fn feature_of(map: &HashMap<usize, GeomFeatures>, id: usize) -> Result<GeomFeatures, CliError> {
    map.get(&id)
        .copied()
        .ok_or_else(|| CliError::Runtime(format!("chip refers to unknown candidate {id}")))
}

pub fn train(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let store = load_store(ws)?;
    let feats = features_by_id(ws)?;
    let samples = store
        .iter()
        .filter(|s| s.split == SplitPart::Train)
        .map(|s| {
            Ok(Sample {
                chip: &s.chip,
                features: feature_of(&feats, s.chip.candidate_id)?,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let scorer = cfg.scorer_spec();
    let ensemble = model::train_ensemble(&samples, &scorer, &cfg.ensemble_spec())?;
    let dir = ws.output_dir("train")?;
    ensemble.save(dir.join("ensemble.json"))?;

    // Feature-only baseline, one example per candidate.
    let per_candidate = |part: SplitPart| {
        let mut v: Vec<(usize, Label)> = store
            .iter()
            .filter(|s| s.split == part && s.chip.widen_step == 0 && s.chip.rotation == 0)
            .map(|s| (s.chip.candidate_id, s.label))
            .collect();
        v.dedup();
        v
    };
    let (tr, te) = (per_candidate(SplitPart::Train), per_candidate(SplitPart::Test));
    let tr_f = tr.iter().map(|(id, _)| feature_of(&feats, *id)).collect::<Result<Vec<_>, _>>()?;
    let tr_l: Vec<Label> = tr.iter().map(|(_, l)| *l).collect();
    let baseline = FeatureBaseline::train(&tr_f, &tr_l, &scorer)?;
    let te_s = te
        .iter()
        .map(|(id, _)| feature_of(&feats, *id).map(|f| baseline.score(&f)))
        .collect::<Result<Vec<_>, _>>()?;
    let te_l: Vec<Label> = te.iter().map(|(_, l)| *l).collect();
    let auc = model::roc_auc(&te_s, &te_l).ok();
    write_json(dir.join("baseline.json"), &json!({ "model": baseline, "test_roc_auc": auc }))?;
    Ok(json!({ "models": ensemble.models.len(), "train_chips": samples.len(), "baseline_test_roc_auc": auc }))
}

pub fn score(ws: &Workspace, _cfg: &Config) -> Result<Value, CliError> {
    let ensemble = Ensemble::load(ws.require("train", "ensemble.json")?)?;
    let store = load_store(ws)?;
    let feats = features_by_id(ws)?;
    let items = store
        .iter()
        .filter(|s| s.split == SplitPart::Test)
        .map(|s| {
            Ok(TestItem {
                chip: &s.chip,
                features: feature_of(&feats, s.chip.candidate_id)?,
                label: Some(s.label),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let records = model::score(&ensemble.models, &items)?;
    model::write_scores_csv(ws.output_dir("score")?.join("scores.csv"), &records)?;
    Ok(json!({ "records": records.len() }))
}

pub fn evaluate(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let records = model::read_scores_csv(ws.require("score", "scores.csv")?)?;
    let labels = records
        .iter()
        .map(|r| r.label.ok_or_else(|| CliError::Runtime(format!("score record {} has no label", r.candidate_id))))
        .collect::<Result<Vec<_>, _>>()?;
    let report = eval::sweep(&records, &labels, &cfg.sigma_grid())?;
    eval::emit_report(&report, ws.output_dir("eval")?)?;
    Ok(report.summary())
}

/// Runs one stage: upstream check, work, manifest, timing log.
pub fn run_stage(name: &str, ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    if !STAGES.contains(&name) {
        return Err(CliError::Validation(format!("unknown stage {name:?}")));
    }
    cfg.validate()?;
    ws.check_upstream(name, cfg)?;
    let start = Instant::now();
    event(name, "start", json!({}));
    let counts = match name {
        "synth" => synth(ws, cfg),
        "grid" => grid(ws, cfg),
        "localize" => localize(ws, cfg),
        "segment" => segment(ws, cfg),
        "label" => label(ws, cfg),
        "chips" => chips(ws, cfg),
        "train" => train(ws, cfg),
        "score" => score(ws, cfg),
        _ => evaluate(ws, cfg),
    }?;
    ws.write_manifest(name, cfg, counts.clone())?;
    event(name, "done", json!({ "elapsed_ms": start.elapsed().as_millis() as u64, "counts": counts }));
    Ok(counts)
}

/// Every stage in order; `synth` is skipped when real points are supplied.
pub fn run_pipeline(ws: &Workspace, cfg: &Config) -> Result<Value, CliError> {
    let mut last = Value::Null;
    for stage in STAGES {
        if stage == "synth" && cfg.path("input.points").is_some() {
            continue;
        }
        last = run_stage(stage, ws, cfg)?;
    }
    Ok(last)
}
