use std::path::Path;
use std::process::{Command, Output};

fn ruinscan(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruinscan"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .output()
        .expect("binary runs")
}

/// A small site that runs the whole pipeline in seconds.
const SMALL: &[&str] = &[
    "--set",
    "synth.extent_x=120",
    "--set",
    "synth.extent_y=120",
    "--set",
    "synth.houses=10",
    "--set",
    "synth.mounds=2",
    "--set",
    "synth.platforms=1",
    "--set",
    "synth.walls=2",
    "--set",
    "model.q=3",
    "--set",
    "model.epochs=60",
];

fn small(stage: &str) -> Vec<&str> {
    let mut v = SMALL.to_vec();
    v.push(stage);
    v
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = ruinscan(dir.path(), &["--set", "no.such_key=1", "config"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ruinscan(dir.path(), &["--set", "label.a1=1.5", "config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_lists_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = ruinscan(dir.path(), &["config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("label.a1=0.3"));
    assert!(text.contains("chips.size=100"));
}

#[test]
fn missing_upstream_artifact_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = ruinscan(dir.path(), &["grid"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stale_upstream_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ruinscan(dir.path(), &small("synth")).status.success());
    let mut args = SMALL.to_vec();
    args.extend(["--set", "synth.seed=2", "grid"]);
    let out = ruinscan(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different configuration"));
    // Downstream-only keys do not invalidate earlier stages.
    let mut args = SMALL.to_vec();
    args.extend(["--set", "label.a1=0.4", "grid"]);
    assert!(ruinscan(dir.path(), &args).status.success());
}

#[test]
fn small_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    let out = ruinscan(ws, &small("pipeline"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (stage, file) in [
        ("synth", "points.xyz"),
        ("synth", "annotations.geojson"),
        ("grid", "dem.f32"),
        ("localize", "local.f32"),
        ("segment", "candidates.json"),
        ("segment", "delta0_curve.csv"),
        ("label", "labels.csv"),
        ("label", "split.json"),
        ("chips", "index.csv"),
        ("train", "ensemble.json"),
        ("score", "scores.csv"),
        ("eval", "summary.json"),
        ("eval", "det.csv"),
        ("eval", "f1.csv"),
    ] {
        assert!(ws.join(stage).join(file).is_file(), "{stage}/{file}");
        assert!(ws.join(stage).join("manifest.json").is_file());
    }

    let mut r = csv::Reader::from_path(ws.join("segment/delta0_curve.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["level", "count"]);
    let rows: Vec<(u32, usize)> = r.deserialize().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 256);
    assert_eq!(rows[255], (255, 0));

    let mut r = csv::Reader::from_path(ws.join("score/scores.csv")).unwrap();
    let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(h, ["candidate_id", "s1", "s2", "s3", "min", "median", "max", "label"]);
    for rec in r.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = (1..7).map(|k| rec[k].parse().unwrap()).collect();
        assert!(v[3] <= v[4] && v[4] <= v[5]);
    }

    // Re-running a single stage with the same configuration is accepted.
    assert!(ruinscan(ws, &small("eval")).status.success());
}
