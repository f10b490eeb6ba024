//! Threshold sweeps over fused scores: F1 and detection-error-tradeoff
//! curves, equal error rate, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::label::Label;
use crate::model::{classify, FusionMode, ScoreRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn precision(&self) -> f64 {
        let d = self.tp + self.fp;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.tp + self.fn_;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    /// Harmonic mean of precision and recall; 0 when both vanish.
    ///
    /// Evaluated as `2tp / (2tp + fp + fn)`, a single correctly rounded
    /// division of the same rational.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        let two_tp = 2 * self.tp;
        two_tp as f64 / (two_tp + self.fp + self.fn_) as f64
    }

    pub fn missed_detection_rate(&self) -> f64 {
        self.fn_ as f64 / (self.tp + self.fn_) as f64
    }

    pub fn false_alarm_rate(&self) -> f64 {
        self.fp as f64 / (self.fp + self.tn) as f64
    }
}

/// Counts at one threshold.
pub fn confusion(records: &[ScoreRecord], labels: &[Label], sigma: f64, mode: FusionMode) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (r, l) in records.iter().zip(labels) {
        match (classify(r, sigma, mode), l.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// `0.00, 0.01, ..., 1.00`.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub false_alarm: f64,
    pub missed_detection: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCurves {
    pub mode: FusionMode,
    pub counts: Vec<ConfusionCounts>,
    /// `(round(100 sigma), F1)`.
    pub f1: Vec<(i64, f64)>,
    pub det: Vec<DetPoint>,
    pub eer: f64,
    /// `(sigma, F1)` at the first maximum.
    pub best_f1: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sigma_grid: Vec<f64>,
    pub test_positives: usize,
    pub test_negatives: usize,
    pub modes: Vec<ModeCurves>,
}

/// Equal error rate from DET points ordered by increasing threshold.
///
/// `missed - false_alarm` is non-decreasing along the grid; the rate is
/// interpolated linearly between the last point below zero and the first
/// at or above it. Without a sign change the point closest to zero is used.
pub fn equal_error_rate(det: &[DetPoint]) -> f64 {
    let d: Vec<f64> = det.iter().map(|p| p.missed_detection - p.false_alarm).collect();
    match d.iter().position(|&v| v >= 0.0) {
        Some(0) => (det[0].missed_detection + det[0].false_alarm) / 2.0,
        Some(k) => {
            let t = -d[k - 1] / (d[k] - d[k - 1]);
            let (a, b) = (det[k - 1], det[k]);
            a.missed_detection + t * (b.missed_detection - a.missed_detection)
        }
        None => {
            let k = (0..d.len()).min_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs())).expect("non-empty");
            (det[k].missed_detection + det[k].false_alarm) / 2.0
        }
    }
}

/// Sweeps `sigma_grid` (ascending) for every fusion mode.
pub fn sweep(records: &[ScoreRecord], labels: &[Label], sigma_grid: &[f64]) -> Result<EvalReport> {
    if sigma_grid.is_empty() {
        return Err(Error::InvalidParameter("empty threshold grid".into()));
    }
    if !sigma_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter("threshold grid must be strictly increasing".into()));
    }
    if records.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: labels.len(),
        });
    }
    let test_positives = labels.iter().filter(|l| l.is_positive()).count();
    let test_negatives = labels.len() - test_positives;
    if test_positives == 0 || test_negatives == 0 {
        return Err(Error::ClassAbsent("evaluation needs positive and negative test labels".into()));
    }
    let modes = FusionMode::ALL
        .into_iter()
        .map(|mode| {
            let counts: Vec<ConfusionCounts> = sigma_grid.iter().map(|&s| confusion(records, labels, s, mode)).collect();
            let f1: Vec<(i64, f64)> = sigma_grid
                .iter()
                .zip(&counts)
                .map(|(&s, c)| ((s * 100.0).round() as i64, c.f1()))
                .collect();
            let det: Vec<DetPoint> = sigma_grid
                .iter()
                .zip(&counts)
                .map(|(&sigma, c)| DetPoint {
                    false_alarm: c.false_alarm_rate(),
                    missed_detection: c.missed_detection_rate(),
                    sigma,
                })
                .collect();
            let best = (0..counts.len())
                .fold(0, |b, k| if counts[k].f1() > counts[b].f1() { k } else { b });
            ModeCurves {
                mode,
                eer: equal_error_rate(&det),
                best_f1: (sigma_grid[best], counts[best].f1()),
                counts,
                f1,
                det,
            }
        })
        .collect();
    Ok(EvalReport {
        sigma_grid: sigma_grid.to_vec(),
        test_positives,
        test_negatives,
        modes,
    })
}

impl EvalReport {
    pub fn mode(&self, mode: FusionMode) -> &ModeCurves {
        self.modes.iter().find(|m| m.mode == mode).expect("all modes present")
    }

    pub fn summary(&self) -> serde_json::Value {
        let mut eer = serde_json::Map::new();
        let mut best = serde_json::Map::new();
        for m in &self.modes {
            eer.insert(m.mode.as_str().into(), json!(m.eer));
            best.insert(m.mode.as_str().into(), json!({ "sigma": m.best_f1.0, "f1": m.best_f1.1 }));
        }
        json!({
            "eer": eer,
            "best_f1": best,
            "counts": { "test_positives": self.test_positives, "test_negatives": self.test_negatives },
        })
    }
}

const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Line plot with unit-square data mapped onto a fixed canvas.
fn svg_plot(title: &str, x_label: &str, y_label: &str, x_max: f64, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let px = |x: f64| pad + x / x_max * (w - 2.0 * pad);
    let py = |y: f64| h - pad - y * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0),
        px(0.0),
        py(0.0),
        px(x_max),
        py(0.0)
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#, px(f * x_max), py(0.0) + 14.0, f * x_max);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{f}</text>"#, px(0.0) - 4.0, py(f) + 3.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{name}</text>"#,
            w - pad - 70.0,
            pad + 14.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `f1.csv`, `det.csv`, `summary.json`, `f1.svg` and `det.svg`.
pub fn emit_report(report: &EvalReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    if report.sigma_grid.is_empty() {
        return Err(Error::InvalidParameter("report has an empty threshold grid".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let f1_path = dir.join("f1.csv");
    let mut w = csv::Writer::from_path(&f1_path)?;
    w.write_record(["mode", "sigma_x100", "f1"])?;
    for m in &report.modes {
        for (s, f) in &m.f1 {
            w.write_record([m.mode.as_str().to_string(), s.to_string(), f.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&f1_path, e))?;

    let det_path = dir.join("det.csv");
    let mut w = csv::Writer::from_path(&det_path)?;
    w.write_record(["mode", "false_alarm", "missed_detection", "sigma"])?;
    for m in &report.modes {
        for p in &m.det {
            w.write_record([
                m.mode.as_str().to_string(),
                p.false_alarm.to_string(),
                p.missed_detection.to_string(),
                p.sigma.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&det_path, e))?;

    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&report.summary())?;
    fs::write(&summary_path, text + "\n").map_err(|e| Error::io(&summary_path, e))?;

    let f1_series: Vec<(&str, Vec<(f64, f64)>)> = report
        .modes
        .iter()
        .map(|m| (m.mode.as_str(), m.f1.iter().map(|&(s, f)| (s as f64, f)).collect()))
        .collect();
    let x_max = report.sigma_grid.last().map_or(100.0, |s| (s * 100.0).max(1.0));
    let svg = svg_plot("F1 vs threshold", "100 sigma", "F1", x_max, &f1_series);
    let p = dir.join("f1.svg");
    fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;

    let det_series: Vec<(&str, Vec<(f64, f64)>)> = report
        .modes
        .iter()
        .map(|m| (m.mode.as_str(), m.det.iter().map(|d| (d.false_alarm, d.missed_detection)).collect()))
        .collect();
    let svg = svg_plot("Detection error tradeoff", "false alarm rate", "missed detection rate", 1.0, &det_series);
    let p = dir.join("det.svg");
    fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
    Ok(())
}
