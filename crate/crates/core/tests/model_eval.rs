use proptest::prelude::*;
use rand::Rng;
use ruinscan::chips::Chip;
use ruinscan::eval::{confusion, default_sigma_grid, sweep, ConfusionCounts};
use ruinscan::label::Label;
use ruinscan::model::{classify, fuse, objective, roc_auc, score, train_ensemble, Design, EnsembleSpec, FusionMode, GeomFeatures, Sample, ScoreRecord, ScorerSpec, TestItem};
use ruinscan::rng::seeded;

fn random_design(rng: &mut impl Rng, rows: usize, dim: usize) -> Design {
    Design {
        rows: (0..rows).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
        targets: (0..rows).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect(),
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = seeded(41);
    let dim = 405;
    let design = random_design(&mut rng, 60, dim);
    let params: Vec<f64> = (0..=dim).map(|_| rng.random_range(-0.3..0.3)).collect();
    let l2 = 1e-3;
    let (_, grad) = objective(&params, &design, l2);
    let h = 1e-5;
    let mut coords: Vec<usize> = (0..9).map(|_| rng.random_range(0..dim)).collect();
    coords.push(dim); // the bias
    for k in coords {
        let mut p = params.clone();
        p[k] += h;
        let up = objective(&p, &design, l2).0;
        p[k] -= 2.0 * h;
        let down = objective(&p, &design, l2).0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-8);
        assert!(rel <= 1e-4, "coordinate {k}: analytic {} numeric {numeric} rel {rel}", grad[k]);
    }
}

/// F1 from precision and recall as exact fractions, reduced and converted
/// once. `P = tp/(tp+fp)`, `R = tp/(tp+fn)`, `F1 = 2PR/(P+R)`.
fn f1_oracle(c: &ConfusionCounts) -> f64 {
    let (tp, fp, fn_) = (c.tp as u128, c.fp as u128, c.fn_ as u128);
    if tp == 0 {
        return 0.0;
    }
    let (pd, rd) = (tp + fp, tp + fn_);
    // 2PR = 2 tp^2 / (pd rd); P + R = tp (pd + rd) / (pd rd).
    let num = 2 * tp * tp;
    let den = tp * (pd + rd);
    let g = gcd(num, den);
    let (num, den) = (num / g, den / g);
    assert!(num < 1 << 53 && den < 1 << 53);
    num as f64 / den as f64
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn f1_matches_rational_oracle_on_100_matrices() {
    let mut rng = seeded(42);
    for k in 0..100 {
        let c = ConfusionCounts {
            tp: rng.random_range(0..2000),
            fp: rng.random_range(0..2000),
            tn: rng.random_range(0..2000),
            fn_: rng.random_range(0..2000),
        };
        assert_eq!(c.f1().to_bits(), f1_oracle(&c).to_bits(), "matrix {k}: {c:?}");
    }
    let none = ConfusionCounts { tp: 0, fp: 0, tn: 5, fn_: 0 };
    assert_eq!(none.f1(), 0.0);
}

fn random_records(rng: &mut impl Rng, n: usize, q: usize) -> (Vec<ScoreRecord>, Vec<Label>) {
    let labels: Vec<Label> = (0..n).map(|i| if i % 4 == 0 { Label::Positive } else { Label::Negative }).collect();
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let shift = if l.is_positive() { 0.25 } else { 0.0 };
            let per = (0..q).map(|_| (rng.random_range(0.0..0.75f64) + shift).min(1.0)).collect();
            ScoreRecord::from_scores(i, per, Some(*l))
        })
        .collect();
    (records, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_is_ordered(scores in prop::collection::vec(0.0..1.0f64, 1..25)) {
        let (lo, mid, hi) = fuse(&scores);
        prop_assert!(lo <= mid && mid <= hi);
        prop_assert_eq!(lo, scores.iter().cloned().fold(f64::MAX, f64::min));
        prop_assert_eq!(hi, scores.iter().cloned().fold(f64::MIN, f64::max));
        let below = scores.iter().filter(|&&s| s < mid).count();
        let above = scores.iter().filter(|&&s| s > mid).count();
        prop_assert!(below <= scores.len() / 2 && above <= scores.len() / 2);
    }

    #[test]
    fn det_is_monotone_along_the_grid(seed in any::<u64>(), n in 8usize..120, q in 1usize..12) {
        let mut rng = seeded(seed);
        let (records, labels) = random_records(&mut rng, n, q);
        let report = sweep(&records, &labels, &default_sigma_grid()).unwrap();
        for m in &report.modes {
            for w in m.det.windows(2) {
                prop_assert!(w[1].false_alarm <= w[0].false_alarm);
                prop_assert!(w[1].missed_detection >= w[0].missed_detection);
            }
            for (c, &(_, f)) in m.counts.iter().zip(&m.f1) {
                prop_assert_eq!(f.to_bits(), f1_oracle(c).to_bits());
                prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, n);
            }
            prop_assert!((0.0..=1.0).contains(&m.eer));
        }
        for r in &records {
            prop_assert!(r.pessimistic <= r.robust && r.robust <= r.optimistic);
        }
    }
}

#[test]
fn classification_is_strictly_above_threshold() {
    let r = ScoreRecord::from_scores(0, vec![0.5, 0.5, 0.5], None);
    for mode in FusionMode::ALL {
        assert!(!classify(&r, 0.5, mode));
        assert!(classify(&r, 0.49, mode));
    }
    let labels = [Label::Positive];
    let c = confusion(std::slice::from_ref(&r), &labels, 0.5, FusionMode::Robust);
    assert_eq!((c.tp, c.fn_), (0, 1));
}

#[test]
fn perfect_separation_has_zero_error_rate() {
    let labels: Vec<Label> = (0..40).map(|i| if i < 10 { Label::Positive } else { Label::Negative }).collect();
    let records: Vec<ScoreRecord> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| ScoreRecord::from_scores(i, vec![if l.is_positive() { 0.9 } else { 0.1 }; 3], Some(*l)))
        .collect();
    let report = sweep(&records, &labels, &default_sigma_grid()).unwrap();
    for m in &report.modes {
        assert_eq!(m.eer, 0.0);
        assert_eq!(m.best_f1.1, 1.0);
    }
}

fn blob_chip(n: usize, bright: bool, rng: &mut impl Rng, id: usize) -> Chip {
    let c = n as f64 / 2.0;
    let pixels = (0..n * n)
        .map(|k| {
            let (i, j) = ((k / n) as f64, (k % n) as f64);
            let blob = if bright { (-((i - c).powi(2) + (j - c).powi(2)) / 40.0).exp() } else { 0.0 };
            blob + rng.random_range(-0.05..0.05)
        })
        .collect();
    Chip {
        n,
        pixels,
        candidate_id: id,
        widen_step: 0,
        rotation: 0,
    }
}

fn plain_features(rng: &mut impl Rng) -> GeomFeatures {
    GeomFeatures {
        area_sq_m: rng.random_range(20.0..40.0),
        circumference_m: rng.random_range(18.0..26.0),
        aspect: rng.random_range(0.5..1.0),
        fill_ratio: rng.random_range(0.5..0.9),
        contour_count: 1,
    }
}

#[test]
fn separable_toy_chips_train_and_score() {
    let mut rng = seeded(43);
    let n = 40;
    let chips: Vec<Chip> = (0..80).map(|i| blob_chip(n, i % 2 == 0, &mut rng, i)).collect();
    let samples: Vec<Sample> = chips
        .iter()
        .map(|c| Sample {
            chip: c,
            features: plain_features(&mut rng),
            label: if c.candidate_id % 2 == 0 { Label::Positive } else { Label::Negative },
        })
        .collect();
    let spec = ScorerSpec::default();
    let ens = EnsembleSpec::with_seeds(5, 0.9, 7);
    let model = train_ensemble(&samples, &spec, &ens).unwrap();
    assert_eq!(model.models.len(), 5);
    assert_eq!(train_ensemble(&samples, &spec, &ens).unwrap(), model);

    let items: Vec<TestItem> = samples
        .iter()
        .map(|s| TestItem {
            chip: s.chip,
            features: s.features,
            label: Some(s.label),
        })
        .collect();
    let records = score(&model.models, &items).unwrap();
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let correct = records
        .iter()
        .zip(&labels)
        .filter(|(r, l)| classify(r, 0.5, FusionMode::Robust) == l.is_positive())
        .count();
    assert!(correct as f64 / labels.len() as f64 >= 0.95, "{correct}/80");
    let robust: Vec<f64> = records.iter().map(|r| r.robust).collect();
    assert!(roc_auc(&robust, &labels).unwrap() >= 0.95);

    let flat = Chip {
        pixels: vec![0.0; n * n],
        ..chips[0].clone()
    };
    let r = score(&model.models, &[TestItem { chip: &flat, features: samples[0].features, label: None }]).unwrap();
    assert!(r[0].per_model.iter().all(|s| s.is_finite() && (0.0..=1.0).contains(s)));
}

#[test]
fn auc_counts_ties_as_half() {
    let labels = [Label::Positive, Label::Negative, Label::Positive, Label::Negative];
    assert_eq!(roc_auc(&[0.9, 0.1, 0.8, 0.2], &labels).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
}
