use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use ruinscan::ingest::reduce_to_ground;
use ruinscan::raster::{grid_nearest, localize, to_grayscale};
use ruinscan::rng::seeded;
use ruinscan::{GroundPoint, LocalizeParams, PointCloud, PointRecord, Raster, Rolloff};

#[test]
fn ground_reduction_matches_sorted_grouping() {
    let mut rng = seeded(21);
    let mut records: Vec<PointRecord> = (0..1000)
        .map(|i| PointRecord {
            x: (i % 40) as f64 * 0.7 + rng.random_range(0.0..0.1),
            y: (i / 40) as f64 * 0.7,
            z: rng.random_range(-5.0..5.0),
        })
        .collect();
    for k in 0..100 {
        let base = records[k * 10];
        records.push(PointRecord {
            z: base.z + rng.random_range(0.1..8.0),
            ..base
        });
    }
    let cloud = PointCloud::new(records.clone()).unwrap();
    let ground = reduce_to_ground(&cloud, 1e-6).unwrap();
    assert_eq!(ground.len(), 1000);

    let mut sorted = records;
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut oracle: Vec<GroundPoint> = Vec::new();
    for r in sorted {
        match oracle.last_mut() {
            Some(g) if g.x == r.x && g.y == r.y => g.z0 = g.z0.min(r.z),
            _ => oracle.push(GroundPoint { x: r.x, y: r.y, z0: r.z }),
        }
    }
    let mut got = ground;
    got.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    assert_eq!(got, oracle);
}

fn brute_nearest(points: &[GroundPoint], x: f64, y: f64) -> (f64, f64) {
    let mut best = (f64::MAX, f64::NAN);
    for p in points {
        let d = (p.x - x).hypot(p.y - y);
        if d < best.0 {
            best = (d, p.z0);
        }
    }
    best
}

#[test]
fn grid_nearest_plane_within_spacing_bound() {
    let mut rng = seeded(22);
    let points: Vec<GroundPoint> = (0..500)
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
            GroundPoint { x, y, z0: 2.0 * x + 3.0 * y }
        })
        .collect();
    let r = grid_nearest(&points, 0.5, 10.0).unwrap();
    let grad = 2f64.hypot(3.0);
    for row in 0..r.height {
        for col in 0..r.width {
            let c = r.world(col as f64, row as f64);
            let (d, z) = brute_nearest(&points, c.x, c.y);
            assert_eq!(r.get(col, row), z);
            assert!((r.get(col, row) - (2.0 * c.x + 3.0 * c.y)).abs() <= d * grad + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ground_is_group_minimum(
        spots in prop::collection::vec((0u8..6, 0u8..6), 1..60),
        zs in prop::collection::vec(-10.0..10.0f64, 60),
    ) {
        let records: Vec<PointRecord> = spots.iter().zip(&zs)
            .map(|(&(i, j), &z)| PointRecord { x: i as f64, y: j as f64, z })
            .collect();
        let ground = reduce_to_ground(&PointCloud::new(records.clone()).unwrap(), 1e-6).unwrap();
        let mut groups: BTreeMap<(u8, u8), Vec<f64>> = BTreeMap::new();
        for (&s, &z) in spots.iter().zip(&zs) {
            groups.entry(s).or_default().push(z);
        }
        prop_assert_eq!(ground.len(), groups.len());
        prop_assert!(ground.len() <= records.len());
        for g in &ground {
            let zs = &groups[&(g.x as u8, g.y as u8)];
            prop_assert!(zs.iter().all(|&z| g.z0 <= z));
            prop_assert!(zs.contains(&g.z0));
        }
    }

    #[test]
    fn grid_nearest_agrees_with_brute_force(
        pts in prop::collection::vec((0.0..12.0f64, 0.0..12.0f64, -3.0..3.0f64), 1..80),
        res in 0.3..1.5f64,
        max_search in 0.5..4.0f64,
    ) {
        let points: Vec<GroundPoint> = pts.iter().map(|&(x, y, z0)| GroundPoint { x, y, z0 }).collect();
        let r = grid_nearest(&points, res, max_search).unwrap();
        for row in 0..r.height {
            for col in 0..r.width {
                let c = r.world(col as f64, row as f64);
                let (d, z) = brute_nearest(&points, c.x, c.y);
                if d > max_search + 1e-9 {
                    prop_assert!(!r.is_valid(col, row));
                } else if d < max_search - 1e-9 {
                    prop_assert!(r.is_valid(col, row));
                    // Equidistant points may legitimately differ; compare distances instead.
                    let picked = points.iter().filter(|p| p.z0 == r.get(col, row))
                        .map(|p| (p.x - c.x).hypot(p.y - c.y)).fold(f64::MAX, f64::min);
                    prop_assert!((picked - d).abs() <= 1e-9, "cell ({},{}) z {} vs {}", col, row, r.get(col, row), z);
                }
            }
        }
        // Nearest neighbor never invents elevations.
        for v in r.valid_values() {
            prop_assert!(points.iter().any(|p| p.z0 == v));
        }
    }

    #[test]
    fn grayscale_is_monotone(values in prop::collection::vec(-100.0..100.0f64, 2..64)) {
        prop_assume!(values.iter().any(|v| *v != values[0]));
        let n = values.len();
        let r = Raster::from_values(0.0, 0.0, 1.0, n, 1, values.clone()).unwrap();
        let g = to_grayscale(&r).unwrap();
        for i in 0..n {
            for j in 0..n {
                if values[i] < values[j] {
                    prop_assert!(g.values[i] <= g.values[j]);
                }
            }
        }
        prop_assert_eq!(g.values.iter().cloned().fold(f64::MAX, f64::min), 0.0);
        prop_assert_eq!(g.values.iter().cloned().fold(f64::MIN, f64::max), 255.0);
    }
}

const RES: f64 = 0.3;
const SIZE: usize = 240;

/// Cosine along x sampled at pixel centers. With a whole number of periods
/// across the width, the mirrored extension is itself a pure cosine.
fn wave(wavelength: f64) -> Raster {
    let values = (0..SIZE * 16)
        .map(|i| {
            let x = ((i % SIZE) as f64 + 0.5) * RES;
            (std::f64::consts::TAU * x / wavelength).cos()
        })
        .collect();
    Raster::from_values(0.0, 0.0, RES, SIZE, 16, values).unwrap()
}

/// Amplitude of a sampled sinusoid spanning whole periods: `sqrt(2 <v^2>)`.
fn amplitude(r: &Raster) -> f64 {
    (2.0 * r.values.iter().map(|v| v * v).sum::<f64>() / r.values.len() as f64).sqrt()
}

#[test]
fn constant_raster_localizes_to_zero() {
    let r = Raster::filled(0.0, 0.0, RES, 64, 48, 7.0);
    let l = localize(&r, &LocalizeParams::default()).unwrap();
    assert!(l.values.iter().all(|v| v.abs() <= 1e-9 * 7.0));
}

#[test]
fn waves_follow_the_transfer_curve() {
    let p = LocalizeParams::default();
    for wavelength in [12.0 * p.lambda_m, 4.0 * p.lambda_m, p.lambda_m / 2.0] {
        let got = amplitude(&localize(&wave(wavelength), &p).unwrap());
        let want = p.transfer(wavelength);
        assert!((got - want).abs() <= 0.01 * want, "wavelength {wavelength}: {got} vs {want}");
    }
    assert!(amplitude(&localize(&wave(4.0 * p.lambda_m), &p).unwrap()) <= 0.1);
    assert!(amplitude(&localize(&wave(p.lambda_m / 2.0), &p).unwrap()) >= 0.9);
}

#[test]
fn ideal_rolloff_is_idempotent() {
    let mut rng = seeded(23);
    let values: Vec<f64> = (0..96 * 80).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = Raster::from_values(0.0, 0.0, RES, 96, 80, values).unwrap();
    let p = LocalizeParams {
        rolloff: Rolloff::Ideal,
        ..Default::default()
    };
    let once = localize(&r, &p).unwrap();
    let twice = localize(&once, &p).unwrap();
    let worst = once.values.iter().zip(&twice.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn localize_is_linear_and_zero_mean(
        seed in any::<u64>(),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        w in 8usize..40,
        h in 8usize..40,
    ) {
        let mut rng = seeded(seed);
        let mut field = || -> Raster {
            let v = (0..w * h).map(|_| rng.random_range(-2.0..2.0)).collect();
            Raster::from_values(0.0, 0.0, RES, w, h, v).unwrap()
        };
        let (x, y) = (field(), field());
        let p = LocalizeParams::default();
        let mix = x.with_values(x.values.iter().zip(&y.values).map(|(u, v)| a * u + b * v).collect());
        let lx = localize(&x, &p).unwrap();
        let ly = localize(&y, &p).unwrap();
        let lm = localize(&mix, &p).unwrap();
        let scale = lm.values.iter().map(|v| v.abs()).fold(1e-12, f64::max);
        for i in 0..w * h {
            let want = a * lx.values[i] + b * ly.values[i];
            prop_assert!((lm.values[i] - want).abs() <= 1e-9 * scale.max(1.0));
        }
        let (lo, hi) = x.value_range().unwrap();
        prop_assert!(lx.valid_mean().unwrap().abs() <= 1e-9 * (hi - lo));
    }
}
