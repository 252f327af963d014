//! Monte Carlo comparisons at temperatures where every path exits within
//! desk-scale time. Same checks as the low-temperature acceptance runs.

mod common;

use std::collections::BTreeMap;

use common::{double_well, simpson_exit_left};
use langevin_exit::sde::{
    default_dt, histogram, simulate_exit, wilson_interval, BoundaryRegion, RegionShape, SimConfig,
};
use langevin_exit::{DomainGeometry, PotentialField};

fn endpoints() -> Vec<BoundaryRegion> {
    vec![
        BoundaryRegion {
            label: "left".into(),
            shape: RegionShape::Endpoint { x: -1.5 },
        },
        BoundaryRegion {
            label: "right".into(),
            shape: RegionShape::Endpoint { x: 1.5 },
        },
    ]
}

#[test]
fn tilted_double_well_matches_exact_exit_probabilities_at_h_half() {
    let h = 0.5;
    let start = -1.012_273_131_032_681_6;
    let f = PotentialField::builtin("double_well_1d", &BTreeMap::from([("tilt".to_string(), 0.1)])).unwrap();
    let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
    // boundary bias is O(sqrt(dt)); at the default step it is about 0.03 here
    let dt = default_dt(&f, &dom, h) / 4.0;
    let p_left = simpson_exit_left(&double_well(0.1), -1.5, 1.5, start, h);

    let mut proportions = Vec::new();
    for (step, seed) in [(dt, 21), (dt / 2.0, 22)] {
        let cfg = SimConfig::new(h, step, 1000, seed, vec![start]);
        let samples = simulate_exit(&f, &dom, &cfg).unwrap();
        let hist = histogram(&samples, &endpoints(), &dom).unwrap();
        assert_eq!(hist.censored, 0);
        assert_eq!(hist.counts.iter().sum::<usize>(), hist.n_paths);
        let (lo, hi) = wilson_interval(hist.counts[0], hist.n_paths, 3.0);
        assert!(
            lo <= p_left && p_left <= hi,
            "dt {step}: exact {p_left} outside [{lo}, {hi}]"
        );
        proportions.push((hist.counts[0] as f64 / hist.n_paths as f64, hist.n_paths as f64));
    }
    let (p1, n1) = proportions[0];
    let (p2, n2) = proportions[1];
    let se = (p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2).sqrt();
    assert!((p1 - p2).abs() <= 3.0 * se, "halving moved {p1} to {p2}");
}

fn side_proportion(tilt: f64, seed: u64) -> (usize, usize) {
    let params = BTreeMap::from([("c".to_string(), 2.0), ("tilt".to_string(), tilt)]);
    let f = PotentialField::builtin("double_well_2d", &params).unwrap();
    let dom = DomainGeometry::disk(&[0.0, 0.0], 1.5).unwrap();
    let h = 0.6;
    let cfg = SimConfig::new(h, default_dt(&f, &dom, h), 3000, seed, vec![0.0, 0.0]);
    let samples = simulate_exit(&f, &dom, &cfg).unwrap();
    let halves = vec![
        BoundaryRegion {
            label: "left".into(),
            shape: RegionShape::Arc {
                origin: vec![0.0, 0.0],
                center_angle: std::f64::consts::PI,
                half_angle: std::f64::consts::FRAC_PI_2,
            },
        },
        BoundaryRegion {
            label: "right".into(),
            shape: RegionShape::Arc {
                origin: vec![0.0, 0.0],
                center_angle: 0.0,
                half_angle: std::f64::consts::FRAC_PI_2 - 1e-9,
            },
        },
    ];
    let hist = histogram(&samples, &halves, &dom).unwrap();
    assert_eq!(hist.censored, 0);
    (hist.counts[0], hist.n_paths)
}

#[test]
fn disk_double_well_from_the_saddle_splits_evenly_and_follows_the_tilt() {
    let (k0, n0) = side_proportion(0.0, 31);
    let (lo, hi) = wilson_interval(k0, n0, 3.0);
    assert!(lo <= 0.5 && 0.5 <= hi, "untilted left {k0}/{n0}");

    let (k1, n1) = side_proportion(0.1, 32);
    let (p0, p1) = (k0 as f64 / n0 as f64, k1 as f64 / n1 as f64);
    let se = (p0 * (1.0 - p0) / n0 as f64 + p1 * (1.0 - p1) / n1 as f64).sqrt();
    assert!((p1 - p0) / se > 3.0, "tilt moved left proportion {p0} -> {p1}");
}
