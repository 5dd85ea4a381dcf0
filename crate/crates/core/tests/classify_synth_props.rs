//! Sampler mass and reproducibility, and stability of the classifiers.

use gmt_aniso::blowup::rescale;
use gmt_aniso::classify::{
    kp_classify, regular_singular_partition, verdict_from_profile, KpLabel, Verdict,
};
use gmt_aniso::synth::{sample, SurfaceKind, SurfaceSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn rotation(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))
        .qr()
        .q()
}

fn kinds() -> Vec<SurfaceKind> {
    vec![
        SurfaceKind::Plane { n: 2, extent: 2.0 },
        SurfaceKind::Sphere {
            radius: 1.0,
            ambient_dim: 3,
        },
        SurfaceKind::Sphere {
            radius: 0.5,
            ambient_dim: 2,
        },
        SurfaceKind::KpCone {
            extent: 1.0,
            inner: None,
        },
        SurfaceKind::KpCone {
            extent: 1.0,
            inner: Some(0.5),
        },
        SurfaceKind::HolderGraph {
            gamma: 0.5,
            amplitude: 0.2,
            extent: 2.0,
            seed: 5,
            n: 1,
        },
        SurfaceKind::CrossingPlanes { extent: 2.0 },
        SurfaceKind::AffineImage {
            inner: Box::new(SurfaceSpec::new(
                SurfaceKind::Plane { n: 2, extent: 1.0 },
                10_000,
            )),
            matrix: vec![
                vec![2.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            shift: Some(vec![0.0, 0.0, 1.0]),
        },
    ]
}

#[test]
fn total_mass_matches_the_area() {
    let n = 100_000;
    let cases = [
        (SurfaceKind::Plane { n: 2, extent: 2.0 }, 4.0),
        (
            SurfaceKind::Sphere {
                radius: 1.0,
                ambient_dim: 3,
            },
            4.0 * PI,
        ),
        (
            SurfaceKind::Sphere {
                radius: 0.5,
                ambient_dim: 2,
            },
            PI,
        ),
        (
            SurfaceKind::KpCone {
                extent: 1.0,
                inner: None,
            },
            4.0 * PI / 3.0,
        ),
        (
            SurfaceKind::KpCone {
                extent: 1.0,
                inner: Some(0.5),
            },
            4.0 * PI / 3.0 * (1.0 - 0.125),
        ),
        (SurfaceKind::CrossingPlanes { extent: 2.0 }, 8.0),
    ];
    for (kind, area) in cases {
        let mu = sample(&SurfaceSpec::new(kind.clone(), n)).unwrap();
        let m = mu.total_mass();
        assert!((m / area - 1.0).abs() <= 0.01, "{kind:?}: {m} vs {area}");
    }
    // a unit square stretched by 2 along one axis
    let mu = sample(&SurfaceSpec::new(kinds().pop().unwrap(), 10_000)).unwrap();
    assert!((mu.total_mass() - 2.0).abs() <= 0.02, "{}", mu.total_mass());
}

#[test]
fn graph_mass_exceeds_its_shadow() {
    // the graph over [−1, 1] is at least as long as its base
    let mu = sample(&SurfaceSpec::new(kinds()[5].clone(), 50_000)).unwrap();
    assert!(mu.total_mass() >= 2.0 * (1.0 - 1e-3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_kind_is_reproducible(k in 0usize..8, seed in any::<u64>()) {
        let mut spec = SurfaceSpec::new(kinds()[k].clone(), 3_000);
        spec.seed = seed;
        let a = sample(&spec).unwrap();
        let b = sample(&spec).unwrap();
        prop_assert_eq!(a.points(), b.points());
        prop_assert_eq!(a.weights(), b.weights());
        prop_assert!(a.weights().iter().all(|w| *w > 0.0 && w.is_finite()));
    }
}

#[test]
fn blow_ups_keep_their_model_label() {
    let plane = sample(&SurfaceSpec::new(
        SurfaceKind::Plane { n: 2, extent: 2.0 },
        40_000,
    ))
    .unwrap();
    for (x, r) in [([0.0, 0.0, 0.0], 1.0), ([0.1, -0.2, 0.0], 0.5)] {
        let nu = rescale(&plane, None, &x, r).unwrap().measure;
        assert_eq!(
            kp_classify(&nu, 2).unwrap().label,
            KpLabel::Plane,
            "plane at {x:?}, {r}"
        );
    }
    let cone = sample(&SurfaceSpec::new(
        SurfaceKind::KpCone {
            extent: 2.0,
            inner: None,
        },
        200_000,
    ))
    .unwrap();
    for r in [2.0, 1.0] {
        let nu = rescale(&cone, None, &[0.0; 4], r).unwrap().measure;
        let v = kp_classify(&nu, 3).unwrap();
        assert_eq!(
            v.label,
            KpLabel::LightCone,
            "cone at {r}: residual {}",
            v.residual
        );
    }
}

#[test]
fn partition_is_stable_under_motions_and_thresholds() {
    let spec = SurfaceSpec::new(SurfaceKind::CrossingPlanes { extent: 2.0 }, 80_000);
    let mu = sample(&spec).unwrap();
    let scales = [0.2, 0.1, 0.05];
    // two atoms on the shared line, two well away from it
    let centres: Vec<usize> = [
        [0.0, 0.2, 0.0],
        [0.0, -0.4, 0.0],
        [0.4, 0.1, 0.0],
        [0.0, 0.3, 0.5],
    ]
    .iter()
    .map(|x| mu.nearest(x).unwrap().0)
    .collect();
    let base = regular_singular_partition(&mu, None, 0.4, &scales, &centres).unwrap();
    let verdicts: Vec<Verdict> = base.iter().map(|p| p.verdict).collect();
    assert_eq!(
        verdicts,
        [
            Verdict::Singular,
            Verdict::Singular,
            Verdict::Regular,
            Verdict::Regular
        ]
    );

    let q = rotation(3, 21);
    let moved = mu.pushforward_affine(&q, &[0.3, -1.1, 0.6], 1.0).unwrap();
    let turned = regular_singular_partition(&moved, None, 0.4, &scales, &centres).unwrap();
    assert_eq!(
        turned.iter().map(|p| p.verdict).collect::<Vec<_>>(),
        verdicts
    );

    for t in [0.3, 0.35, 0.45, 0.5] {
        for p in &base {
            assert_eq!(
                verdict_from_profile(&p.scales, &p.bbeta_values, t),
                p.verdict,
                "threshold {t}: {:?}",
                p.bbeta_values
            );
        }
    }
}

#[test]
fn specs_round_trip_through_json() {
    for kind in kinds() {
        let mut spec = SurfaceSpec::new(kind, 1_000);
        spec.seed = 9;
        let text = serde_json::to_string(&spec).unwrap();
        let back: SurfaceSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec, "{text}");
    }
}
