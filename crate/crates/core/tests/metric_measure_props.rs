//! Properties of the anisotropy field, the measure container and the density
//! ratios.

use gmt_aniso::density::{default_t_grid, density_profile, doubling_defect, omega};
use gmt_aniso::linalg::{dist, jacobi_eigen, norm, sym_op_norm};
use gmt_aniso::measure::DiscreteMeasure;
use gmt_aniso::metric_field::{
    compact_bounds, ellipse_contains, ellipse_norm, nested_radii, AxisBox, MetricField, SpdMatrix,
};
use gmt_aniso::synth::{make_field, sample, SurfaceKind, SurfaceSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sinusoidal(amplitude: f64, frequency: f64) -> MetricField {
    make_field(
        "sinusoidal",
        3,
        &serde_json::json!({"base": [[1,0,0],[0,1,0],[0,0,1]], "amplitude": amplitude,
                            "direction": [[1,0,0],[0,-1,0],[0,0,0.5]], "frequency": frequency}),
    )
    .unwrap()
}

fn cloud(seed: u64, count: usize, d: usize) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<f64> = (0..count * d)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let w: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..2.0)).collect();
    DiscreteMeasure::new(pts, d, w).unwrap()
}

#[test]
fn sinusoidal_eigenvalues_stay_in_band() {
    let f = sinusoidal(0.1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = f.eval(&x).unwrap();
        // independent eigen-solver as the oracle
        let e = m.matrix().clone().symmetric_eigen();
        for v in e.eigenvalues.iter() {
            assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(v), "{v}");
        }
        assert!((m.lambda_min() - e.eigenvalues.min()).abs() < 1e-10);
    }
}

#[test]
fn sinusoidal_audit_at_ten_thousand_points() {
    let f = make_field(
        "sinusoidal",
        4,
        &serde_json::json!({"base": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]], "amplitude": 0.1,
                            "direction": [[0,1,0,0],[1,0,0,0],[0,0,1,0],[0,0,0,0]], "frequency": 1.0,
                            "holder_exponent": 0.99}),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
        let m = f.eval(&x).unwrap();
        assert!(m.lambda_min() > 0.0);
        let rebuilt = m.eigenvectors()
            * DMatrix::from_diagonal(&m.eigenvalues().to_vec().into())
            * m.eigenvectors().transpose();
        assert!((rebuilt - m.matrix()).abs().max() <= 1e-9 * m.matrix().norm());
    }
}

#[test]
fn holder_constant_matches_finite_differences() {
    // ‖Λ(X) − Λ(Y)‖ ≤ A·F·|Σ(X−Y)|·‖D‖ ≤ A·F·√d·|X−Y|, sampled sharply by
    // pairs aligned with (1, 1, 1)
    let f = sinusoidal(0.1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let support: Vec<f64> = (0..6000)
        .flat_map(|_| {
            (0..3)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<_>>()
        })
        .collect();
    let b = compact_bounds(&f, &support, &AxisBox::everything(3), 1.0).unwrap();
    let mut oracle: f64 = 0.0;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gap = sym_op_norm(&(f.eval(&x).unwrap().matrix() - f.eval(&y).unwrap().matrix()));
        oracle = oracle.max(gap / dist(&x, &y).powf(0.99));
    }
    let cap = 0.1 * 1.0 * 3.0;
    assert!(
        b.holder_constant <= cap * 1.1,
        "{} vs {cap}",
        b.holder_constant
    );
    assert!(
        b.holder_constant >= 0.9 * oracle.min(cap),
        "{} vs {oracle}",
        b.holder_constant
    );
}

#[test]
fn diagonal_field_nesting_membership() {
    let f = make_field(
        "constant",
        2,
        &serde_json::json!({"matrix": [[2, 0], [0, 1]]}),
    )
    .unwrap();
    let support = [-2.0, -2.0, 2.0, 2.0];
    let b = compact_bounds(&f, &support, &AxisBox::everything(2), 1.0).unwrap();
    let (x, y, r) = ([0.0, 0.0], [0.3, -0.2], 0.8);
    let radii = nested_radii(&f, &b, &x, &y, r).unwrap();
    let lam = f.eval(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut tested = 0;
    while tested < 10_000 {
        let u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if norm(&u) >= 1.0 {
            continue;
        }
        let v = lam.apply(&u);
        let z = [x[0] + r * v[0], x[1] + r * v[1]];
        assert!(ellipse_norm(&lam, &y, &z) < radii.outer);
        tested += 1;
    }
}

#[test]
fn omega_values() {
    assert_eq!(omega(1), 2.0);
    assert!((omega(2) - std::f64::consts::PI).abs() < 1e-15);
    assert!((omega(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-15);
}

#[test]
fn uniform_measure_defect_is_three_epsilon() {
    let mu = sample(&SurfaceSpec::new(
        SurfaceKind::Plane { n: 2, extent: 2.0 },
        100_000,
    ))
    .unwrap();
    let x = [0.0; 3];
    let r = 0.5;
    let grid = default_t_grid();
    let eps = grid
        .iter()
        .chain(std::iter::once(&1.0))
        .map(|t| (mu.ball_mass(&x, t * r).unwrap() / (omega(2) * (t * r).powi(2)) - 1.0).abs())
        .fold(0.0, f64::max);
    let d = doubling_defect(&mu, None, &x, r, &grid, 2).unwrap();
    assert!(d.sup_defect <= 3.0 * eps, "{} vs 3·{eps}", d.sup_defect);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_ellipse_is_the_open_ball(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        z in prop::collection::vec(-3.0f64..3.0, 3),
        r in 0.01f64..4.0,
    ) {
        let f = MetricField::identity(3);
        prop_assert_eq!(ellipse_contains(&f, &x, r, &z).unwrap(), dist(&x, &z) < r);
    }

    #[test]
    fn eigenvalues_are_lipschitz_in_the_matrix(seed in any::<u64>()) {
        let f = sinusoidal(0.3, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (a, b) = (f.eval(&x).unwrap(), f.eval(&y).unwrap());
            let gap = sym_op_norm(&(a.matrix() - b.matrix()));
            prop_assert!((a.lambda_min() - b.lambda_min()).abs() <= gap + 1e-9);
            prop_assert!((a.lambda_max() - b.lambda_max()).abs() <= gap + 1e-9);
        }
    }

    #[test]
    fn compact_bound_identities(d0 in 0.2f64..5.0, d1 in 0.2f64..5.0, d2 in 0.2f64..5.0) {
        let m = SpdMatrix::diagonal(&[d0, d1, d2]).unwrap();
        let f = MetricField::constant(&m, 0.5).unwrap();
        let b = compact_bounds(&f, &[0.0, 0.0, 0.0], &AxisBox::everything(3), 1.0).unwrap();
        let lo = d0.min(d1).min(d2);
        let hi = d0.max(d1).max(d2);
        prop_assert!((b.lambda_min_k - lo).abs() < 1e-12 && (b.lambda_max_k - hi).abs() < 1e-12);
        prop_assert_eq!(b.eccentricity, b.lambda_max_k / b.lambda_min_k);
        prop_assert_eq!(b.delta_k, b.lambda_min_k.min(1.0 / b.eccentricity));
        prop_assert_eq!(b.m_k, (2.0 + b.eccentricity) * b.lambda_max_k);
        prop_assert_eq!(b.holder_constant, 0.0);
    }

    #[test]
    fn nesting_holds_on_random_configurations(seed in any::<u64>(), frac in 0.0f64..0.5, r in 0.02f64..0.3) {
        let f = sinusoidal(0.3, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let support: Vec<f64> = (0..500).flat_map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<_>>()).collect();
        let b = compact_bounds(&f, &support, &AxisBox::everything(3), 1.0).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lx = f.eval(&x).unwrap();
        let dir = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0];
        let step = frac * lx.lambda_min() * r / norm(&dir);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + step * u).collect();
        let radii = nested_radii(&f, &b, &x, &y, r).unwrap();
        let ly = f.eval(&y).unwrap();
        // the Hölder term can swallow the whole radius at coarse scales
        let inner = radii.inner.unwrap_or(0.0);
        for _ in 0..2000 {
            let u: Vec<f64> = loop {
                let u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                if norm(&u) < 1.0 { break u; }
            };
            let zx: Vec<f64> = x.iter().zip(lx.apply(&u)).map(|(a, v)| a + r * v).collect();
            prop_assert!(ellipse_norm(&ly, &y, &zx) < radii.outer);
            if inner == 0.0 { continue; }
            let zy: Vec<f64> = y.iter().zip(ly.apply(&u)).map(|(a, v)| a + inner * v).collect();
            prop_assert!(ellipse_norm(&lx, &x, &zy) < r);
        }
    }

    #[test]
    fn ball_mass_is_monotone(seed in any::<u64>(), mut radii in prop::collection::vec(0.01f64..2.0, 2..8)) {
        let mu = cloud(seed, 300, 3);
        radii.sort_by(f64::total_cmp);
        let x = mu.point(0).to_vec();
        let masses: Vec<f64> = radii.iter().map(|&r| mu.ball_mass(&x, r).unwrap()).collect();
        prop_assert!(masses.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn identity_ellipse_mass_is_ball_mass(seed in any::<u64>(), r in 0.05f64..1.5) {
        let mu = cloud(seed, 300, 3);
        let x = [0.1, -0.2, 0.3];
        prop_assert_eq!(mu.ellipse_mass(&MetricField::identity(3), &x, r).unwrap(), mu.ball_mass(&x, r).unwrap());
    }

    #[test]
    fn affine_round_trip(seed in any::<u64>()) {
        let mu = cloud(seed, 200, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let a = loop {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
            let s = jacobi_eigen(&(a.transpose() * &a)).values[0];
            if s > 0.05 { break a; }
        };
        let shift = [0.3, -1.0, 2.0];
        let there = mu.pushforward_affine(&a, &shift, 1.0).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        let back_shift: Vec<f64> = (0..3).map(|i| -(0..3).map(|j| inv[(i, j)] * shift[j]).sum::<f64>()).collect();
        let back = there.pushforward_affine(&inv, &back_shift, 1.0).unwrap();
        let err = back.points().iter().zip(mu.points()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10 * 2.0 * 3f64.sqrt() * 10.0);
        prop_assert_eq!(back.weights(), mu.weights());
    }

    #[test]
    fn density_ratios_scale_with_weights(seed in any::<u64>(), k in -3i32..4) {
        let mu = sample(&SurfaceSpec::new(SurfaceKind::Plane { n: 2, extent: 2.0 }, 4000)).unwrap();
        let c = 2f64.powi(k);
        let scaled = mu.scaled(c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = mu.point(rng.random_range(0..mu.len())).to_vec();
        let scales = [0.6, 0.4, 0.2];
        let a = density_profile(&mu, None, &x, &scales, 2).unwrap();
        let b = density_profile(&scaled, None, &x, &scales, 2).unwrap();
        for (p, q) in a.ratios.iter().zip(&b.ratios) {
            prop_assert_eq!(p * c, *q);
        }
        let grid = default_t_grid();
        let da = doubling_defect(&mu, None, &x, 0.5, &grid, 2).unwrap();
        let db = doubling_defect(&scaled, None, &x, 0.5, &grid, 2).unwrap();
        prop_assert_eq!(da.defects, db.defects);
    }
}
