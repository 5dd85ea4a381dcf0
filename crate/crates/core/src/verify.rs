//! Self-audit suites: each runs a fixed battery of configurations and
//! reports measured quantities against the bound they must respect.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blowup::{composition_defect, uniformity_defect};
use crate::classify::cone_plane_gap;
use crate::error::{GmtError, Result};
use crate::flatness::{flatness_comparison_check, Implication, Plane};
use crate::linalg::{norm, sym_op_norm};
use crate::measure::DiscreteMeasure;
use crate::metric_field::{compact_bounds, ellipse_norm, nested_radii, AxisBox, MetricField};
use crate::moments::{moment_residuals, q_min_eigenvalue, tilde_transform};
use crate::synth::{make_field, sample, SurfaceKind, SurfaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    EigenBounds,
    Nesting,
    Comparisons,
    Moments,
    ConeGap,
    Uniformity,
    Composition,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::EigenBounds,
        Suite::Nesting,
        Suite::Comparisons,
        Suite::Moments,
        Suite::ConeGap,
        Suite::Uniformity,
        Suite::Composition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::EigenBounds => "eigen-bounds",
            Suite::Nesting => "nesting",
            Suite::Comparisons => "comparisons",
            Suite::Moments => "moments",
            Suite::ConeGap => "cone-gap",
            Suite::Uniformity => "uniformity",
            Suite::Composition => "composition",
        }
    }

    /// Parses a suite name; `all` expands to every suite.
    pub fn parse_list(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        s.split(',')
            .map(|part| {
                Suite::ALL
                    .iter()
                    .copied()
                    .find(|x| x.name() == part.trim())
                    .ok_or_else(|| GmtError::InvalidInput(format!("unknown suite '{part}'")))
            })
            .collect()
    }
}

/// One measured quantity and the bound it must not exceed.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            passed: value >= bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::EigenBounds => eigen_bounds(seed)?,
        Suite::Nesting => nesting(seed)?,
        Suite::Comparisons => comparisons(seed)?,
        Suite::Moments => moment_stability()?,
        Suite::ConeGap => gap()?,
        Suite::Uniformity => uniformity()?,
        Suite::Composition => composition()?,
    };
    Ok(SuiteReport {
        suite,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

/// Fields exercised by the metric audits.
pub fn audit_fields() -> Vec<(&'static str, MetricField)> {
    let mk = |k: &str, d, p| make_field(k, d, &p).expect("audit field is valid");
    vec![
        ("identity", mk("identity", 2, serde_json::Value::Null)),
        (
            "diag21",
            mk(
                "constant",
                2,
                serde_json::json!({"matrix": [[2.0, 0.0], [0.0, 1.0]]}),
            ),
        ),
        (
            "sinusoidal",
            mk(
                "sinusoidal",
                3,
                serde_json::json!({"base": [[1.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,1.0]], "amplitude": 0.1,
                       "direction": [[1.0,0.0,0.0],[0.0,-1.0,0.0],[0.0,0.0,0.5]], "frequency": 1.0}),
            ),
        ),
        (
            "sinusoidal-anisotropic",
            mk(
                "sinusoidal",
                3,
                serde_json::json!({"base": [[2.0,0.3,0.0],[0.3,1.0,0.0],[0.0,0.0,0.8]], "amplitude": 0.3,
                       "direction": [[0.0,1.0,0.0],[1.0,0.0,0.0],[0.0,0.0,1.0]], "frequency": 3.0}),
            ),
        ),
    ]
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, half: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-half..half)).collect()
}

/// Uniform point of the open unit ball by rejection from the cube.
fn unit_ball_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let p = random_point(rng, d, 1.0);
        if norm(&p) < 1.0 {
            return p;
        }
    }
}

const PAIRS: usize = 10_000;

fn eigen_bounds(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, field) in audit_fields() {
        let d = field.dim();
        let mut worst: f64 = f64::NEG_INFINITY;
        for _ in 0..PAIRS {
            let a = field.eval(&random_point(&mut rng, d, 2.0))?;
            let b = field.eval(&random_point(&mut rng, d, 2.0))?;
            let gap = sym_op_norm(&(a.matrix() - b.matrix()));
            let dmin = (a.lambda_min() - b.lambda_min()).abs();
            let dmax = (a.lambda_max() - b.lambda_max()).abs();
            worst = worst.max(dmin.max(dmax) - gap);
        }
        out.push(Check::at_most(
            format!("{name}: eigenvalue shift minus norm gap"),
            worst,
            1e-9,
        ));

        let support: Vec<f64> = (0..2000)
            .flat_map(|_| random_point(&mut rng, d, 1.0))
            .collect();
        let b = compact_bounds(&field, &support, &AxisBox::everything(d), 1.0)?;
        let identity_err = (b.delta_k - b.lambda_min_k.min(1.0 / b.eccentricity))
            .abs()
            .max((b.m_k - (2.0 + b.eccentricity) * b.lambda_max_k).abs())
            .max((b.eccentricity - b.lambda_max_k / b.lambda_min_k).abs());
        out.push(Check::at_most(
            format!("{name}: bound identities"),
            identity_err,
            0.0,
        ));
    }
    Ok(out)
}

/// Membership samples per configuration and direction.
pub const NESTING_SAMPLES: usize = 10_000;

fn nesting(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2e57);
    let mut out = Vec::new();
    for (name, field) in audit_fields() {
        let d = field.dim();
        let support: Vec<f64> = (0..2000)
            .flat_map(|_| random_point(&mut rng, d, 2.0))
            .collect();
        let bounds = compact_bounds(&field, &support, &AxisBox::everything(d), 1.0)?;
        for cfg in 0..6 {
            let x = random_point(&mut rng, d, 1.0);
            let r = rng.random_range(0.05..0.5);
            // half the configurations stay inside the inner-radius regime
            let frac = if cfg % 2 == 0 { 0.45 } else { 0.95 };
            let lx = field.eval(&x)?;
            let reach = if cfg % 2 == 0 {
                lx.lambda_min() * r * frac
            } else {
                bounds.lambda_min_k * r * frac
            };
            let dir = unit_ball_point(&mut rng, d);
            let dn = norm(&dir).max(1e-12);
            let y: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(a, u)| a + reach * u / dn)
                .collect();
            let radii = nested_radii(&field, &bounds, &x, &y, r)?;
            let ly = field.eval(&y)?;
            let mut outside = 0usize;
            for _ in 0..NESTING_SAMPLES {
                let u = lx.apply(&unit_ball_point(&mut rng, d));
                let z: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + r * b).collect();
                if ellipse_norm(&ly, &y, &z) >= radii.outer {
                    outside += 1;
                }
            }
            out.push(Check::at_most(
                format!("{name} #{cfg}: outer violations"),
                outside as f64,
                0.0,
            ));
            if let Some(inner) = radii.inner {
                let mut outside = 0usize;
                for _ in 0..NESTING_SAMPLES {
                    let u = ly.apply(&unit_ball_point(&mut rng, d));
                    let z: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + inner * b).collect();
                    if ellipse_norm(&lx, &x, &z) >= r {
                        outside += 1;
                    }
                }
                out.push(Check::at_most(
                    format!("{name} #{cfg}: inner violations"),
                    outside as f64,
                    0.0,
                ));
            }
        }
    }
    Ok(out)
}

/// Straight line `{(t, 0)}` sampled at spacing `h` on `[-3, 3]`.
fn line_measure(h: f64) -> DiscreteMeasure {
    let count = (6.0 / h).round() as usize + 1;
    let pts: Vec<f64> = (0..count)
        .flat_map(|i| [-3.0 + i as f64 * h, 0.0])
        .collect();
    DiscreteMeasure::new(pts, 2, vec![h; count]).expect("line measure is valid")
}

pub const COMPARISON_CONFIGS: usize = 100;

fn comparisons(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e55);
    let field = make_field(
        "constant",
        2,
        &serde_json::json!({"matrix": [[2.0, 0.0], [0.0, 1.0]]}),
    )?;
    let mu = line_measure(1e-3);
    let bounds = compact_bounds(&field, mu.points(), &AxisBox::everything(2), 1.0)?;
    let (mut fails, mut met) = (0usize, [0usize; 2]);
    for _ in 0..COMPARISON_CONFIGS {
        let x = mu
            .point(mu.snap(&[rng.random_range(-1.0..1.0), 0.0], 1.0)?)
            .to_vec();
        let r = rng.random_range(0.05..0.5);
        let tilt: f64 = rng.random_range(-0.3..0.3);
        let plane = Plane::new(x.clone(), vec![vec![tilt.cos(), tilt.sin()]])?;
        let delta = rng.random_range(0.02..0.98) * bounds.delta_k;
        let rec = flatness_comparison_check(&field, &bounds, &mu, &x, r, &plane, delta, 512)?;
        for (k, imp) in [rec.euclidean_to_anisotropic, rec.anisotropic_to_euclidean]
            .iter()
            .enumerate()
        {
            match imp.verdict {
                Implication::Fails => fails += 1,
                Implication::Holds => met[k] += 1,
                Implication::HypothesisNotMet => {}
            }
        }
    }
    let mut out = vec![Check::at_most("failed implications", fails as f64, 0.0)];
    // a vacuous pass would prove nothing: each implication must be exercised
    out.push(Check::at_least(
        "euclidean-to-anisotropic hypotheses met",
        met[0] as f64,
        10.0,
    ));
    out.push(Check::at_least(
        "anisotropic-to-euclidean hypotheses met",
        met[1] as f64,
        10.0,
    ));
    Ok(out)
}

/// Radii of the moment audits, largest first.
pub const MOMENT_RADII: [f64; 3] = [0.4, 0.2, 0.1];

fn moment_stability() -> Result<Vec<Check>> {
    let id = MetricField::identity(3);
    let mut out = Vec::new();
    let plane = sample(&SurfaceSpec::new(
        SurfaceKind::Plane { n: 2, extent: 2.0 },
        200_000,
    ))?;
    let frame = tilde_transform(&plane, &id, &[0.0, 0.0, 0.0])?;
    for r in MOMENT_RADII {
        let t = moment_residuals(&frame, r, 2, None, 1.0, 1.0)?;
        out.push(Check::at_most(
            format!("plane r={r}: |b|/r"),
            norm(&t.moments.b) / r,
            0.01,
        ));
        out.push(Check::at_most(
            format!("plane r={r}: |trQ - n|"),
            t.trace_defect,
            0.05,
        ));
        out.push(Check::at_most(
            format!("plane r={r}: residual/r^2"),
            t.max_lhs() / (r * r),
            0.01,
        ));
    }
    let sphere = sample(&SurfaceSpec::new(
        SurfaceKind::Sphere {
            radius: 1.0,
            ambient_dim: 3,
        },
        200_000,
    ))?;
    let pole = sphere
        .point(sphere.nearest(&[0.0, 0.0, 1.0]).expect("non-empty").0)
        .to_vec();
    let frame = tilde_transform(&sphere, &id, &pole)?;
    let mut constants = Vec::new();
    for r in MOMENT_RADII {
        let t = moment_residuals(&frame, r, 2, None, 1.0, 1.0)?;
        out.push(Check::at_least(
            format!("sphere r={r}: min eigenvalue of Q"),
            q_min_eigenvalue(&t.moments),
            -1e-10,
        ));
        constants.push(t.fitted_constant);
    }
    // the bound must not deteriorate as the scale shrinks
    let growth = constants
        .iter()
        .skip(1)
        .map(|c| c / constants[0])
        .fold(0.0, f64::max);
    out.push(Check::at_most(
        "sphere: fitted constant growth under refinement",
        growth,
        1.2,
    ));
    Ok(out)
}

fn gap() -> Result<Vec<Check>> {
    let g = cone_plane_gap(4096)?;
    let axis = g.axis_planes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![
        Check::at_least("grid minimum over planes", g.minimum, 0.69),
        Check::at_most(
            "witness plane deviation from 1/sqrt 2",
            (g.witness - 0.5f64.sqrt()).abs(),
            0.02,
        ),
        Check::at_least("smallest coordinate-plane value", axis, 0.69),
    ])
}

fn uniformity() -> Result<Vec<Check>> {
    let cone = sample(&SurfaceSpec::new(
        SurfaceKind::KpCone {
            extent: 1.0,
            inner: None,
        },
        200_000,
    ))?;
    let scales = [0.1, 0.15, 0.2];
    let mut out = Vec::new();
    for r in [1.0, 0.5] {
        let nu = crate::blowup::rescale(&cone, None, &[0.0; 4], r)?.measure;
        let centers: Vec<Vec<f64>> = (0..nu.len())
            .step_by(997)
            .map(|i| nu.point(i).to_vec())
            .filter(|p| norm(p) <= 0.5)
            .take(16)
            .collect();
        let u = uniformity_defect(&nu, &centers, &scales, 3)?;
        out.push(Check::at_most(
            format!("cone rescaled at {r}: sup defect"),
            u.sup_defect,
            0.03,
        ));
    }
    let plane = sample(&SurfaceSpec::new(
        SurfaceKind::Plane { n: 2, extent: 2.0 },
        100_000,
    ))?;
    let centers: Vec<Vec<f64>> = [[0.0, 0.0], [0.3, -0.2], [-0.5, 0.5], [0.1, 0.7]]
        .iter()
        .map(|c| vec![c[0], c[1], 0.0])
        .collect();
    let u = uniformity_defect(&plane, &centers, &scales, 2)?;
    out.push(Check::at_most("plane: sup defect", u.sup_defect, 0.03));
    Ok(out)
}

fn composition() -> Result<Vec<Check>> {
    let plane = sample(&SurfaceSpec::new(
        SurfaceKind::Plane { n: 2, extent: 2.0 },
        40_000,
    ))?;
    let cone = sample(&SurfaceSpec::new(
        SurfaceKind::KpCone {
            extent: 1.0,
            inner: None,
        },
        50_000,
    ))?;
    let diag3 = make_field(
        "constant",
        3,
        &serde_json::json!({"matrix": [[2.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,0.5]]}),
    )?;
    let sin4 = make_field(
        "sinusoidal",
        4,
        &serde_json::json!({"base": [[1.5,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]], "amplitude": 0.2,
                            "direction": [[1,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,1]], "frequency": 2.0}),
    )?;
    let cases: [(&str, &DiscreteMeasure, Option<&MetricField>, Vec<f64>); 4] = [
        ("plane", &plane, None, vec![0.1, -0.2, 0.0]),
        (
            "plane, constant field",
            &plane,
            Some(&diag3),
            vec![0.3, 0.1, 0.0],
        ),
        ("cone apex", &cone, None, vec![0.0; 4]),
        (
            "cone, sinusoidal field",
            &cone,
            Some(&sin4),
            cone.point(17).to_vec(),
        ),
    ];
    let mut out = Vec::new();
    for (name, mu, field, x) in cases {
        let mut worst: f64 = 0.0;
        for (r, s) in [(0.5, 0.5), (0.4, 0.25), (0.8, 0.3)] {
            worst = worst.max(composition_defect(mu, field, &x, r, s)?);
        }
        out.push(Check::at_most(
            format!("{name}: composition defect"),
            worst,
            1e-6,
        ));
    }
    // sanity: the audit detects a mismatched pair
    let wrong = composition_defect(&plane, None, &[0.1, -0.2, 0.0], 0.5, 0.5)?;
    let off = crate::blowup::matched_f1_bound(
        &crate::blowup::rescale(&plane, None, &[0.1, -0.2, 0.0], 0.25)?.measure,
        &crate::blowup::rescale(&plane, None, &[0.1, -0.2, 0.0], 0.3)?.measure,
    )?;
    out.push(Check::at_least(
        "mismatched scales detected",
        off - wrong,
        1e-3,
    ));
    Ok(out)
}
