//! Plane / light-cone recognition, the cone–plane gap, the regular/singular
//! partition and finite-scale checks of flatness propagation and of the
//! persistence of singular points under blow-up.

use rayon::prelude::*;
use serde::Serialize;

use crate::blowup::{flatness_functional, rescale};
use crate::density::SNAP_TOL;
use crate::error::{check_dim, check_radius, GmtError, Result};
use crate::flatness::{
    bbeta_with, beta2_smooth, bilateral_distance, ImplicationCheck, KernelSpec, Plane,
    SearchOptions,
};
use crate::linalg::{dist, dot, norm, orthogonal_complement, sub};
use crate::measure::DiscreteMeasure;
use crate::metric_field::MetricField;
use crate::optim::{fibonacci_sphere, halton, nelder_mead, NelderMeadOptions};

/// Flatness functional below which data count as a plane.
pub const PLANE_FUNCTIONAL_TOL: f64 = 1e-4;
/// Largest registration residual accepted for a model match.
pub const ACCEPT_RADIUS: f64 = 0.05;
/// Default singularity threshold for the partition.
pub const DEFAULT_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KpLabel {
    Plane,
    LightCone,
    Unknown,
}

/// Rigid motion taking data coordinates to model coordinates:
/// `model = rotation · (p − translation)`.
#[derive(Debug, Clone, Serialize)]
pub struct Registration {
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    /// Radius of the ball in which the match was scored.
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KpVerdict {
    pub label: KpLabel,
    pub registration: Registration,
    /// Scale-normalised Hausdorff distance to the registered model.
    pub residual: f64,
    pub functional: f64,
}

fn light_search() -> SearchOptions {
    SearchOptions {
        restarts: 2,
        max_iter: 120,
        grid_points: 1024,
        search_grid_points: 256,
        search_sample: 2000,
        ..Default::default()
    }
}

fn centroid(mu: &DiscreteMeasure) -> Vec<f64> {
    let d = mu.dim();
    let mut c = vec![0.0; d];
    for i in 0..mu.len() {
        for (ck, pk) in c.iter_mut().zip(mu.point(i)) {
            *ck += mu.weight(i) * pk;
        }
    }
    c.iter().map(|v| v / mu.total_mass()).collect()
}

fn frame_with_axis(axis: &[f64]) -> Vec<Vec<f64>> {
    let mut rows = orthogonal_complement(&[axis.to_vec()], axis.len());
    rows.push(axis.to_vec());
    rows
}

/// Distance from `v` (model coordinates, last axis the cone axis) to the
/// light cone `x_d² = |x'|²`.
fn cone_distance(v: &[f64]) -> f64 {
    let d = v.len();
    let rho = norm(&v[..d - 1]);
    (rho - v[d - 1].abs()).abs() / 2f64.sqrt()
}

/// Cone points in the unit ball of model coordinates.
fn cone_model_points() -> Vec<[f64; 4]> {
    let dirs = fibonacci_sphere(256);
    let mut out = Vec::with_capacity(dirs.len() * 8);
    for t in [0.2, 0.45, 0.7, 0.88] {
        let rho = t / 2f64.sqrt();
        for u in &dirs {
            for s in [1.0, -1.0] {
                out.push([rho * u[0], rho * u[1], rho * u[2], s * rho]);
            }
        }
    }
    out
}

struct ConeFit<'a> {
    mu: &'a DiscreteMeasure,
    pool: Vec<Vec<f64>>,
    model: Vec<[f64; 4]>,
    radius: f64,
}

impl ConeFit<'_> {
    fn residual(&self, apex: &[f64], axis: &[f64]) -> f64 {
        let na = norm(axis);
        if na < 1e-12 {
            return f64::INFINITY;
        }
        let axis: Vec<f64> = axis.iter().map(|v| v / na).collect();
        let rot = frame_with_axis(&axis);
        let mut worst: f64 = 0.0;
        for p in &self.pool {
            let rel = sub(p, apex);
            let local: Vec<f64> = rot.iter().map(|row| dot(row, &rel)).collect();
            worst = worst.max(cone_distance(&local));
        }
        for m in &self.model {
            let w: Vec<f64> = (0..4)
                .map(|k| apex[k] + self.radius * (0..4).map(|i| rot[i][k] * m[i]).sum::<f64>())
                .collect();
            if let Some((_, dd)) = self.mu.nearest(&w) {
                worst = worst.max(dd);
            }
        }
        worst / self.radius
    }
}

/// Plane / light-cone / unknown classification of `ν` as an `n`-dimensional
/// measure. The light cone is only modelled in `R⁴` (`n = 3`).
pub fn kp_classify(nu: &DiscreteMeasure, n: usize) -> Result<KpVerdict> {
    if nu.is_empty() {
        return Err(GmtError::InvalidInput("empty measure".into()));
    }
    let d = nu.dim();
    if n == 0 || n >= d {
        return Err(GmtError::InvalidInput(format!(
            "dimension {n} invalid in R^{d}"
        )));
    }
    let (ci, _) = nu.nearest(&centroid(nu)).expect("non-empty");
    let c = nu.point(ci).to_vec();
    let radius = 0.5 * nu.radius_about(&c);
    if radius <= 0.0 {
        return Err(GmtError::Degenerate("measure is a single point".into()));
    }
    // the (1, 2) kernel of the functional covers B(c, radius)
    let window = rescale(nu, None, &c, 0.5 * radius)?;
    let flat = flatness_functional(&window.measure, n)?;
    if flat.value <= PLANE_FUNCTIONAL_TOL {
        let plane = Plane::new(c.clone(), flat.plane.basis.clone())?;
        let residual = bilateral_distance(nu, &c, radius, None, &plane, 2048)? / radius;
        let mut rotation = plane.basis.clone();
        rotation.extend(plane.normal_space().iter().cloned());
        let label = if residual <= ACCEPT_RADIUS {
            KpLabel::Plane
        } else {
            KpLabel::Unknown
        };
        return Ok(KpVerdict {
            label,
            registration: Registration {
                rotation,
                translation: c,
                radius,
            },
            residual,
            functional: flat.value,
        });
    }
    let unknown = |rotation: Vec<Vec<f64>>, translation: Vec<f64>, residual: f64| KpVerdict {
        label: KpLabel::Unknown,
        registration: Registration {
            rotation,
            translation,
            radius,
        },
        residual,
        functional: flat.value,
    };
    if !(n == 3 && d == 4) {
        let mut rot = flat.plane.basis.clone();
        rot.extend(flat.plane.normal_space().iter().cloned());
        return Ok(unknown(rot, c, f64::INFINITY));
    }

    // apex: the atom (near the centroid or on a stride sample) whose cone
    // registration fits best; the axis carries three times the in-slice
    // second moment, so it is the top eigenvector about the apex
    let fit_r = 0.9 * radius;
    let near = nu.support_in(&c, fit_r)?;
    let stride = near.len().div_ceil(3000).max(1);
    let fit = ConeFit {
        mu: nu,
        pool: near
            .iter()
            .step_by(stride)
            .map(|&i| nu.point(i).to_vec())
            .collect(),
        model: cone_model_points(),
        radius: fit_r,
    };
    let axis_about = |a: &[f64]| -> Vec<f64> {
        let mut mom = nalgebra::DMatrix::<f64>::zeros(4, 4);
        for p in &fit.pool {
            let v = sub(p, a);
            for i in 0..4 {
                for j in 0..4 {
                    mom[(i, j)] += v[i] * v[j];
                }
            }
        }
        crate::linalg::jacobi_eigen(&mom)
            .vectors
            .column(3)
            .iter()
            .copied()
            .collect()
    };
    let mut cands: Vec<usize> = near.iter().take(32).copied().collect();
    let stride = nu.len().div_ceil(32).max(1);
    cands.extend((0..nu.len()).step_by(stride));
    cands.sort_unstable();
    cands.dedup();
    let (apex_idx, _) = cands
        .iter()
        .map(|&i| (i, fit.residual(nu.point(i), &axis_about(nu.point(i)))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("non-empty candidates");
    let apex0 = nu.point(apex_idx).to_vec();
    let axis0 = axis_about(&apex0);
    let start: Vec<f64> = vec![0.0; 4]
        .into_iter()
        .chain(axis0.iter().copied())
        .collect();
    let nm = nelder_mead(
        |x| {
            let apex: Vec<f64> = (0..4).map(|k| apex0[k] + fit_r * x[k]).collect();
            fit.residual(&apex, &x[4..])
        },
        &start,
        &NelderMeadOptions {
            max_iter: 300,
            initial_step: 0.02,
            ..Default::default()
        },
    );
    let apex: Vec<f64> = (0..4).map(|k| apex0[k] + fit_r * nm.x[k]).collect();
    let axis: Vec<f64> = {
        let a = &nm.x[4..];
        let na = norm(a);
        a.iter().map(|v| v / na).collect()
    };
    let residual = nm.value;
    let rotation = frame_with_axis(&axis);
    if residual <= ACCEPT_RADIUS {
        Ok(KpVerdict {
            label: KpLabel::LightCone,
            registration: Registration {
                rotation,
                translation: apex,
                radius: fit_r,
            },
            residual,
            functional: flat.value,
        })
    } else {
        Ok(unknown(rotation, apex, residual))
    }
}

/// `D[C ∩ B(0,1); L ∩ B(0,1)]` for the light cone `C ⊂ R⁴` and the 3-plane
/// `L = ν^⊥`.
///
/// Cone to plane: `sup |⟨c, ν⟩| = (|ν'| + |ν₄|)/√2`. Plane to cone: the
/// distance `| |p'| − |p₄| |/√2` is 1-homogeneous, so its supremum sits on
/// the unit sphere of `L`; found on a Fibonacci grid and polished by
/// Nelder–Mead.
pub fn cone_plane_distance(normal: &[f64]) -> Result<f64> {
    check_dim(4, normal.len())?;
    let nn = norm(normal);
    if nn < 1e-12 {
        return Err(GmtError::InvalidInput("zero normal".into()));
    }
    let nu: Vec<f64> = normal.iter().map(|v| v / nn).collect();
    let cone_side = (norm(&nu[..3]) + nu[3].abs()) / 2f64.sqrt();
    let basis = orthogonal_complement(&[nu], 4);
    let at = |u: &[f64]| -> f64 {
        let mut p = [0.0; 4];
        for (b, ui) in basis.iter().zip(u) {
            for k in 0..4 {
                p[k] += ui * b[k];
            }
        }
        let np = norm(&p);
        if np == 0.0 {
            0.0
        } else {
            cone_distance(&p) / np
        }
    };
    let grid = fibonacci_sphere(2000);
    let mut scored: Vec<(f64, [f64; 3])> = grid.iter().map(|u| (at(u), *u)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut plane_side = scored[0].0;
    for (_, u) in scored.iter().take(3) {
        let r = nelder_mead(
            |x| -at(x),
            u,
            &NelderMeadOptions {
                max_iter: 200,
                initial_step: 0.05,
                ..Default::default()
            },
        );
        plane_side = plane_side.max(-r.value);
    }
    Ok(cone_side.max(plane_side))
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub minimum: f64,
    pub argmin_normal: Vec<f64>,
    /// Value at the plane `x₄ = 0`.
    pub witness: f64,
    /// Values at `x_i = 0`, `i = 1, 2, 3` (planes containing the cone axis).
    pub axis_planes: Vec<f64>,
    pub planes_evaluated: usize,
}

/// Minimum of [`cone_plane_distance`] over `resolution` low-discrepancy
/// normals on `S³` (plus the coordinate normals), refined by Nelder–Mead
/// from the best few.
pub fn cone_plane_gap(resolution: usize) -> Result<GapReport> {
    if resolution < 32 * 32 {
        return Err(GmtError::InvalidInput(
            "plane grid must have at least 32² normals".into(),
        ));
    }
    let mut normals: Vec<Vec<f64>> = (0..4)
        .map(|k| (0..4).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    for i in 1..=resolution as u64 {
        let u = halton(i, 3);
        let (a, b) = ((1.0 - u[0]).sqrt(), u[0].sqrt());
        let t = 2.0 * std::f64::consts::PI;
        normals.push(vec![
            a * (t * u[1]).sin(),
            a * (t * u[1]).cos(),
            b * (t * u[2]).sin(),
            b * (t * u[2]).cos(),
        ]);
    }
    let values: Vec<f64> = normals
        .par_iter()
        .map(|v| cone_plane_distance(v))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..normals.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut minimum = values[order[0]];
    let mut argmin = normals[order[0]].clone();
    let mut evaluated = normals.len();
    for &k in order.iter().take(4) {
        let mut count = 0;
        let r = nelder_mead(
            |x| {
                count += 1;
                cone_plane_distance(x).unwrap_or(f64::INFINITY)
            },
            &normals[k],
            &NelderMeadOptions {
                max_iter: 150,
                initial_step: 0.05,
                ..Default::default()
            },
        );
        evaluated += count;
        if r.value < minimum {
            minimum = r.value;
            let nx = norm(&r.x);
            argmin = r.x.iter().map(|v| v / nx).collect();
        }
    }
    Ok(GapReport {
        minimum,
        argmin_normal: argmin,
        witness: values[3],
        axis_planes: values[..3].to_vec(),
        planes_evaluated: evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Regular,
    Singular,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointClassification {
    pub index: usize,
    pub point: Vec<f64>,
    pub scales: Vec<f64>,
    pub bbeta_values: Vec<f64>,
    pub verdict: Verdict,
    pub threshold: f64,
}

/// Verdict from a bβ profile: the smallest third of the scales decides.
pub fn verdict_from_profile(scales: &[f64], values: &[f64], threshold: f64) -> Verdict {
    let mut pairs: Vec<(f64, f64)> = scales.iter().copied().zip(values.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = pairs.len().div_ceil(3).max(1);
    let small = &pairs[..k.min(pairs.len())];
    let hi = small.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = small.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if hi < threshold {
        Verdict::Regular
    } else if lo >= threshold {
        Verdict::Singular
    } else {
        Verdict::Inconclusive
    }
}

fn check_ladder(scales: &[f64]) -> Result<()> {
    if scales.len() < 3 {
        return Err(GmtError::InvalidInput("need at least three scales".into()));
    }
    for &s in scales {
        check_radius(s)?;
    }
    let hi = scales.iter().copied().fold(0.0, f64::max);
    let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
    if hi < 4.0 * lo * (1.0 - 1e-12) {
        return Err(GmtError::InvalidInput(
            "scales must span at least three dyadic levels".into(),
        ));
    }
    Ok(())
}

/// Classify the atoms `centers` of `μ`; bβ is anisotropic when a
/// non-identity field is supplied.
pub fn regular_singular_partition(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    threshold: f64,
    scales: &[f64],
    centers: &[usize],
) -> Result<Vec<PointClassification>> {
    regular_singular_partition_with(mu, field, threshold, scales, centers, &light_search())
}

pub fn regular_singular_partition_with(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    threshold: f64,
    scales: &[f64],
    centers: &[usize],
    opts: &SearchOptions,
) -> Result<Vec<PointClassification>> {
    check_ladder(scales)?;
    if !(threshold > 0.0 && threshold < std::f64::consts::FRAC_1_SQRT_2) {
        return Err(GmtError::InvalidInput(
            "threshold must lie in (0, 1/√2)".into(),
        ));
    }
    if let Some(&bad) = centers.iter().find(|&&i| i >= mu.len()) {
        return Err(GmtError::InvalidInput(format!(
            "atom index {bad} out of range"
        )));
    }
    centers
        .par_iter()
        .map(|&i| {
            let x = mu.point(i);
            let vals = scales
                .iter()
                .map(|&r| Ok(bbeta_with(mu, x, r, field, opts, &[])?.value))
                .collect::<Result<Vec<f64>>>()?;
            Ok(PointClassification {
                index: i,
                point: x.to_vec(),
                scales: scales.to_vec(),
                verdict: verdict_from_profile(scales, &vals, threshold),
                bbeta_values: vals,
                threshold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PropagationCheck {
    pub center: Vec<f64>,
    pub radius: f64,
    pub levels: u32,
    /// `β₂(2^k B)` for `k = 1..=levels`.
    pub outer_betas: Vec<f64>,
    pub beta_b: f64,
    pub implication: ImplicationCheck,
    /// Largest `β₂(B′)` over dyadic sub-balls centred in `½B`.
    pub sub_ball_worst: f64,
    /// `sub_ball_worst / delta0`.
    pub worst_ratio: f64,
}

/// Evaluate "β₂(2^k B) ≤ ε₁ for k = 1..N ⇒ β₂(B) ≤ δ₀" on one ball and audit
/// the sub-balls `B(y, r/2^j)`, `y ∈ spt μ ∩ ½B`, `j = 1..3`.
pub fn beta2_propagation_check(
    mu: &DiscreteMeasure,
    center: &[f64],
    radius: f64,
    levels: u32,
    eps1: f64,
    delta0: f64,
) -> Result<PropagationCheck> {
    check_radius(radius)?;
    if levels == 0 || !(eps1 > 0.0 && delta0 > 0.0) {
        return Err(GmtError::InvalidInput(
            "need N ≥ 1 and positive tolerances".into(),
        ));
    }
    let c = mu.point(mu.snap(center, SNAP_TOL)?).to_vec();
    let n = mu.dim() - 1;
    let top = radius * 2f64.powi(levels as i32);
    if top > mu.radius_about(&c) {
        return Err(GmtError::Domain(format!(
            "2^N·B (radius {top}) exceeds the data extent"
        )));
    }
    let kernel = KernelSpec::beta2();
    let outer_betas = (1..=levels)
        .map(|k| beta2_smooth(mu, &c, radius * 2f64.powi(k as i32), &kernel, n))
        .collect::<Result<Vec<f64>>>()?;
    let beta_b = beta2_smooth(mu, &c, radius, &kernel, n)?;
    let hyp = outer_betas.iter().copied().fold(0.0, f64::max);
    let implication = ImplicationCheck::new(hyp, eps1, beta_b, delta0);
    let inner = mu.support_in(&c, 0.5 * radius)?;
    let stride = inner.len().div_ceil(16).max(1);
    let mut worst: f64 = 0.0;
    for &i in inner.iter().step_by(stride) {
        for j in 1..=3 {
            let r = radius / 2f64.powi(j);
            if let Ok(b) = beta2_smooth(mu, mu.point(i), r, &kernel, n) {
                worst = worst.max(b);
            }
        }
    }
    Ok(PropagationCheck {
        center: c,
        radius,
        levels,
        outer_betas,
        beta_b,
        implication,
        sub_ball_worst: worst,
        worst_ratio: worst / delta0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PersistenceRecord {
    pub ys: Vec<Vec<f64>>,
    /// bβ of the rescaled data at `Y_k`, unit scale.
    pub values: Vec<f64>,
    pub min_value: f64,
    pub threshold: f64,
    pub persistent: bool,
    /// Largest distance between tail points of the `Y_k`.
    pub cauchy_spread: f64,
}

/// Tail tolerance for the `Y_k` sequence.
pub const CAUCHY_TOL: f64 = 0.05;

/// Rescale at `(X_limit, r_k)`, evaluate bβ at `Y_k = Λ(X_limit)⁻¹(X_k −
/// X_limit)/r_k` at unit scale, and report the minimum against the threshold.
pub fn singularity_persistence(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    x_limit: &[f64],
    points: &[Vec<f64>],
    radii: &[f64],
    threshold: f64,
) -> Result<PersistenceRecord> {
    check_dim(mu.dim(), x_limit.len())?;
    if points.is_empty() || points.len() != radii.len() {
        return Err(GmtError::InvalidInput(
            "need matching non-empty point and radius sequences".into(),
        ));
    }
    let lam_inv = match field {
        Some(f) if !f.is_identity() => Some(f.eval(x_limit)?.inverse()),
        _ => None,
    };
    let ys: Vec<Vec<f64>> = points
        .iter()
        .zip(radii)
        .map(|(x, &r)| {
            check_radius(r)?;
            check_dim(mu.dim(), x.len())?;
            let v: Vec<f64> = sub(x, x_limit).iter().map(|t| t / r).collect();
            Ok(match &lam_inv {
                Some(m) => crate::linalg::mat_vec(m, &v),
                None => v,
            })
        })
        .collect::<Result<_>>()?;
    let tail = &ys[ys.len() / 2..];
    let mut spread: f64 = 0.0;
    for a in tail {
        for b in tail {
            spread = spread.max(dist(a, b));
        }
    }
    if spread > CAUCHY_TOL {
        return Err(GmtError::Hypothesis(format!(
            "rescaled points are not Cauchy: tail spread {spread:.3} > {CAUCHY_TOL}"
        )));
    }
    let opts = light_search();
    let values = points
        .par_iter()
        .zip(radii.par_iter())
        .zip(ys.par_iter())
        .map(|((_, &r), y)| {
            let res = rescale(mu, field, x_limit, r)?;
            Ok(bbeta_with(&res.measure, y, 1.0, None, &opts, &[])?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PersistenceRecord {
        ys,
        persistent: min_value >= threshold,
        values,
        min_value,
        threshold,
        cauchy_spread: spread,
    })
}
