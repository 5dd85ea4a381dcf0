//! Generators for the model surfaces with quadrature weights, plus their
//! closed-form ball masses.
//!
//! Weights approximate `Hⁿ` restricted to the surface: each atom carries the
//! area of the surface cell it represents.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::omega;
use crate::error::{GmtError, Result};
use crate::linalg::{dist, mat_vec, norm};
use crate::measure::DiscreteMeasure;
use crate::metric_field::{FieldSpec, MetricField};
use crate::optim::{fibonacci_sphere, radical_inverse};

/// Surface to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    /// `[−extent/2, extent/2]ⁿ × {0}` in `R^{n+1}`.
    Plane { n: usize, extent: f64 },
    /// Sphere of the given radius about the origin in `R^{ambient_dim}`
    /// (a circle for `ambient_dim = 2`).
    Sphere {
        radius: f64,
        #[serde(default = "default_sphere_dim")]
        ambient_dim: usize,
    },
    /// The light cone `x₄² = x₁² + x₂² + x₃²` in `R⁴` truncated to
    /// `|p| ≤ extent`; `inner` removes `|p| < inner` (apex-free annulus).
    KpCone {
        extent: f64,
        #[serde(default)]
        inner: Option<f64>,
    },
    /// Graph of a lacunary sine sum over `[−extent/2, extent/2]ⁿ` whose
    /// gradient is γ-Hölder.
    HolderGraph {
        gamma: f64,
        amplitude: f64,
        extent: f64,
        /// Phases and directions of the sine terms; `graph_seed` in JSON so
        /// it does not collide with the spec-level seed.
        #[serde(rename = "graph_seed")]
        seed: u64,
        #[serde(default = "default_graph_dim")]
        n: usize,
    },
    /// `x₃ = 0` together with `x₁ = 0` in `R³`, both truncated to the cube
    /// of side `extent`; the shared line is sampled once.
    CrossingPlanes { extent: f64 },
    /// Image of another surface under `p ↦ A p + shift`, with weights scaled
    /// by the tangential Jacobian.
    AffineImage {
        inner: Box<SurfaceSpec>,
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        shift: Option<Vec<f64>>,
    },
}

fn default_sphere_dim() -> usize {
    3
}

fn default_graph_dim() -> usize {
    1
}

/// Multiplicative weight modulation, for planting density defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightProfile {
    #[default]
    Unit,
    /// `w ↦ scale·w`.
    Uniform { scale: f64 },
    /// `w ↦ w·(1 + amplitude·|p − center|^exponent)`.
    RadialPower {
        center: Vec<f64>,
        amplitude: f64,
        exponent: f64,
    },
    /// `w ↦ w·(1 + amplitude·sin(frequency·p[axis]))`.
    Sinusoidal {
        amplitude: f64,
        frequency: f64,
        axis: usize,
    },
}

impl WeightProfile {
    fn validate(&self, d: usize) -> Result<()> {
        let ok = match self {
            WeightProfile::Unit => true,
            WeightProfile::Uniform { scale } => *scale > 0.0 && scale.is_finite(),
            WeightProfile::RadialPower {
                center,
                amplitude,
                exponent,
            } => center.len() == d && *amplitude >= 0.0 && *exponent > 0.0,
            WeightProfile::Sinusoidal {
                amplitude,
                frequency,
                axis,
            } => amplitude.abs() < 1.0 && frequency.is_finite() && *axis < d,
        };
        if ok {
            Ok(())
        } else {
            Err(GmtError::InvalidInput(format!(
                "invalid weight profile {self:?}"
            )))
        }
    }

    pub fn factor(&self, p: &[f64]) -> f64 {
        match self {
            WeightProfile::Unit => 1.0,
            WeightProfile::Uniform { scale } => *scale,
            WeightProfile::RadialPower {
                center,
                amplitude,
                exponent,
            } => 1.0 + amplitude * dist(p, center).powf(*exponent),
            WeightProfile::Sinusoidal {
                amplitude,
                frequency,
                axis,
            } => 1.0 + amplitude * (frequency * p[*axis]).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    #[serde(flatten)]
    pub kind: SurfaceKind,
    /// Requested number of atoms; generators hit it approximately.
    pub samples: usize,
    #[serde(default)]
    pub weight_profile: WeightProfile,
    /// Seed for generators that randomise (cone shell rotations).
    #[serde(default)]
    pub seed: u64,
}

impl SurfaceSpec {
    pub fn new(kind: SurfaceKind, samples: usize) -> Self {
        SurfaceSpec {
            kind,
            samples,
            weight_profile: WeightProfile::Unit,
            seed: 0,
        }
    }

    pub fn with_profile(mut self, p: WeightProfile) -> Self {
        self.weight_profile = p;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GmtError::InvalidInput(format!("surface spec: {e}")))
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            SurfaceKind::Plane { n, .. } => n + 1,
            SurfaceKind::Sphere { ambient_dim, .. } => *ambient_dim,
            SurfaceKind::KpCone { .. } => 4,
            SurfaceKind::HolderGraph { n, .. } => n + 1,
            SurfaceKind::CrossingPlanes { .. } => 3,
            SurfaceKind::AffineImage { inner, .. } => inner.ambient_dim(),
        }
    }

    /// Dimension `m` of the sampled surface (always `d − 1`).
    pub fn intrinsic_dim(&self) -> usize {
        self.ambient_dim() - 1
    }
}

/// Raw sample with unit normals (zero at the cone apex).
struct Raw {
    d: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    normals: Vec<f64>,
}

/// Samples the surface; deterministic for a fixed spec.
pub fn sample(spec: &SurfaceSpec) -> Result<DiscreteMeasure> {
    if spec.samples < 2 {
        return Err(GmtError::InvalidInput("need at least two samples".into()));
    }
    let raw = sample_raw(spec)?;
    spec.weight_profile.validate(raw.d)?;
    let w: Vec<f64> = raw
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            w * spec
                .weight_profile
                .factor(&raw.points[i * raw.d..(i + 1) * raw.d])
        })
        .collect();
    DiscreteMeasure::new(raw.points, raw.d, w)
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(GmtError::InvalidInput(format!(
            "{what} must be positive, got {v}"
        )))
    }
}

fn sample_raw(spec: &SurfaceSpec) -> Result<Raw> {
    let n_target = spec.samples;
    match &spec.kind {
        SurfaceKind::Plane { n, extent } => {
            positive(*extent, "extent")?;
            if *n == 0 || *n > 3 {
                return Err(GmtError::InvalidInput(
                    "plane dimension must be 1, 2 or 3".into(),
                ));
            }
            Ok(plane_lattice(*n, *extent, n_target))
        }
        SurfaceKind::Sphere {
            radius,
            ambient_dim,
        } => {
            positive(*radius, "radius")?;
            match ambient_dim {
                2 => Ok(circle(*radius, n_target)),
                3 => Ok(sphere(*radius, n_target)),
                _ => Err(GmtError::InvalidInput(
                    "sphere sampling supports d = 2, 3".into(),
                )),
            }
        }
        SurfaceKind::KpCone { extent, inner } => {
            positive(*extent, "extent")?;
            if let Some(i) = inner {
                if !(*i > 0.0 && i < extent) {
                    return Err(GmtError::InvalidInput(
                        "cone annulus needs 0 < inner < extent".into(),
                    ));
                }
            }
            Ok(kp_cone(*extent, *inner, n_target, spec.seed))
        }
        SurfaceKind::HolderGraph {
            gamma,
            amplitude,
            extent,
            seed,
            n,
        } => {
            if !(*gamma > 0.0 && *gamma < 1.0) {
                return Err(GmtError::InvalidInput("gamma must lie in (0, 1)".into()));
            }
            positive(*amplitude, "amplitude")?;
            positive(*extent, "extent")?;
            if *n == 0 || *n > 2 {
                return Err(GmtError::InvalidInput(
                    "graph dimension must be 1 or 2".into(),
                ));
            }
            holder_graph(*gamma, *amplitude, *extent, *seed, *n, n_target)
        }
        SurfaceKind::CrossingPlanes { extent } => {
            positive(*extent, "extent")?;
            Ok(crossing_planes(*extent, n_target))
        }
        SurfaceKind::AffineImage {
            inner,
            matrix,
            shift,
        } => {
            let raw = sample_raw(inner)?;
            affine_image(raw, matrix, shift.as_deref())
        }
    }
}

/// Odd side count so that the origin is an atom.
fn odd_side(total: usize, n: usize) -> usize {
    let m = (total as f64).powf(1.0 / n as f64).round().max(1.0) as usize;
    if m.is_multiple_of(2) {
        m + 1
    } else {
        m
    }
}

fn plane_lattice(n: usize, extent: f64, total: usize) -> Raw {
    let d = n + 1;
    let m = odd_side(total, n);
    let h = extent / m as f64;
    let half = (m as f64 - 1.0) / 2.0;
    let count = m.pow(n as u32);
    let mut points = Vec::with_capacity(count * d);
    let mut normals = Vec::with_capacity(count * d);
    let mut idx = vec![0usize; n];
    for _ in 0..count {
        for &i in &idx {
            points.push((i as f64 - half) * h);
        }
        points.push(0.0);
        normals.extend(std::iter::repeat_n(0.0, n));
        normals.push(1.0);
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
        }
    }
    Raw {
        d,
        points,
        weights: vec![h.powi(n as i32); count],
        normals,
    }
}

fn circle(radius: f64, total: usize) -> Raw {
    let mut points = Vec::with_capacity(2 * total);
    for k in 0..total {
        let t = 2.0 * PI * k as f64 / total as f64;
        points.extend([radius * t.cos(), radius * t.sin()]);
    }
    let normals = points.iter().map(|v| v / radius).collect();
    Raw {
        d: 2,
        points,
        weights: vec![2.0 * PI * radius / total as f64; total],
        normals,
    }
}

fn sphere(radius: f64, total: usize) -> Raw {
    let dirs = fibonacci_sphere(total);
    let points = dirs.iter().flat_map(|u| u.map(|v| v * radius)).collect();
    let normals = dirs.iter().flat_map(|u| *u).collect();
    Raw {
        d: 3,
        points,
        weights: vec![4.0 * PI * radius * radius / total as f64; total],
        normals,
    }
}

/// Radial shell boundaries `b_0 < b_1 < … ≤ outer` with thickness
/// `κ·max(core, ρ)`.
fn cone_shells(start: f64, outer: f64, kappa: f64, core: f64) -> Vec<f64> {
    let mut b = vec![start];
    loop {
        let cur = *b.last().unwrap();
        let t = kappa * core.max(cur);
        if cur + t >= outer {
            if outer - cur < 0.5 * t && b.len() > 1 {
                *b.last_mut().unwrap() = outer;
            } else {
                b.push(outer);
            }
            return b;
        }
        b.push(cur + t);
    }
}

fn shell_count(b0: f64, b1: f64) -> usize {
    let t = b1 - b0;
    let mid = 0.5 * (b0 + b1);
    ((4.0 * PI * mid * mid / (t * t)).round() as usize).max(1)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // uniform rotation from a random unit quaternion
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = [
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    ];
    let [x, y, z, w] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Two nappes of the light cone over the parameter ball `|x| ≤ extent/√2`.
///
/// Each nappe is a stack of spherical shells in parameter space with
/// thickness proportional to `max(core, ρ)`, so that balls about the apex
/// contain many atoms at every scale. Directions are a randomly rotated
/// Fibonacci lattice per shell; radii are volume-uniform van der Corput
/// samples. The apex atom carries the innermost cell of both nappes.
fn kp_cone(extent: f64, inner: Option<f64>, total: usize, seed: u64) -> Raw {
    let outer = extent / 2f64.sqrt();
    let rho_in = inner.map(|i| i / 2f64.sqrt());
    let core = rho_in.unwrap_or(0.1 * outer);
    let start = |kappa: f64| rho_in.unwrap_or(0.5 * kappa * core);
    let count = |kappa: f64| -> usize {
        let b = cone_shells(start(kappa), outer, kappa, core);
        2 * b.windows(2).map(|w| shell_count(w[0], w[1])).sum::<usize>()
    };
    // count is decreasing in κ; bisect in log space
    let (mut lo, mut hi) = (1e-4_f64, 2.0_f64);
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if count(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kappa = hi;
    let b = cone_shells(start(kappa), outer, kappa, core);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de_c0de);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut normals = Vec::new();
    let s2 = 2f64.sqrt();
    if rho_in.is_none() {
        points.extend([0.0; 4]);
        weights.push(2.0 * s2 * (4.0 * PI / 3.0) * b[0].powi(3));
        normals.extend([0.0; 4]);
    }
    for sign in [1.0, -1.0] {
        for w in b.windows(2) {
            let (b0, b1) = (w[0], w[1]);
            let m = shell_count(b0, b1);
            let vol = 4.0 * PI / 3.0 * (b1.powi(3) - b0.powi(3));
            let rot = random_rotation(&mut rng);
            let shift: f64 = rng.random();
            for (j, u) in fibonacci_sphere(m).iter().enumerate() {
                let v = (radical_inverse(j as u64 + 1, 2) + shift).fract();
                let rho = (b0.powi(3) + v * (b1.powi(3) - b0.powi(3))).cbrt();
                let dir: Vec<f64> = (0..3)
                    .map(|i| (0..3).map(|k| rot[i][k] * u[k]).sum())
                    .collect();
                points.extend([rho * dir[0], rho * dir[1], rho * dir[2], sign * rho]);
                weights.push(s2 * vol / m as f64);
                // normal of x₄ = ±|x| is (x/|x|, ∓1)/√2
                normals.extend([dir[0] / s2, dir[1] / s2, dir[2] / s2, -sign / s2]);
            }
        }
    }
    Raw {
        d: 4,
        points,
        weights,
        normals,
    }
}

struct SineSum {
    amplitude: f64,
    gamma: f64,
    dirs: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

impl SineSum {
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        for (j, (k, ph)) in self.dirs.iter().zip(&self.phases).enumerate() {
            let lev = (j + 1) as i32;
            let freq = 2f64.powi(lev);
            let arg = freq * k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ph;
            f += 2f64.powf(-(lev as f64) * (1.0 + self.gamma)) * arg.sin();
            let c = 2f64.powf(-(lev as f64) * self.gamma) * arg.cos();
            for (gi, ki) in g.iter_mut().zip(k) {
                *gi += c * ki;
            }
        }
        (
            self.amplitude * f,
            g.iter().map(|v| v * self.amplitude).collect(),
        )
    }
}

/// Largest admissible amplitude under the 45° slope cap for `levels` terms.
pub fn holder_amplitude_cap(gamma: f64, levels: usize) -> f64 {
    1.0 / (1..=levels)
        .map(|j| 2f64.powf(-(j as f64) * gamma))
        .sum::<f64>()
}

fn holder_graph(
    gamma: f64,
    amplitude: f64,
    extent: f64,
    seed: u64,
    n: usize,
    total: usize,
) -> Result<Raw> {
    let m = odd_side(total, n);
    let h = extent / m as f64;
    // resolve oscillations down to about eight cells per wavelength
    let levels = ((2.0 * PI / (8.0 * h)).log2().floor() as usize).max(1);
    if amplitude > holder_amplitude_cap(gamma, levels) {
        return Err(GmtError::InvalidInput(format!(
            "amplitude {amplitude} breaks the slope cap {}",
            holder_amplitude_cap(gamma, levels)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Vec::with_capacity(levels);
    let mut phases = Vec::with_capacity(levels);
    for _ in 0..levels {
        let k: Vec<f64> = if n == 1 {
            vec![1.0]
        } else {
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            vec![t.cos(), t.sin()]
        };
        dirs.push(k);
        phases.push(rng.random_range(0.0..2.0 * PI));
    }
    let sum = SineSum {
        amplitude,
        gamma,
        dirs,
        phases,
    };
    let base = plane_lattice(n, extent, total);
    let d = n + 1;
    let count = base.weights.len();
    let mut points = base.points;
    let mut weights = base.weights;
    let mut normals = vec![0.0; count * d];
    for i in 0..count {
        let p = &mut points[i * d..(i + 1) * d];
        let (f, g) = sum.value_grad(&p[..n]);
        p[n] = f;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        weights[i] *= (1.0 + g2).sqrt();
        let s = (1.0 + g2).sqrt();
        for k in 0..n {
            normals[i * d + k] = -g[k] / s;
        }
        normals[i * d + n] = 1.0 / s;
    }
    Ok(Raw {
        d,
        points,
        weights,
        normals,
    })
}

fn crossing_planes(extent: f64, total: usize) -> Raw {
    let a = plane_lattice(2, extent, total / 2);
    let mut points = a.points.clone();
    let mut weights = a.weights.clone();
    let mut normals = a.normals.clone();
    // second plane x₁ = 0: map (u, v, 0) ↦ (0, v, u), skipping the shared line
    for i in 0..a.weights.len() {
        let p = &a.points[i * 3..i * 3 + 3];
        if p[0] == 0.0 {
            continue;
        }
        points.extend([0.0, p[1], p[0]]);
        weights.push(a.weights[i]);
        normals.extend([1.0, 0.0, 0.0]);
    }
    Raw {
        d: 3,
        points,
        weights,
        normals,
    }
}

fn affine_image(raw: Raw, matrix: &[Vec<f64>], shift: Option<&[f64]>) -> Result<Raw> {
    let d = raw.d;
    if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
        return Err(GmtError::InvalidInput(format!(
            "affine matrix must be {d}x{d}"
        )));
    }
    let a = DMatrix::from_row_slice(d, d, &matrix.concat());
    let det = a.clone().lu().determinant();
    if det.abs() < 1e-14 {
        return Err(GmtError::InvalidInput("affine matrix is singular".into()));
    }
    let shift = shift.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; d]);
    if shift.len() != d {
        return Err(GmtError::InvalidInput("shift has the wrong length".into()));
    }
    let inv_t = a.clone().try_inverse().unwrap().transpose();
    let count = raw.weights.len();
    let mut points = Vec::with_capacity(raw.points.len());
    let mut normals = Vec::with_capacity(raw.points.len());
    let mut jac = Vec::with_capacity(count);
    for i in 0..count {
        let p = &raw.points[i * d..(i + 1) * d];
        let y = mat_vec(&a, p);
        points.extend(y.iter().zip(&shift).map(|(u, s)| u + s));
        let nu = &raw.normals[i * d..(i + 1) * d];
        if norm(nu) == 0.0 {
            jac.push(None);
            normals.extend(std::iter::repeat_n(0.0, d));
            continue;
        }
        // hypersurface area scales by |det A|·|A^{-T} ν|
        let m = mat_vec(&inv_t, nu);
        let mn = norm(&m);
        jac.push(Some(det.abs() * mn));
        normals.extend(m.iter().map(|v| v / mn));
    }
    let known: Vec<f64> = jac.iter().flatten().copied().collect();
    let mean = known.iter().sum::<f64>() / known.len().max(1) as f64;
    let weights = raw
        .weights
        .iter()
        .zip(&jac)
        .map(|(w, j)| w * j.unwrap_or(mean))
        .collect();
    Ok(Raw {
        d,
        points,
        weights,
        normals,
    })
}

/// Exact `Hⁿ(Σ ∩ B(X, r))` when a closed form is available.
pub fn analytic_mass(spec: &SurfaceSpec, x: &[f64], r: f64) -> Option<f64> {
    if !(r > 0.0) || x.len() != spec.ambient_dim() || spec.weight_profile != WeightProfile::Unit {
        return None;
    }
    match &spec.kind {
        SurfaceKind::Plane { n, extent } => {
            let h = x[*n].abs();
            if h >= r {
                return Some(0.0);
            }
            let rho = (r * r - h * h).sqrt();
            x[..*n]
                .iter()
                .all(|c| c.abs() + rho <= extent / 2.0)
                .then(|| omega(*n) * rho.powi(*n as i32))
        }
        SurfaceKind::Sphere {
            radius,
            ambient_dim,
        } => {
            let rr = *radius;
            let rho = norm(x);
            let cos_t = if rho == 0.0 {
                if r > rr {
                    -1.0
                } else {
                    1.0
                }
            } else {
                ((rr * rr + rho * rho - r * r) / (2.0 * rr * rho)).clamp(-1.0, 1.0)
            };
            match ambient_dim {
                2 => Some(2.0 * rr * cos_t.acos()),
                3 => Some(2.0 * PI * rr * rr * (1.0 - cos_t)),
                _ => None,
            }
        }
        SurfaceKind::KpCone { extent, inner } => {
            if norm(x) != 0.0 || r > *extent {
                return None;
            }
            let i = inner.unwrap_or(0.0).min(r);
            Some(omega(3) * (r.powi(3) - i.powi(3)))
        }
        _ => None,
    }
}

/// Field of the given kind from a JSON parameter object, e.g.
/// `make_field("constant", 2, json!({"matrix": [[2,0],[0,1]]}))`.
pub fn make_field(
    kind: &str,
    ambient_dim: usize,
    params: &serde_json::Value,
) -> Result<MetricField> {
    let mut obj = match params {
        serde_json::Value::Object(m) => m.clone(),
        serde_json::Value::Null => serde_json::Map::new(),
        _ => {
            return Err(GmtError::InvalidInput(
                "field parameters must be an object".into(),
            ))
        }
    };
    obj.insert("kind".into(), kind.into());
    obj.insert("ambient_dim".into(), ambient_dim.into());
    obj.entry("holder_exponent")
        .or_insert(crate::metric_field::DEFAULT_HOLDER_EXPONENT.into());
    let spec: FieldSpec = serde_json::from_value(serde_json::Value::Object(obj))
        .map_err(|e| GmtError::InvalidInput(format!("field parameters: {e}")))?;
    MetricField::from_spec(spec).map_err(|e| match e {
        GmtError::NotSpd(m) => GmtError::InvalidInput(format!("field is not SPD: {m}")),
        other => other,
    })
}
