//! Density ratios, Hölder density fits, doubling defects and the dyadic
//! density `Θ_Λ` with the renormalised measure `μ₀`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{check_radius, GmtError, Result};
use crate::kdtree::KdTree;
use crate::linalg::{linear_fit, unit_ball_volume};
use crate::measure::DiscreteMeasure;
use crate::metric_field::MetricField;

/// Centers further than this from every atom are rejected.
pub const SNAP_TOL: f64 = 1e-9;

/// Scales whose ratio defect is below this carry no information for the fit.
pub const FIT_FLOOR: f64 = 1e-12;

/// `ω_n`, the volume of the unit `n`-ball.
pub fn omega(n: usize) -> f64 {
    unit_ball_volume(n)
}

fn serialize_sentinel<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("nan")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProfile {
    pub center: Vec<f64>,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Slope of `log|ratio − 1|` against `log r`; `+∞` when fewer than two
    /// scales carry a defect (a defect-free profile decays arbitrarily fast).
    #[serde(serialize_with = "serialize_sentinel")]
    pub fitted_alpha: f64,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingDefect {
    pub center: Vec<f64>,
    pub r: f64,
    pub t_grid: Vec<f64>,
    pub defects: Vec<f64>,
    pub sup_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub k_values: Vec<i32>,
    pub l_sequence: Vec<f64>,
}

impl ThetaEstimate {
    /// `max_{j>i} |l_j − l_i|` over the tail starting at position `from`.
    pub fn cauchy_spread(&self, from: usize) -> f64 {
        let tail = &self.l_sequence[from.min(self.l_sequence.len())..];
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        if tail.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

fn mass(mu: &DiscreteMeasure, field: Option<&MetricField>, x: &[f64], r: f64) -> Result<f64> {
    match field {
        Some(f) => mu.ellipse_mass(f, x, r),
        None => mu.ball_mass(x, r),
    }
}

/// Per-scale `μ(B_Λ(X, r))/(ω_n rⁿ)` and the log-log fit of `|ratio − 1|`.
pub fn density_profile(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    x: &[f64],
    scales: &[f64],
    n: usize,
) -> Result<DensityProfile> {
    if scales.is_empty() {
        return Err(GmtError::InvalidInput("no scales given".into()));
    }
    for s in scales {
        check_radius(*s)?;
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GmtError::InvalidInput(
            "scales must be strictly decreasing".into(),
        ));
    }
    let c = mu.point(mu.snap(x, SNAP_TOL)?).to_vec();
    let wn = omega(n);
    let mut ratios = Vec::with_capacity(scales.len());
    for &r in scales {
        let m = mass(mu, field, &c, r)?;
        if m <= 0.0 {
            return Err(GmtError::Domain(format!("zero mass at scale {r}")));
        }
        ratios.push(m / (wn * (r.powi(n as i32))));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = scales
        .iter()
        .zip(&ratios)
        .filter(|(_, q)| (*q - 1.0).abs() > FIT_FLOOR)
        .map(|(r, q)| (r.ln(), (q - 1.0).abs().ln()))
        .unzip();
    let (alpha, cfit) = match linear_fit(&lx, &ly) {
        Some((a, b)) => (b, a.exp()),
        None => (f64::INFINITY, 0.0),
    };
    Ok(DensityProfile {
        center: c,
        scales: scales.to_vec(),
        ratios,
        fitted_alpha: alpha,
        fitted_c: cfit,
    })
}

/// `t = 1/2, 0.525, …, 1`.
pub fn default_t_grid() -> Vec<f64> {
    (0..=20).map(|k| 0.5 + 0.025 * k as f64).collect()
}

/// `|μ(B_Λ(X, tr))/μ(B_Λ(X, r)) − tⁿ|` for each `t`.
pub fn doubling_defect(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    x: &[f64],
    r: f64,
    t_grid: &[f64],
    n: usize,
) -> Result<DoublingDefect> {
    check_radius(r)?;
    if t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(GmtError::InvalidInput("t values must lie in (0, 1]".into()));
    }
    if !t_grid.iter().any(|t| *t >= 0.5) {
        return Err(GmtError::InvalidInput(
            "t grid needs samples in [1/2, 1]".into(),
        ));
    }
    let c = mu.point(mu.snap(x, SNAP_TOL)?).to_vec();
    let denom = mass(mu, field, &c, r)?;
    if denom <= 0.0 {
        return Err(GmtError::Domain(format!("zero mass at scale {r}")));
    }
    let mut defects = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let m = mass(mu, field, &c, t * r)?;
        defects.push((m / denom - t.powi(n as i32)).abs());
    }
    let sup = defects.iter().copied().fold(0.0, f64::max);
    Ok(DoublingDefect {
        center: c,
        r,
        t_grid: t_grid.to_vec(),
        defects,
        sup_defect: sup,
    })
}

/// Dyadic densities `D_k = μ(B_Λ(X, 2^{-k}))/(ω_n 2^{-kn})`, `l_k = log D_k`,
/// `Θ = exp(l_{k_max})`.
pub fn theta_lambda(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    x: &[f64],
    n: usize,
    k_range: (i32, i32),
) -> Result<ThetaEstimate> {
    let (k0, k1) = k_range;
    if k0 > k1 {
        return Err(GmtError::InvalidInput("empty k range".into()));
    }
    let c = mu.point(mu.snap(x, SNAP_TOL)?).to_vec();
    theta_at(mu, field, &c, n, k0, k1)
}

fn theta_at(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    c: &[f64],
    n: usize,
    k0: i32,
    k1: i32,
) -> Result<ThetaEstimate> {
    let wn = omega(n);
    let mut ls = Vec::new();
    for k in k0..=k1 {
        let r = 2f64.powi(-k);
        let m = mass(mu, field, c, r)?;
        if m <= 0.0 {
            return Err(GmtError::Domain(format!("zero mass at k = {k}")));
        }
        ls.push((m / (wn * r.powi(n as i32))).ln());
    }
    Ok(ThetaEstimate {
        theta: ls.last().unwrap().exp(),
        k_values: (k0..=k1).collect(),
        l_sequence: ls,
    })
}

/// `μ₀`: weights divided by the local `Θ_Λ`. `Θ_Λ` is evaluated on at most
/// `max_evaluations` atoms (a uniform stride) and carried to the others by
/// nearest neighbour.
pub fn normalize_by_density(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    n: usize,
    k_range: (i32, i32),
    max_evaluations: usize,
) -> Result<DiscreteMeasure> {
    let (k0, k1) = k_range;
    if k0 > k1 || max_evaluations == 0 {
        return Err(GmtError::InvalidInput(
            "bad k range or evaluation budget".into(),
        ));
    }
    let len = mu.len();
    let stride = len.div_ceil(max_evaluations).max(1);
    let sample: Vec<usize> = (0..len).step_by(stride).collect();
    let results: Vec<(usize, Result<f64>)> = sample
        .par_iter()
        .map(|&i| {
            (
                i,
                theta_at(mu, field, mu.point(i), n, k0, k1).map(|t| t.theta),
            )
        })
        .collect();
    let mut failed = Vec::new();
    let mut thetas = Vec::with_capacity(sample.len());
    for (i, r) in results {
        match r {
            Ok(t) => thetas.push(t),
            Err(_) => failed.push(i),
        }
    }
    if !failed.is_empty() {
        return Err(GmtError::Domain(format!(
            "density estimate failed at atoms {failed:?}"
        )));
    }
    let d = mu.dim();
    let new_w: Vec<f64> = if stride == 1 {
        mu.weights()
            .iter()
            .zip(&thetas)
            .map(|(w, t)| w / t)
            .collect()
    } else {
        let coords: Vec<f64> = sample.iter().flat_map(|&i| mu.point(i).to_vec()).collect();
        let tree = KdTree::build(&coords, d, None);
        (0..len)
            .into_par_iter()
            .map(|i| {
                let (j, _) = tree.nearest(mu.point(i)).unwrap();
                mu.weight(i) / thetas[j]
            })
            .collect()
    };
    mu.with_weights(new_w)
}
