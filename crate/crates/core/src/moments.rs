//! Tilde normalisation at a base point and the moments `b`, `Q`, `tr Q`.
//!
//! The data are pushed forward by `Λ(X₀)⁻¹` so the transported field is the
//! identity at `Y₀ = Λ(X₀)⁻¹X₀`; moments are then Euclidean ball sums about
//! `Y₀`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::density::{omega, SNAP_TOL};
use crate::error::{check_dim, check_radius, GmtError, Result};
use crate::linalg::{dot, jacobi_eigen, mat_vec, norm, sub};
use crate::measure::DiscreteMeasure;
use crate::metric_field::{MetricField, SpdMatrix};

/// Data transported by `Λ(X₀)⁻¹`.
#[derive(Debug, Clone)]
pub struct TildeFrame {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    /// `Λ(X₀)⁻¹`.
    pub forward: DMatrix<f64>,
    pub lambda0: SpdMatrix,
    pub tilde_measure: DiscreteMeasure,
    field: MetricField,
}

impl TildeFrame {
    /// Transported field `Λ̃(Y) = Λ(X₀)⁻¹ Λ(Λ(X₀)Y)`.
    pub fn tilde_field_at(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.y0.len(), y.len())?;
        let x = mat_vec(self.lambda0.matrix(), y);
        let lam = self.field.eval(&x)?;
        Ok(&self.forward * lam.matrix())
    }

    /// Push the tilde measure back by `Λ(X₀)`.
    pub fn restore(&self) -> Result<DiscreteMeasure> {
        let zero = vec![0.0; self.y0.len()];
        self.tilde_measure
            .pushforward_affine(self.lambda0.matrix(), &zero, 1.0)
    }
}

/// Push `μ` forward by `Λ(X₀)⁻¹` (masses unchanged). `X₀` is snapped to the
/// nearest atom.
pub fn tilde_transform(
    mu: &DiscreteMeasure,
    field: &MetricField,
    x0: &[f64],
) -> Result<TildeFrame> {
    check_dim(mu.dim(), field.dim())?;
    let x0 = mu.point(mu.snap(x0, SNAP_TOL)?).to_vec();
    let lambda0 = field.eval(&x0)?;
    let forward = lambda0.inverse();
    let zero = vec![0.0; mu.dim()];
    let tilde_measure = mu.pushforward_affine(&forward, &zero, 1.0)?;
    let y0 = mat_vec(&forward, &x0);
    Ok(TildeFrame {
        x0,
        y0,
        forward,
        lambda0,
        tilde_measure,
        field: field.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentData {
    pub r: f64,
    pub b: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "trQ")]
    pub tr_q: f64,
    pub mass: f64,
}

impl MomentData {
    /// `⟨Q v, v⟩`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        self.q.iter().zip(v).map(|(row, vi)| vi * dot(row, v)).sum()
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        let d = self.b.len();
        DMatrix::from_fn(d, d, |i, j| self.q[i][j])
    }
}

/// `b` and `Q` of the tilde measure on `B(Y₀, r)` for `n`-dimensional data.
pub fn moments(frame: &TildeFrame, r: f64, n: usize) -> Result<MomentData> {
    check_radius(r)?;
    let mu = &frame.tilde_measure;
    let d = mu.dim();
    if n == 0 || n > d {
        return Err(GmtError::InvalidInput(format!(
            "intrinsic dimension {n} invalid in R^{d}"
        )));
    }
    let y0 = &frame.y0;
    let mut b = vec![0.0; d];
    let mut q = vec![vec![0.0; d]; d];
    let mut mass = 0.0;
    mu.tree().for_each_in_ball(y0, r, |i, z| {
        let w = mu.weight(i);
        let v = sub(z, y0);
        let s = r * r - dot(&v, &v);
        mass += w;
        for a in 0..d {
            b[a] += w * s * v[a];
            for c in a..d {
                q[a][c] += w * v[a] * v[c];
            }
        }
    });
    if mass <= 0.0 {
        return Err(GmtError::Domain(format!("no mass in B(Y0, {r})")));
    }
    let k = (n as f64 + 2.0) / (omega(n) * r.powi(n as i32 + 2));
    for a in 0..d {
        b[a] *= 0.5 * k;
        for c in a..d {
            q[a][c] *= k;
            q[c][a] = q[a][c];
        }
    }
    let tr_q = (0..d).map(|a| q[a][a]).sum();
    Ok(MomentData {
        r,
        b,
        q,
        tr_q,
        mass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub y: Vec<f64>,
    pub lhs: f64,
    pub bound_shape: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualTable {
    pub moments: MomentData,
    pub rows: Vec<ResidualRow>,
    /// Largest `lhs / bound_shape`.
    pub fitted_constant: f64,
    pub trace_defect: f64,
    /// `|tr Q − n| / r^α`.
    pub trace_ratio: f64,
}

impl ResidualTable {
    pub fn max_lhs(&self) -> f64 {
        self.rows.iter().map(|r| r.lhs).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.moments.b.len();
        let mut header: Vec<String> = (0..d).map(|k| format!("y{k}")).collect();
        header.extend(["lhs", "bound_shape", "ratio"].map(String::from));
        w.write_record(&header).map_err(crate::measure::csv_err)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.y.iter().map(|v| format!("{v:?}")).collect();
            rec.extend([row.lhs, row.bound_shape, row.ratio].map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(crate::measure::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Test points used when none are supplied.
pub const MAX_TEST_POINTS: usize = 2000;

/// Quadratic-identity residuals `|2⟨b, v⟩ + ⟨Qv, v⟩ − |v|²|` with
/// `v = Y − Y₀`, against the shape `|v|³/r + r^{2+min(α,β)}`.
///
/// Without explicit test points, support atoms in `B(Y₀, r/2)` are used
/// (strided down to [`MAX_TEST_POINTS`]).
pub fn moment_residuals(
    frame: &TildeFrame,
    r: f64,
    n: usize,
    test_points: Option<&[Vec<f64>]>,
    alpha: f64,
    beta: f64,
) -> Result<ResidualTable> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(GmtError::InvalidInput("exponents must be positive".into()));
    }
    let m = moments(frame, r, n)?;
    let mu = &frame.tilde_measure;
    let d = mu.dim();
    let pts: Vec<Vec<f64>> = match test_points {
        Some(p) => {
            for y in p {
                check_dim(d, y.len())?;
                if norm(&sub(y, &frame.y0)) > 0.5 * r {
                    return Err(GmtError::InvalidInput(
                        "test point outside B(Y0, r/2)".into(),
                    ));
                }
            }
            p.to_vec()
        }
        None => {
            let idx = mu.support_in(&frame.y0, 0.5 * r)?;
            let stride = idx.len().div_ceil(MAX_TEST_POINTS).max(1);
            idx.iter()
                .step_by(stride)
                .map(|&i| mu.point(i).to_vec())
                .collect()
        }
    };
    if pts.is_empty() {
        return Err(GmtError::Domain("no admissible test points".into()));
    }
    let floor = r.powf(2.0 + alpha.min(beta));
    let rows: Vec<ResidualRow> = pts
        .into_iter()
        .map(|y| {
            let v = sub(&y, &frame.y0);
            let s2 = dot(&v, &v);
            let lhs = (2.0 * dot(&m.b, &v) + m.quad(&v) - s2).abs();
            let bound_shape = s2.powf(1.5) / r + floor;
            ResidualRow {
                y,
                lhs,
                bound_shape,
                ratio: lhs / bound_shape,
            }
        })
        .collect();
    let fitted_constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let trace_defect = (m.tr_q - n as f64).abs();
    Ok(ResidualTable {
        trace_ratio: trace_defect / r.powf(alpha),
        moments: m,
        rows,
        fitted_constant,
        trace_defect,
    })
}

/// Largest relative deviation of positive values from their geometric mean.
pub fn relative_spread(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return f64::INFINITY;
    }
    let g = (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp();
    values
        .iter()
        .map(|v| (v / g - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of `Q` (PSD audit).
pub fn q_min_eigenvalue(m: &MomentData) -> f64 {
    jacobi_eigen(&m.q_matrix()).values[0]
}
