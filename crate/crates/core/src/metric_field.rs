//! The anisotropy field Λ(X): symmetric positive definite matrices attached
//! to points, their eigenvalue bounds over compact sets, and ellipse
//! geometry `B_Λ(X, r) = X + Λ(X)·B(0, r)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, check_radius, GmtError, Result};
use crate::kdtree::KdTree;
use crate::linalg::{dist, jacobi_eigen, mat_vec, norm, sub, sym_op_norm};

const SYMMETRY_TOL: f64 = 1e-12;
const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Exponent attached to fields built without one (identity, constants).
pub const DEFAULT_HOLDER_EXPONENT: f64 = 0.99;

/// A validated SPD matrix with its ascending spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let d = entries.nrows();
        if d == 0 || entries.ncols() != d {
            return Err(GmtError::NotSpd(format!(
                "expected a square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(GmtError::NotSpd("non-finite entry".into()));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let gap = (entries[(i, j)] - entries[(j, i)]).abs();
                if gap > SYMMETRY_TOL {
                    return Err(GmtError::NotSpd(format!("asymmetry {gap:e} at ({i},{j})")));
                }
            }
        }
        let eig = jacobi_eigen(&entries);
        if eig.values[0] <= 0.0 {
            return Err(GmtError::NotSpd(format!(
                "smallest eigenvalue {} is not positive",
                eig.values[0]
            )));
        }
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig.values.clone()));
        let rec = &eig.vectors * lam * eig.vectors.transpose();
        let scale = entries.norm();
        if (rec - &entries).norm() > RECONSTRUCTION_TOL * scale {
            return Err(GmtError::NotSpd("eigen reconstruction failed".into()));
        }
        Ok(SpdMatrix {
            entries,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
        })
    }

    pub fn identity(d: usize) -> Self {
        SpdMatrix {
            entries: DMatrix::identity(d, d),
            eigenvalues: vec![1.0; d],
            eigenvectors: DMatrix::identity(d, d),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(GmtError::NotSpd("ragged matrix rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        SpdMatrix::new(DMatrix::from_row_slice(d, d, &flat))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag));
        SpdMatrix::new(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.entries[(i, j)]).collect())
            .collect()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Inverse via the spectral decomposition (keeps exact symmetry).
    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|l| 1.0 / l),
        ));
        let m = &self.eigenvectors * inv * self.eigenvectors.transpose();
        symmetrize(m)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(&self.entries, v)
    }
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    Multilinear,
}

/// JSON form of a field: `{"kind": ..., "ambient_dim": d, "holder_exponent": β, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub ambient_dim: usize,
    pub holder_exponent: f64,
    #[serde(flatten)]
    pub kind: FieldKindSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKindSpec {
    Identity,
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// `Λ(X) = base + amplitude·sin(frequency·Σ_k X_k)·direction`, with the
    /// direction rescaled to unit operator norm.
    Sinusoidal {
        base: Vec<Vec<f64>>,
        amplitude: f64,
        direction: Vec<Vec<f64>>,
        frequency: f64,
    },
    /// Regular grid with `shape[k]` nodes along axis k starting at `origin`;
    /// samples are row-major matrices in C order over the grid nodes.
    Grid {
        origin: Vec<f64>,
        spacing: f64,
        shape: Vec<usize>,
        samples: Vec<Vec<Vec<f64>>>,
        interpolation: Interpolation,
    },
}

#[derive(Debug, Clone)]
enum FieldKind {
    Identity,
    Constant(SpdMatrix),
    Sinusoidal {
        base: SpdMatrix,
        amplitude: f64,
        direction: DMatrix<f64>,
        frequency: f64,
    },
    Grid {
        origin: Vec<f64>,
        spacing: f64,
        shape: Vec<usize>,
        samples: Vec<DMatrix<f64>>,
        interpolation: Interpolation,
    },
}

/// Validated anisotropy field.
#[derive(Debug, Clone)]
pub struct MetricField {
    dim: usize,
    holder_exponent: f64,
    kind: FieldKind,
    spec: FieldSpec,
}

impl MetricField {
    pub fn identity(dim: usize) -> Self {
        MetricField::from_spec(FieldSpec {
            ambient_dim: dim,
            holder_exponent: DEFAULT_HOLDER_EXPONENT,
            kind: FieldKindSpec::Identity,
        })
        .expect("identity field is valid")
    }

    pub fn constant(m: &SpdMatrix, holder_exponent: f64) -> Result<Self> {
        MetricField::from_spec(FieldSpec {
            ambient_dim: m.dim(),
            holder_exponent,
            kind: FieldKindSpec::Constant {
                matrix: m.to_rows(),
            },
        })
    }

    pub fn from_spec(spec: FieldSpec) -> Result<Self> {
        let d = spec.ambient_dim;
        if d < 2 {
            return Err(GmtError::InvalidInput(
                "ambient_dim must be at least 2".into(),
            ));
        }
        let beta = spec.holder_exponent;
        if !(beta > 0.0 && beta < 1.0) {
            return Err(GmtError::InvalidInput(format!(
                "holder_exponent must lie in (0, 1), got {beta}"
            )));
        }
        let kind = match &spec.kind {
            FieldKindSpec::Identity => FieldKind::Identity,
            FieldKindSpec::Constant { matrix } => {
                let m = SpdMatrix::from_rows(matrix)?;
                check_dim(d, m.dim())?;
                FieldKind::Constant(m)
            }
            FieldKindSpec::Sinusoidal {
                base,
                amplitude,
                direction,
                frequency,
            } => {
                let base = SpdMatrix::from_rows(base)?;
                check_dim(d, base.dim())?;
                if direction.len() != d || direction.iter().any(|r| r.len() != d) {
                    return Err(GmtError::InvalidInput("direction must be d x d".into()));
                }
                let flat: Vec<f64> = direction.iter().flatten().copied().collect();
                let dm = DMatrix::from_row_slice(d, d, &flat);
                if (&dm - dm.transpose()).abs().max() > SYMMETRY_TOL {
                    return Err(GmtError::InvalidInput("direction must be symmetric".into()));
                }
                let dn = sym_op_norm(&dm);
                if dn <= 0.0 {
                    return Err(GmtError::InvalidInput("direction must be nonzero".into()));
                }
                if !(amplitude.is_finite() && frequency.is_finite()) || *amplitude < 0.0 {
                    return Err(GmtError::InvalidInput("bad amplitude or frequency".into()));
                }
                if *amplitude >= base.lambda_min() {
                    return Err(GmtError::NotSpd(format!(
                        "amplitude {amplitude} must be below the smallest base eigenvalue {}",
                        base.lambda_min()
                    )));
                }
                FieldKind::Sinusoidal {
                    base,
                    amplitude: *amplitude,
                    direction: dm / dn,
                    frequency: *frequency,
                }
            }
            FieldKindSpec::Grid {
                origin,
                spacing,
                shape,
                samples,
                interpolation,
            } => {
                check_dim(d, origin.len())?;
                check_dim(d, shape.len())?;
                if !(*spacing > 0.0) || shape.contains(&0) {
                    return Err(GmtError::InvalidInput("bad grid spacing or shape".into()));
                }
                let count: usize = shape.iter().product();
                if samples.len() != count {
                    return Err(GmtError::InvalidInput(format!(
                        "grid expects {count} samples, got {}",
                        samples.len()
                    )));
                }
                let mut mats = Vec::with_capacity(count);
                for s in samples {
                    let m = SpdMatrix::from_rows(s)?;
                    check_dim(d, m.dim())?;
                    mats.push(m.entries);
                }
                FieldKind::Grid {
                    origin: origin.clone(),
                    spacing: *spacing,
                    shape: shape.clone(),
                    samples: mats,
                    interpolation: *interpolation,
                }
            }
        };
        Ok(MetricField {
            dim: d,
            holder_exponent: beta,
            kind,
            spec,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FieldSpec = serde_json::from_str(text)
            .map_err(|e| GmtError::InvalidInput(format!("field spec: {e}")))?;
        MetricField::from_spec(spec)
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn holder_exponent(&self) -> f64 {
        self.holder_exponent
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, FieldKind::Identity)
    }

    /// Λ(X).
    pub fn eval(&self, x: &[f64]) -> Result<SpdMatrix> {
        check_dim(self.dim, x.len())?;
        check_finite(x, "evaluation point")?;
        match &self.kind {
            FieldKind::Identity => Ok(SpdMatrix::identity(self.dim)),
            FieldKind::Constant(m) => Ok(m.clone()),
            FieldKind::Sinusoidal {
                base,
                amplitude,
                direction,
                frequency,
            } => {
                let phase = frequency * x.iter().sum::<f64>();
                let m = base.matrix() + direction * (amplitude * phase.sin());
                SpdMatrix::new(symmetrize(m))
            }
            FieldKind::Grid {
                origin,
                spacing,
                shape,
                samples,
                interpolation,
            } => {
                let mut pos = Vec::with_capacity(self.dim);
                for k in 0..self.dim {
                    let u = (x[k] - origin[k]) / spacing;
                    let top = (shape[k] - 1) as f64;
                    if u < -1e-12 || u > top + 1e-12 {
                        return Err(GmtError::Extrapolation(format!(
                            "coordinate {k} = {} outside [{}, {}]",
                            x[k],
                            origin[k],
                            origin[k] + top * spacing
                        )));
                    }
                    pos.push(u.clamp(0.0, top));
                }
                let flat = |idx: &[usize]| -> usize {
                    idx.iter().zip(shape).fold(0, |acc, (i, s)| acc * s + i)
                };
                let m = match interpolation {
                    Interpolation::Nearest => {
                        let idx: Vec<usize> = pos.iter().map(|u| u.round() as usize).collect();
                        samples[flat(&idx)].clone()
                    }
                    Interpolation::Multilinear => {
                        let mut acc = DMatrix::zeros(self.dim, self.dim);
                        for corner in 0..(1usize << self.dim) {
                            let mut w = 1.0;
                            let mut idx = Vec::with_capacity(self.dim);
                            for k in 0..self.dim {
                                let i0 = (pos[k].floor() as usize).min(shape[k].saturating_sub(2));
                                let f = pos[k] - i0 as f64;
                                if shape[k] == 1 {
                                    idx.push(0);
                                    if corner >> k & 1 == 1 {
                                        w = 0.0;
                                    }
                                    continue;
                                }
                                if corner >> k & 1 == 1 {
                                    idx.push(i0 + 1);
                                    w *= f;
                                } else {
                                    idx.push(i0);
                                    w *= 1.0 - f;
                                }
                            }
                            if w != 0.0 {
                                acc += &samples[flat(&idx)] * w;
                            }
                        }
                        symmetrize(acc)
                    }
                };
                SpdMatrix::new(m)
            }
        }
    }
}

/// Axis-aligned box `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl AxisBox {
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Unbounded box, i.e. the whole space.
    pub fn everything(d: usize) -> Self {
        AxisBox {
            min: vec![f64::NEG_INFINITY; d],
            max: vec![f64::INFINITY; d],
        }
    }
}

/// Eigenvalue and Hölder data of Λ over the neighbourhood of `Σ ∩ K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactBounds {
    pub lambda_min_k: f64,
    pub lambda_max_k: f64,
    pub eccentricity: f64,
    pub delta_k: f64,
    pub m_k: f64,
    pub holder_constant: f64,
    pub holder_exponent: f64,
    pub points_used: usize,
    pub pairs_used: usize,
}

impl CompactBounds {
    fn from_parts(lmin: f64, lmax: f64, h: f64, beta: f64, pts: usize, pairs: usize) -> Self {
        let e = lmax / lmin;
        CompactBounds {
            lambda_min_k: lmin,
            lambda_max_k: lmax,
            eccentricity: e,
            delta_k: lmin.min(1.0 / e),
            m_k: (2.0 + e) * lmax,
            holder_constant: h,
            holder_exponent: beta,
            points_used: pts,
            pairs_used: pairs,
        }
    }

    /// Constant in the nested-ellipse radii. Under `|X−Y| ≤ λ_min(K)·r` each of
    /// the two error terms in the nesting estimate is at most
    /// `H_K λ_min(K)^{β−1} r^{1+β}`.
    pub fn nesting_constant(&self) -> f64 {
        2.0 * self.holder_constant * self.lambda_min_k.powf(self.holder_exponent - 1.0)
    }
}

/// Maximum number of point pairs sampled for the Hölder constant.
pub const HOLDER_PAIRS: usize = 10_000;

/// Eigenvalue extremes over the support points in the closed
/// `neighborhood` of `Σ ∩ K`, and a sampled Hölder constant.
pub fn compact_bounds(
    field: &MetricField,
    support: &[f64],
    k: &AxisBox,
    neighborhood: f64,
) -> Result<CompactBounds> {
    let d = field.dim();
    if !support.len().is_multiple_of(d) {
        return Err(GmtError::DimensionMismatch {
            expected: d,
            got: support.len() % d,
        });
    }
    if !(neighborhood >= 0.0) {
        return Err(GmtError::InvalidInput(
            "neighborhood must be non-negative".into(),
        ));
    }
    let n = support.len() / d;
    let core: Vec<f64> = (0..n)
        .filter(|&i| k.contains(&support[i * d..(i + 1) * d]))
        .flat_map(|i| support[i * d..(i + 1) * d].to_vec())
        .collect();
    if core.is_empty() {
        return Err(GmtError::Domain("no support point lies in K".into()));
    }
    let tree = KdTree::build(&core, d, None);
    let selected: Vec<usize> = (0..n)
        .filter(|&i| {
            let (_, dd) = tree.nearest(&support[i * d..(i + 1) * d]).unwrap();
            dd <= neighborhood
        })
        .collect();

    let mut lmin = f64::INFINITY;
    let mut lmax = 0.0_f64;
    let mut mats = Vec::with_capacity(selected.len());
    for &i in &selected {
        let m = field.eval(&support[i * d..(i + 1) * d])?;
        lmin = lmin.min(m.lambda_min());
        lmax = lmax.max(m.lambda_max());
        mats.push(m);
    }

    let beta = field.holder_exponent();
    let (h, pairs) = if matches!(field.kind, FieldKind::Identity | FieldKind::Constant(_)) {
        (0.0, 0)
    } else {
        let s = selected.len();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        let mut h = 0.0_f64;
        let mut count = 0;
        // nearest-neighbour pairs probe the small-distance regime,
        // random pairs the large one
        let sel_pts: Vec<f64> = selected
            .iter()
            .flat_map(|&i| support[i * d..(i + 1) * d].to_vec())
            .collect();
        let sel_tree = KdTree::build(&sel_pts, d, None);
        let stride = (s / (HOLDER_PAIRS / 2)).max(1);
        for a in (0..s).step_by(stride) {
            let pa = &sel_pts[a * d..(a + 1) * d];
            let mut best: Option<(usize, f64)> = None;
            // nearest distinct point: search a small ball growing geometrically
            let mut rad = 1e-3;
            while best.is_none() && rad < 1e3 {
                sel_tree.for_each_in_ball(pa, rad, |j, p| {
                    let dj = dist(pa, p);
                    if j != a && dj > 0.0 && best.is_none_or(|(_, bd)| dj < bd) {
                        best = Some((j, dj));
                    }
                });
                rad *= 4.0;
            }
            if let Some((b, dab)) = best {
                let diff = mats[a].matrix() - mats[b].matrix();
                h = h.max(sym_op_norm(&diff) / dab.powf(beta));
                count += 1;
            }
        }
        while count < HOLDER_PAIRS && s > 1 {
            let a = rng.random_range(0..s);
            let b = rng.random_range(0..s);
            let dab = dist(&sel_pts[a * d..(a + 1) * d], &sel_pts[b * d..(b + 1) * d]);
            if a == b || dab == 0.0 {
                count += 1;
                continue;
            }
            let diff = mats[a].matrix() - mats[b].matrix();
            h = h.max(sym_op_norm(&diff) / dab.powf(beta));
            count += 1;
        }
        (h, count)
    };
    Ok(CompactBounds::from_parts(
        lmin,
        lmax,
        h,
        beta,
        selected.len(),
        pairs,
    ))
}

/// `|Λ(X)⁻¹(Z − X)| < r`.
pub fn ellipse_contains(field: &MetricField, x: &[f64], r: f64, z: &[f64]) -> Result<bool> {
    check_radius(r)?;
    check_dim(field.dim(), z.len())?;
    let lam = field.eval(x)?;
    Ok(ellipse_norm(&lam, x, z) < r)
}

/// `|Λ⁻¹(Z − X)|` for a pre-evaluated Λ.
pub fn ellipse_norm(lam: &SpdMatrix, x: &[f64], z: &[f64]) -> f64 {
    let inv = lam.inverse();
    norm(&mat_vec(&inv, &sub(z, x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedRadii {
    pub outer: f64,
    pub inner: Option<f64>,
    pub constant: f64,
}

/// Radii with `B_Λ(X, r) ⊂ B_Λ(Y, outer)` and `B_Λ(Y, inner) ⊂ B_Λ(X, r)`.
///
/// Requires `|X − Y| ≤ λ_min(K)·r`; `inner` is present only when
/// `|X − Y| ≤ λ_min(X)·r/2` and the radius is positive.
pub fn nested_radii(
    field: &MetricField,
    bounds: &CompactBounds,
    x: &[f64],
    y: &[f64],
    r: f64,
) -> Result<NestedRadii> {
    check_radius(r)?;
    check_dim(field.dim(), y.len())?;
    let lx = field.eval(x)?;
    let gap = dist(x, y);
    if gap > bounds.lambda_min_k * r {
        return Err(GmtError::Hypothesis(format!(
            "|X-Y| = {gap} exceeds lambda_min(K)*r = {}",
            bounds.lambda_min_k * r
        )));
    }
    let c = bounds.nesting_constant();
    let extra = c * r.powf(1.0 + bounds.holder_exponent);
    let shift = gap / lx.lambda_min();
    let outer = r + shift + extra;
    let inner_val = r - shift - extra;
    let inner = if gap <= lx.lambda_min() * r / 2.0 && inner_val > 0.0 {
        Some(inner_val)
    } else {
        None
    };
    Ok(NestedRadii {
        outer,
        inner,
        constant: c,
    })
}
