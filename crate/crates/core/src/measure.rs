//! Weighted point clouds standing in for Radon measures.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{check_dim, check_finite, check_radius, GmtError, Result};
use crate::kdtree::KdTree;
use crate::linalg::{dist2, mat_vec, KahanSum};
use crate::metric_field::{MetricField, SpdMatrix};

/// Discrete measure `Σ w_i δ_{p_i}` with a kd-tree over the atoms.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    total_mass: f64,
    tree: KdTree,
}

impl DiscreteMeasure {
    /// `points` is row-major with `dim` columns; every weight must be positive.
    pub fn new(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(GmtError::InvalidInput("dimension must be positive".into()));
        }
        if !points.len().is_multiple_of(dim) {
            return Err(GmtError::InvalidInput(format!(
                "{} coordinates do not split into rows of {dim}",
                points.len()
            )));
        }
        check_dim(points.len() / dim, weights.len())?;
        check_finite(&points, "point cloud")?;
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(GmtError::InvalidInput(format!(
                "weight {} at index {i} is not positive",
                weights[i]
            )));
        }
        let mut total = KahanSum::default();
        weights.iter().for_each(|w| total.add(*w));
        let tree = KdTree::build(&points, dim, Some(&weights));
        Ok(DiscreteMeasure {
            dim,
            points,
            weights,
            total_mass: total.value(),
            tree,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(GmtError::InvalidInput("ragged point rows".into()));
        }
        DiscreteMeasure::new(rows.concat(), dim, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    /// `μ(B(X, r))` over the open ball.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> Result<f64> {
        check_radius(r)?;
        check_dim(self.dim, x.len())?;
        check_finite(x, "center")?;
        Ok(self.tree.ball_weight(x, r))
    }

    /// `μ(B_Λ(X, r))`: candidates from the circumscribed ball of radius
    /// `λ_max(X)·r`, then the exact ellipse predicate.
    pub fn ellipse_mass(&self, field: &MetricField, x: &[f64], r: f64) -> Result<f64> {
        check_radius(r)?;
        check_dim(self.dim, x.len())?;
        if field.is_identity() {
            return self.ball_mass(x, r);
        }
        let lam = field.eval(x)?;
        Ok(self.ellipse_mass_with(&lam, x, r))
    }

    /// Ellipse mass for an already evaluated `Λ(X)`.
    pub fn ellipse_mass_with(&self, lam: &SpdMatrix, x: &[f64], r: f64) -> f64 {
        let inv = lam.inverse();
        let mut acc = KahanSum::default();
        // small slack so that round-off in λ_max never drops a member
        let reach = lam.lambda_max() * r * (1.0 + 1e-12);
        self.tree.for_each_in_ball(x, reach, |i, p| {
            if ellipse_member(&inv, x, p, r) {
                acc.add(self.weights[i]);
            }
        });
        acc.value()
    }

    /// Indices of atoms inside `B_Λ(X, r)` (unordered).
    pub fn ellipse_indices(&self, lam: &SpdMatrix, x: &[f64], r: f64) -> Vec<usize> {
        let inv = lam.inverse();
        let reach = lam.lambda_max() * r * (1.0 + 1e-12);
        let mut out = Vec::new();
        self.tree.for_each_in_ball(x, reach, |i, p| {
            if ellipse_member(&inv, x, p, r) {
                out.push(i);
            }
        });
        out
    }

    /// Atoms inside the open ball `B(X, r)` sorted by distance to `X`,
    /// ties broken by index.
    pub fn support_in(&self, x: &[f64], r: f64) -> Result<Vec<usize>> {
        check_radius(r)?;
        check_dim(self.dim, x.len())?;
        let mut hits: Vec<(f64, usize)> = Vec::new();
        self.tree
            .for_each_in_ball(x, r, |i, p| hits.push((dist2(p, x), i)));
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(hits.into_iter().map(|(_, i)| i).collect())
    }

    /// Nearest atom as `(index, distance)`.
    pub fn nearest(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.tree.nearest(x)
    }

    /// Snap `X` onto the nearest atom when it is within `tol`.
    pub fn snap(&self, x: &[f64], tol: f64) -> Result<usize> {
        check_dim(self.dim, x.len())?;
        check_finite(x, "center")?;
        match self.nearest(x) {
            Some((i, d)) if d <= tol => Ok(i),
            Some((_, d)) => Err(GmtError::Domain(format!(
                "center is {d:e} away from the support (tolerance {tol:e})"
            ))),
            None => Err(GmtError::Domain("empty measure".into())),
        }
    }

    /// Push-forward by `p ↦ A·p + shift` with every weight multiplied by
    /// `mass_scale`.
    pub fn pushforward_affine(
        &self,
        a: &DMatrix<f64>,
        shift: &[f64],
        mass_scale: f64,
    ) -> Result<Self> {
        let d = self.dim;
        if a.nrows() != d || a.ncols() != d {
            return Err(GmtError::DimensionMismatch {
                expected: d,
                got: a.nrows(),
            });
        }
        check_dim(d, shift.len())?;
        if !(mass_scale > 0.0 && mass_scale.is_finite()) {
            return Err(GmtError::InvalidInput("mass_scale must be positive".into()));
        }
        let det = a.clone().lu().determinant();
        let scale = a.abs().max().powi(d as i32);
        if !det.is_finite() || det.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(GmtError::InvalidInput(
                "push-forward matrix is singular".into(),
            ));
        }
        let mut pts = Vec::with_capacity(self.points.len());
        for i in 0..self.len() {
            let y = mat_vec(a, self.point(i));
            pts.extend(y.iter().zip(shift).map(|(u, s)| u + s));
        }
        let w = self.weights.iter().map(|w| w * mass_scale).collect();
        DiscreteMeasure::new(pts, d, w)
    }

    /// Same atoms with weights multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        DiscreteMeasure::new(
            self.points.clone(),
            self.dim,
            self.weights.iter().map(|w| w * c).collect(),
        )
    }

    /// Same atoms with new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        DiscreteMeasure::new(self.points.clone(), self.dim, weights)
    }

    /// Sub-measure on the given atom indices (in the given order).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut pts = Vec::with_capacity(idx.len() * self.dim);
        let mut w = Vec::with_capacity(idx.len());
        for &i in idx {
            pts.extend_from_slice(self.point(i));
            w.push(self.weights[i]);
        }
        DiscreteMeasure::new(pts, self.dim, w)
    }

    /// Union of two measures on the same ambient space.
    pub fn union(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut pts = self.points.clone();
        pts.extend_from_slice(&other.points);
        let mut w = self.weights.clone();
        w.extend_from_slice(&other.weights);
        DiscreteMeasure::new(pts, self.dim, w)
    }

    /// Largest distance from `X` to an atom.
    pub fn radius_about(&self, x: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| dist2(self.point(i), x))
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        wtr.write_record(&header).map_err(csv_err)?;
        let mut rec: Vec<String> = Vec::with_capacity(self.dim + 1);
        for i in 0..self.len() {
            rec.clear();
            rec.extend(self.point(i).iter().map(|v| format!("{v:?}")));
            rec.push(format!("{:?}", self.weights[i]));
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `x0,...,x{d-1},weight`; the weight column is mandatory.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 2 || *cols.last().unwrap() != "weight" {
            return Err(GmtError::Parse {
                line: 1,
                msg: "header must be x0,...,x{d-1},weight".into(),
            });
        }
        let dim = cols.len() - 1;
        for (k, c) in cols[..dim].iter().enumerate() {
            if *c != format!("x{k}") {
                return Err(GmtError::Parse {
                    line: 1,
                    msg: format!("expected column x{k}, found {c}"),
                });
            }
        }
        let mut pts = Vec::new();
        let mut w = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row as u64 + 2;
            let rec = rec.map_err(|e| GmtError::Parse {
                line,
                msg: e.to_string(),
            })?;
            if rec.len() != dim + 1 {
                return Err(GmtError::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", dim + 1, rec.len()),
                });
            }
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| GmtError::Parse {
                    line,
                    msg: format!("cannot parse {field:?} as a number"),
                })?;
                if !v.is_finite() {
                    return Err(GmtError::Parse {
                        line,
                        msg: "non-finite value".into(),
                    });
                }
                if k == dim {
                    if v <= 0.0 {
                        return Err(GmtError::Parse {
                            line,
                            msg: format!("weight {v} is not positive"),
                        });
                    }
                    w.push(v);
                } else {
                    pts.push(v);
                }
            }
        }
        DiscreteMeasure::new(pts, dim, w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        DiscreteMeasure::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

#[inline]
fn ellipse_member(inv: &DMatrix<f64>, x: &[f64], p: &[f64], r: f64) -> bool {
    let d = x.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut v = 0.0;
        for j in 0..d {
            v += inv[(i, j)] * (p[j] - x[j]);
        }
        s += v * v;
    }
    s < r * r
}

pub(crate) fn csv_err(e: csv::Error) -> GmtError {
    let line = e.position().map_or(0, |p| p.line());
    GmtError::Parse {
        line,
        msg: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_mass_open_ball() {
        let m = DiscreteMeasure::new(vec![0.0, 0.0], 2, vec![1.0]).unwrap();
        assert_eq!(m.ball_mass(&[0.0, 0.0], 0.5).unwrap(), 1.0);
        assert_eq!(m.ball_mass(&[1.0, 0.0], 1.0).unwrap(), 0.0);
        assert!(m.ball_mass(&[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteMeasure::new(vec![0.0, 0.0], 2, vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0.0, 0.0], 2, vec![-1.0]).is_err());
        let text = "x0,x1,weight\n0,0,1\n1,1,0\n";
        assert!(matches!(
            DiscreteMeasure::read_csv(text.as_bytes()),
            Err(GmtError::Parse { line: 3, .. })
        ));
        let text = "x0,x1\n0,0\n";
        assert!(DiscreteMeasure::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m =
            DiscreteMeasure::new(vec![0.1, 1.0 / 3.0, -2.5e-17, 7.0], 2, vec![0.3, 1e-9]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = DiscreteMeasure::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.points(), m.points());
        assert_eq!(back.weights(), m.weights());
    }

    #[test]
    fn support_sorted_by_distance() {
        let m = DiscreteMeasure::new(
            vec![2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 9.0, 9.0],
            2,
            vec![1.0; 4],
        )
        .unwrap();
        assert_eq!(m.support_in(&[0.0, 0.0], 3.0).unwrap(), vec![1, 2, 0]);
        assert_eq!(m.support_in(&[0.0, 1.0], 0.5).unwrap(), Vec::<usize>::new());
        let single = DiscreteMeasure::new(vec![0.0, 0.0], 2, vec![1.0]).unwrap();
        assert_eq!(single.support_in(&[0.0, 0.0], 1.0).unwrap(), vec![0]);
    }

    #[test]
    fn identity_pushforward_is_bitwise() {
        let m = DiscreteMeasure::new(vec![0.1, -0.7, 3.3, 1e-300], 2, vec![0.5, 2.0]).unwrap();
        let id = DMatrix::identity(2, 2);
        let p = m.pushforward_affine(&id, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(p.points(), m.points());
        assert_eq!(p.weights(), m.weights());
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(m.pushforward_affine(&sing, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn scaled_identity_ellipse_is_ball() {
        let pts: Vec<f64> = (0..400)
            .map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0)
            .collect();
        let m = DiscreteMeasure::new(pts, 2, vec![1.0; 200]).unwrap();
        let f = MetricField::constant(&SpdMatrix::diagonal(&[2.0, 2.0]).unwrap(), 0.5).unwrap();
        for k in 0..20 {
            let x = [k as f64 / 20.0 - 0.5, 0.1];
            let r = 0.05 + k as f64 / 40.0;
            assert_eq!(
                m.ellipse_mass(&f, &x, r).unwrap(),
                m.ball_mass(&x, 2.0 * r).unwrap()
            );
        }
    }
}
