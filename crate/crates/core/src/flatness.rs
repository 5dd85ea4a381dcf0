//! Flatness coefficients: centered β, bilateral bβ (balls or Λ-ellipses),
//! smooth β₂, weighted plane fits, Hausdorff distance and decay fits.
//!
//! The plane infima in β and bβ are minimax problems over the Grassmannian.
//! They are approximated by a PCA seed followed by Nelder–Mead in the
//! tangent chart `e_i + Σ_j T_ij f_j` around a frame, with a few seeded
//! restarts; the search runs on a coarse discretisation and the surviving
//! candidates are re-scored at full resolution.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::SNAP_TOL;
use crate::error::{check_dim, check_radius, GmtError, Result};
use crate::kdtree::KdTree;
use crate::linalg::{
    dist, dot, jacobi_eigen, linear_fit, norm, orthogonal_complement, orthonormalize,
};
use crate::measure::DiscreteMeasure;
use crate::metric_field::{CompactBounds, MetricField, SpdMatrix};
use crate::optim::{grid_resolution, nelder_mead, unit_ball_grid, NelderMeadOptions};

const ORTHO_TOL: f64 = 1e-10;

/// Affine `n`-plane `base + span(basis)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plane {
    pub base: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    /// Unit normal in the hypersurface case `d = n + 1`.
    pub normal: Option<Vec<f64>>,
    #[serde(skip)]
    perp: Vec<Vec<f64>>,
}

impl Plane {
    /// Validates that `basis` rows are orthonormal.
    pub fn new(base: Vec<f64>, basis: Vec<Vec<f64>>) -> Result<Self> {
        let d = base.len();
        for (i, a) in basis.iter().enumerate() {
            check_dim(d, a.len())?;
            for (j, b) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot(a, b) - want).abs() > ORTHO_TOL {
                    return Err(GmtError::InvalidInput(
                        "plane basis is not orthonormal".into(),
                    ));
                }
            }
        }
        if basis.len() >= d {
            return Err(GmtError::InvalidInput(
                "plane must have positive codimension".into(),
            ));
        }
        Ok(Plane::from_frame(base, basis, None))
    }

    fn from_frame(base: Vec<f64>, basis: Vec<Vec<f64>>, perp: Option<Vec<Vec<f64>>>) -> Self {
        let d = base.len();
        let perp = perp.unwrap_or_else(|| orthogonal_complement(&basis, d));
        let normal = (perp.len() == 1).then(|| perp[0].clone());
        Plane {
            base,
            basis,
            normal,
            perp,
        }
    }

    /// Hyperplane through `base` with the given normal.
    pub fn with_normal(base: Vec<f64>, normal: &[f64]) -> Result<Self> {
        let nv = norm(normal);
        if !(nv > 0.0) {
            return Err(GmtError::InvalidInput("zero normal".into()));
        }
        let u: Vec<f64> = normal.iter().map(|x| x / nv).collect();
        let basis = orthogonal_complement(std::slice::from_ref(&u), base.len());
        Ok(Plane::from_frame(base, basis, Some(vec![u])))
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn n(&self) -> usize {
        self.basis.len()
    }

    /// Orthonormal basis of the normal space.
    pub fn normal_space(&self) -> &[Vec<f64>] {
        &self.perp
    }

    pub fn distance(&self, p: &[f64]) -> f64 {
        let mut s = 0.0;
        for f in &self.perp {
            let mut c = 0.0;
            for k in 0..p.len() {
                c += (p[k] - self.base[k]) * f[k];
            }
            s += c * c;
        }
        s.sqrt()
    }

    /// Angle between normal spaces (largest principal angle).
    pub fn angle_to(&self, other: &Plane) -> f64 {
        // for equal dimensions, sin of the largest principal angle is the
        // largest residual of projecting one normal space onto the other
        let mut worst = 0.0_f64;
        for f in &self.perp {
            let proj: f64 = other.perp.iter().map(|g| dot(f, g).powi(2)).sum();
            worst = worst.max((1.0 - proj).max(0.0).sqrt());
        }
        worst.min(1.0).asin()
    }
}

/// Smooth cut-off: `φ = 1` on `[0, a]`, `0` on `[b, ∞)`, and the C^∞
/// transition `ψ((b − t)/(b − a))` in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub inner: f64,
    pub outer: f64,
}

impl KernelSpec {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
            return Err(GmtError::InvalidInput(format!(
                "kernel needs 0 <= a < b, got ({inner}, {outer})"
            )));
        }
        Ok(KernelSpec { inner, outer })
    }

    /// The `(2, 3)` kernel of the smooth β₂ numbers.
    pub fn beta2() -> Self {
        KernelSpec {
            inner: 2.0,
            outer: 3.0,
        }
    }

    /// The `(1, 2)` kernel of the flatness functional.
    pub fn functional() -> Self {
        KernelSpec {
            inner: 1.0,
            outer: 2.0,
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        if t <= self.inner {
            1.0
        } else if t >= self.outer {
            0.0
        } else {
            psi((self.outer - t) / (self.outer - self.inner))
        }
    }
}

fn bump(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

fn psi(u: f64) -> f64 {
    let a = bump(u);
    let b = bump(1.0 - u);
    a / (a + b)
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff_distance(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(GmtError::Domain(
            "Hausdorff distance of an empty set".into(),
        ));
    }
    if !a.len().is_multiple_of(dim) || !b.len().is_multiple_of(dim) {
        return Err(GmtError::InvalidInput(
            "coordinate count not divisible by dim".into(),
        ));
    }
    let ta = KdTree::build(a, dim, None);
    let tb = KdTree::build(b, dim, None);
    Ok(directed(a, dim, &tb).max(directed(b, dim, &ta)))
}

fn directed(from: &[f64], dim: usize, to: &KdTree) -> f64 {
    from.chunks(dim)
        .map(|p| to.nearest(p).map_or(f64::INFINITY, |(_, d)| d))
        .fold(0.0, f64::max)
}

/// Orthonormal frame: `rows` span the candidate plane, `perp` its normal space.
#[derive(Debug, Clone)]
struct Frame {
    rows: Vec<Vec<f64>>,
    perp: Vec<Vec<f64>>,
}

impl Frame {
    /// Plane through the origin at chart coordinates `t` (row-major `n × (d−n)`).
    fn chart(&self, t: &[f64]) -> Option<Plane> {
        let d = self.rows[0].len();
        let c = self.perp.len();
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut v = e.clone();
                for (j, f) in self.perp.iter().enumerate() {
                    let s = t[i * c + j];
                    for k in 0..d {
                        v[k] += s * f[k];
                    }
                }
                v
            })
            .collect();
        // f_j − Σ_i T_ij e_i is orthogonal to every perturbed row
        let perp: Vec<Vec<f64>> = self
            .perp
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let mut v = f.clone();
                for (i, e) in self.rows.iter().enumerate() {
                    let s = t[i * c + j];
                    for k in 0..d {
                        v[k] -= s * e[k];
                    }
                }
                v
            })
            .collect();
        let rows = orthonormalize(&rows)?;
        let perp = orthonormalize(&perp)?;
        Some(Plane::from_frame(vec![0.0; d], rows, Some(perp)))
    }

    fn from_plane(p: &Plane) -> Self {
        Frame {
            rows: p.basis.clone(),
            perp: p.perp.clone(),
        }
    }
}

/// Eigen-frame of a weighted second moment about the origin: the `n` top
/// eigenvectors span the plane. Signs follow the third moment, so the frame
/// moves with the data under orthogonal maps.
fn moment_frame(rel: &[f64], weights: &[f64], d: usize, n: usize) -> (Frame, Vec<f64>) {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (p, w) in rel.chunks(d).zip(weights) {
        for i in 0..d {
            for j in i..d {
                m[(i, j)] += w * p[i] * p[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    let eig = jacobi_eigen(&m);
    let mut vecs: Vec<Vec<f64>> = (0..d)
        .rev()
        .map(|c| eig.vectors.column(c).iter().copied().collect())
        .collect();
    for v in vecs.iter_mut() {
        let (mut t3, mut a3) = (0.0, 0.0);
        for (p, w) in rel.chunks(d).zip(weights) {
            let c = dot(p, v);
            t3 += w * c * c * c;
            a3 += w * (c * c * c).abs();
        }
        if t3 < -1e-9 * a3 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let perp = vecs.split_off(n);
    let mut values = eig.values.clone();
    values.reverse();
    (Frame { rows: vecs, perp }, values)
}

/// Options for the plane searches in β and bβ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Plane dimension; defaults to `d − 1`.
    pub n: Option<usize>,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Plane-side grid size for the final evaluation.
    pub grid_points: usize,
    /// Plane-side grid size during the search.
    pub search_grid_points: usize,
    /// Support atoms used during the search (uniform stride).
    pub search_sample: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n: None,
            max_iter: 200,
            restarts: 3,
            seed: 0x00be_7a5e,
            grid_points: 4096,
            search_grid_points: 512,
            search_sample: 4000,
        }
    }
}

/// A coefficient with the plane that attains it.
#[derive(Debug, Clone, Serialize)]
pub struct FlatnessValue {
    pub value: f64,
    pub plane: Plane,
    /// Covering radius of the plane-side grid relative to the radius
    /// (zero for one-sided coefficients).
    pub resolution: f64,
    pub points: usize,
}

/// Ball `B(X, r)` or ellipse `B_Λ(X, r)`, with atoms stored relative to `X`.
struct Local {
    d: usize,
    n: usize,
    r: f64,
    rel: Vec<f64>,
    tree: KdTree,
    search_idx: Vec<usize>,
    // Λ(X)⁻¹ for the ellipse variant
    inv: Option<DMatrix<f64>>,
}

impl Local {
    fn gather(
        mu: &DiscreteMeasure,
        x: &[f64],
        r: f64,
        lam: Option<&SpdMatrix>,
        n: usize,
        search_sample: usize,
    ) -> Result<Self> {
        let d = mu.dim();
        let idx = match lam {
            Some(l) => {
                let mut v = mu.ellipse_indices(l, x, r);
                v.sort_unstable();
                v
            }
            None => {
                let mut v = mu.tree().ball_indices(x, r);
                v.sort_unstable();
                v
            }
        };
        if idx.is_empty() {
            return Err(GmtError::Domain(format!(
                "no support in the ball of radius {r}"
            )));
        }
        let mut rel = Vec::with_capacity(idx.len() * d);
        for &i in &idx {
            rel.extend(mu.point(i).iter().zip(x).map(|(p, c)| p - c));
        }
        let tree = KdTree::build(&rel, d, None);
        let m = idx.len();
        let stride = m.div_ceil(search_sample.max(1)).max(1);
        Ok(Local {
            d,
            n,
            r,
            rel,
            tree,
            search_idx: (0..m).step_by(stride).collect(),
            inv: lam.map(|l| l.inverse()),
        })
    }

    fn len(&self) -> usize {
        self.rel.len() / self.d
    }

    fn atom(&self, i: usize) -> &[f64] {
        &self.rel[i * self.d..(i + 1) * self.d]
    }

    /// In-plane section of the region: eigenpairs of `A = E Λ⁻² Eᵀ`
    /// (identity for balls), as `(U columns, a)`.
    fn section(&self, plane: &Plane) -> Section {
        let n = self.n;
        match &self.inv {
            None => Section {
                u: DMatrix::identity(n, n),
                a: vec![1.0; n],
            },
            Some(inv) => {
                // rows of W = E Λ⁻¹ ; A = W Wᵀ
                let w: Vec<Vec<f64>> = plane
                    .basis
                    .iter()
                    .map(|e| {
                        (0..self.d)
                            .map(|k| (0..self.d).map(|j| e[j] * inv[(j, k)]).sum())
                            .collect()
                    })
                    .collect();
                let a = DMatrix::from_fn(n, n, |i, j| dot(&w[i], &w[j]));
                let eig = jacobi_eigen(&a);
                Section {
                    u: eig.vectors,
                    a: eig.values,
                }
            }
        }
    }

    /// `sup_{s ∈ Σ∩R} dist(s, P∩R)` over the given atoms, exactly.
    fn side_support(
        &self,
        plane: &Plane,
        sec: &Section,
        atoms: &mut dyn Iterator<Item = usize>,
    ) -> f64 {
        let mut worst = 0.0_f64;
        let mut c = vec![0.0; self.n];
        for i in atoms {
            let s = self.atom(i);
            let mut h2 = 0.0;
            for f in &plane.perp {
                let v = dot(s, f);
                h2 += v * v;
            }
            for (ci, e) in c.iter_mut().zip(&plane.basis) {
                *ci = dot(s, e);
            }
            let g2 = sec.outside2(&c, self.r);
            worst = worst.max(h2 + g2);
        }
        worst.sqrt()
    }

    /// `sup_{q ∈ P∩R} dist(q, Σ∩R)` over a grid of the section.
    fn side_plane(&self, plane: &Plane, sec: &Section, grid: &[Vec<f64>]) -> f64 {
        let mut worst = 0.0_f64;
        let mut q = vec![0.0; self.d];
        let scale: Vec<f64> = sec.a.iter().map(|a| self.r / a.sqrt()).collect();
        let mut t = vec![0.0; self.n];
        for u in grid {
            for (i, ti) in t.iter_mut().enumerate() {
                *ti = (0..self.n).map(|j| sec.u[(i, j)] * scale[j] * u[j]).sum();
            }
            q.iter_mut().for_each(|v| *v = 0.0);
            for (ti, e) in t.iter().zip(&plane.basis) {
                for k in 0..self.d {
                    q[k] += ti * e[k];
                }
            }
            let (_, dq) = self.tree.nearest(&q).unwrap();
            worst = worst.max(dq);
        }
        worst
    }

    fn bilateral(&self, plane: &Plane, grid: &[Vec<f64>], coarse: bool) -> f64 {
        let sec = self.section(plane);
        let s1 = if coarse {
            self.side_support(plane, &sec, &mut self.search_idx.iter().copied())
        } else {
            self.side_support(plane, &sec, &mut (0..self.len()))
        };
        s1.max(self.side_plane(plane, &sec, grid)) / self.r
    }

    fn one_sided(&self, plane: &Plane, coarse: bool) -> f64 {
        let mut worst = 0.0_f64;
        let mut eval = |i: usize| {
            let s = self.atom(i);
            let mut h2 = 0.0;
            for f in &plane.perp {
                let v = dot(s, f);
                h2 += v * v;
            }
            worst = worst.max(h2);
        };
        if coarse {
            self.search_idx.iter().for_each(|&i| eval(i));
        } else {
            (0..self.len()).for_each(eval);
        }
        worst.sqrt() / self.r
    }

    fn pca_frame(&self) -> Frame {
        let w = vec![1.0; self.len()];
        moment_frame(&self.rel, &w, self.d, self.n).0
    }
}

struct Section {
    u: DMatrix<f64>,
    a: Vec<f64>,
}

impl Section {
    /// Squared distance from in-plane coordinates `c` to `{tᵀ A t ≤ r²}`.
    fn outside2(&self, c: &[f64], r: f64) -> f64 {
        let n = c.len();
        let z: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| self.u[(i, j)] * c[i]).sum())
            .collect();
        let q: f64 = z.iter().zip(&self.a).map(|(zi, ai)| ai * zi * zi).sum();
        let r2 = r * r;
        if q <= r2 {
            return 0.0;
        }
        if self.a.iter().all(|a| *a == 1.0) {
            let cn = q.sqrt();
            return (cn - r) * (cn - r);
        }
        // projection y_i = z_i/(1 + ν a_i) with Σ a_i y_i² = r²
        let g = |nu: f64| -> f64 {
            z.iter()
                .zip(&self.a)
                .map(|(zi, ai)| ai * (zi / (1.0 + nu * ai)).powi(2))
                .sum()
        };
        let mut lo = 0.0;
        let mut hi = (z
            .iter()
            .zip(&self.a)
            .map(|(zi, ai)| zi * zi / ai)
            .sum::<f64>())
        .sqrt()
            / r;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > r2 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let nu = hi;
        z.iter()
            .zip(&self.a)
            .map(|(zi, ai)| {
                let y = zi / (1.0 + nu * ai);
                (zi - y) * (zi - y)
            })
            .sum()
    }
}

/// Minimise `coarse` over planes through the origin from the given starting
/// frames plus seeded random restarts, then re-score the candidates with
/// `fine`.
fn search<C, F>(
    start: Frame,
    extra: &[Frame],
    opts: &SearchOptions,
    mut coarse: C,
    mut fine: F,
) -> (Plane, f64)
where
    C: FnMut(&Plane) -> f64,
    F: FnMut(&Plane) -> f64,
{
    let n = start.rows.len();
    let c = start.perp.len();
    let k = n * c;
    let mut starts = vec![start.clone()];
    starts.extend(extra.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let t: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
        if let Some(p) = start.chart(&t) {
            starts.push(Frame::from_plane(&p));
        }
    }
    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let mut candidates: Vec<Plane> = Vec::new();
    for fr in &starts {
        if let Some(p0) = fr.chart(&vec![0.0; k]) {
            candidates.push(p0);
        }
        let res = nelder_mead(
            |t| fr.chart(t).map_or(f64::INFINITY, |p| coarse(&p)),
            &vec![0.0; k],
            &nm,
        );
        if let Some(p) = fr.chart(&res.x) {
            candidates.push(p);
        }
    }
    let mut best: Option<(Plane, f64)> = None;
    for p in candidates {
        let v = fine(&p);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((p, v));
        }
    }
    best.expect("at least one candidate plane")
}

fn plane_dim(mu: &DiscreteMeasure, opts: &SearchOptions) -> Result<usize> {
    let d = mu.dim();
    let n = opts.n.unwrap_or(d - 1);
    if n == 0 || n >= d {
        return Err(GmtError::InvalidInput(format!(
            "plane dimension {n} invalid in R^{d}"
        )));
    }
    Ok(n)
}

fn shift_plane(p: Plane, x: &[f64]) -> Plane {
    Plane {
        base: x.to_vec(),
        ..p
    }
}

/// Centered β: `inf_{P ∋ X} sup_{s ∈ Σ∩B(X,r)} dist(s, P)/r`.
pub fn beta_centered(mu: &DiscreteMeasure, x: &[f64], r: f64) -> Result<f64> {
    Ok(beta_centered_with(mu, x, r, &SearchOptions::default(), &[])?.value)
}

/// [`beta_centered`] with explicit search options and extra seed planes
/// (only their directions are used).
pub fn beta_centered_with(
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    opts: &SearchOptions,
    seeds: &[Plane],
) -> Result<FlatnessValue> {
    check_radius(r)?;
    let n = plane_dim(mu, opts)?;
    let c = mu.point(mu.snap(x, SNAP_TOL)?).to_vec();
    let local = Local::gather(mu, &c, r, None, n, opts.search_sample)?;
    let extra: Vec<Frame> = seeds.iter().map(Frame::from_plane).collect();
    let (plane, value) = search(
        local.pca_frame(),
        &extra,
        opts,
        |p| local.one_sided(p, true),
        |p| local.one_sided(p, false),
    );
    Ok(FlatnessValue {
        value: value.min(1.0),
        plane: shift_plane(plane, &c),
        resolution: 0.0,
        points: local.len(),
    })
}

/// Bilateral β: `inf_{P ∋ X} D[Σ∩R; P∩R]/r` with `R = B(X, r)`, or
/// `R = B_Λ(X, r)` when a field is given.
pub fn bbeta(mu: &DiscreteMeasure, x: &[f64], r: f64, field: Option<&MetricField>) -> Result<f64> {
    Ok(bbeta_with(mu, x, r, field, &SearchOptions::default(), &[])?.value)
}

pub fn bbeta_with(
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    field: Option<&MetricField>,
    opts: &SearchOptions,
    seeds: &[Plane],
) -> Result<FlatnessValue> {
    check_radius(r)?;
    let n = plane_dim(mu, opts)?;
    let c = mu.point(mu.snap(x, SNAP_TOL)?).to_vec();
    let lam = match field {
        Some(f) if !f.is_identity() => Some(f.eval(&c)?),
        _ => None,
    };
    let local = Local::gather(mu, &c, r, lam.as_ref(), n, opts.search_sample)?;
    let coarse_grid = unit_ball_grid(n, opts.search_grid_points.max(8));
    let fine_grid = unit_ball_grid(n, opts.grid_points.max(8));
    let extra: Vec<Frame> = seeds.iter().map(Frame::from_plane).collect();
    let (plane, value) = search(
        local.pca_frame(),
        &extra,
        opts,
        |p| local.bilateral(p, &coarse_grid, true),
        |p| local.bilateral(p, &fine_grid, false),
    );
    Ok(FlatnessValue {
        value,
        plane: shift_plane(plane, &c),
        resolution: grid_resolution(n, opts.grid_points * 3 / 4),
        points: local.len(),
    })
}

/// `D[Σ∩R; P∩R]` (not normalised) for a fixed plane through `X`.
pub fn bilateral_distance(
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    lam: Option<&SpdMatrix>,
    plane: &Plane,
    grid_points: usize,
) -> Result<f64> {
    check_radius(r)?;
    check_dim(mu.dim(), x.len())?;
    if plane.distance(x) > 1e-9 * r.max(1.0) {
        return Err(GmtError::InvalidInput(
            "plane does not pass through X".into(),
        ));
    }
    let local = Local::gather(mu, x, r, lam, plane.n(), usize::MAX)?;
    let rel = Plane::from_frame(
        vec![0.0; x.len()],
        plane.basis.clone(),
        Some(plane.perp.clone()),
    );
    let grid = unit_ball_grid(plane.n(), grid_points.max(8));
    Ok(local.bilateral(&rel, &grid, false) * r)
}

struct Weighted {
    rel: Vec<f64>,
    w: Vec<f64>,
    count: usize,
}

fn kernel_weights(mu: &DiscreteMeasure, x: &[f64], r: f64, kernel: &KernelSpec) -> Weighted {
    let mut rel = Vec::new();
    let mut w = Vec::new();
    mu.tree().for_each_in_ball(x, kernel.outer * r, |i, p| {
        let phi = kernel.phi(dist(p, x) / r);
        if phi > 0.0 {
            rel.extend(p.iter().zip(x).map(|(a, b)| a - b));
            w.push(mu.weight(i) * phi);
        }
    });
    let count = w.len();
    Weighted { rel, w, count }
}

/// Plane minimising the kernel-weighted squared distances, either among
/// affine planes (about the weighted centroid) or among planes through `X`.
pub fn fit_plane_weighted(
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    kernel: &KernelSpec,
    through_center: bool,
    n: usize,
) -> Result<Plane> {
    Ok(weighted_fit(mu, x, r, kernel, through_center, n)?.0)
}

/// Returns the plane and the minimal weighted sum of squared distances.
fn weighted_fit(
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    kernel: &KernelSpec,
    through_center: bool,
    n: usize,
) -> Result<(Plane, f64)> {
    check_radius(r)?;
    let d = mu.dim();
    check_dim(d, x.len())?;
    if n == 0 || n >= d {
        return Err(GmtError::InvalidInput(format!(
            "plane dimension {n} invalid in R^{d}"
        )));
    }
    let Weighted { mut rel, w, count } = kernel_weights(mu, x, r, kernel);
    if count < n + 1 {
        return Err(GmtError::Degenerate(format!(
            "{count} weighted atoms cannot determine a {n}-plane"
        )));
    }
    let mut center = x.to_vec();
    if !through_center {
        let tw: f64 = w.iter().sum();
        let mut cm = vec![0.0; d];
        for (p, wi) in rel.chunks(d).zip(&w) {
            for k in 0..d {
                cm[k] += wi * p[k] / tw;
            }
        }
        for p in rel.chunks_mut(d) {
            for k in 0..d {
                p[k] -= cm[k];
            }
        }
        for k in 0..d {
            center[k] += cm[k];
        }
    }
    let (frame, values) = moment_frame(&rel, &w, d, n);
    let top = values[0];
    if !(values[n - 1] > 1e-12 * top) {
        return Err(GmtError::Degenerate(
            "moment matrix is rank deficient".into(),
        ));
    }
    let residual: f64 = values[n..].iter().sum::<f64>().max(0.0);
    Ok((
        Plane::from_frame(center, frame.rows, Some(frame.perp)),
        residual,
    ))
}

/// Smooth β₂ with kernel `φ(|p − X|/r)` and the affine least-squares plane:
/// `(r^{−(n+2)} Σ w_i φ_i dist(p_i, P)²)^{1/2}`.
pub fn beta2_smooth(
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    kernel: &KernelSpec,
    n: usize,
) -> Result<f64> {
    let (_, res) = weighted_fit(mu, x, r, kernel, false, n)?;
    Ok((res / r.powi(n as i32 + 2)).sqrt())
}

/// Same as [`beta2_smooth`], also returning the minimising plane.
pub fn beta2_with_plane(
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    kernel: &KernelSpec,
    n: usize,
) -> Result<(f64, Plane)> {
    let (p, res) = weighted_fit(mu, x, r, kernel, false, n)?;
    Ok(((res / r.powi(n as i32 + 2)).sqrt(), p))
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatnessProfile {
    pub center: Vec<f64>,
    pub scales: Vec<f64>,
    pub beta: Vec<f64>,
    pub bbeta: Vec<f64>,
    pub bbeta_aniso: Vec<f64>,
    pub beta2: Vec<f64>,
    pub grid_resolution: f64,
    pub gamma_fit: Option<f64>,
}

/// All coefficients at each scale. β is searched with bβ's plane as an extra
/// seed, which keeps `β ≤ bβ` exact.
pub fn flatness_profile(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    x: &[f64],
    scales: &[f64],
    opts: &SearchOptions,
) -> Result<FlatnessProfile> {
    let n = plane_dim(mu, opts)?;
    let c = mu.point(mu.snap(x, SNAP_TOL)?).to_vec();
    let mut prof = FlatnessProfile {
        center: c.clone(),
        scales: scales.to_vec(),
        beta: vec![],
        bbeta: vec![],
        bbeta_aniso: vec![],
        beta2: vec![],
        grid_resolution: grid_resolution(n, opts.grid_points * 3 / 4),
        gamma_fit: None,
    };
    for &r in scales {
        let bb = bbeta_with(mu, &c, r, None, opts, &[])?;
        let b = beta_centered_with(mu, &c, r, opts, std::slice::from_ref(&bb.plane))?;
        let ba = match field {
            Some(f) if !f.is_identity() => bbeta_with(mu, &c, r, Some(f), opts, &[])?.value,
            _ => bb.value,
        };
        let b2 = beta2_smooth(mu, &c, r, &KernelSpec::beta2(), n)?;
        prof.beta.push(b.value);
        prof.bbeta.push(bb.value);
        prof.bbeta_aniso.push(ba);
        prof.beta2.push(b2);
    }
    prof.gamma_fit = decay_fit(&prof).ok().map(|(g, _)| g);
    Ok(prof)
}

/// Least-squares `log value = log C + γ log r` over entries with value > 1e-12.
pub fn power_law_fit(scales: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = scales
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 1e-12)
        .map(|(r, v)| (r.ln(), v.ln()))
        .unzip();
    if lx.len() < 3 {
        return Err(GmtError::Domain(format!(
            "decay fit needs 3 scales with positive coefficient, got {}",
            lx.len()
        )));
    }
    let (a, g) =
        linear_fit(&lx, &ly).ok_or_else(|| GmtError::Degenerate("repeated scales".into()))?;
    Ok((g, a.exp()))
}

/// `(γ̂, Ĉ)` with `β(r) ≈ Ĉ r^γ̂`.
pub fn decay_fit(profile: &FlatnessProfile) -> Result<(f64, f64)> {
    power_law_fit(&profile.scales, &profile.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Implication {
    Holds,
    Fails,
    HypothesisNotMet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationCheck {
    pub hypothesis_lhs: f64,
    pub hypothesis_rhs: f64,
    pub conclusion_lhs: f64,
    pub conclusion_rhs: f64,
    pub verdict: Implication,
}

impl ImplicationCheck {
    pub(crate) fn new(hl: f64, hr: f64, cl: f64, cr: f64) -> Self {
        let verdict = if hl > hr {
            Implication::HypothesisNotMet
        } else if cl <= cr {
            Implication::Holds
        } else {
            Implication::Fails
        };
        ImplicationCheck {
            hypothesis_lhs: hl,
            hypothesis_rhs: hr,
            conclusion_lhs: cl,
            conclusion_rhs: cr,
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub r_prime: f64,
    pub r_double_prime: f64,
    /// Euclidean flatness at `r′ = λ_max(K) r` ⇒ anisotropic flatness at `r`.
    pub euclidean_to_anisotropic: ImplicationCheck,
    /// Anisotropic flatness at `r` ⇒ Euclidean flatness at `r″ = λ_min(K) r`.
    pub anisotropic_to_euclidean: ImplicationCheck,
}

/// Evaluates both transfer statements between Euclidean and anisotropic
/// flatness for a fixed plane through `X`.
#[allow(clippy::too_many_arguments)]
pub fn flatness_comparison_check(
    field: &MetricField,
    bounds: &CompactBounds,
    mu: &DiscreteMeasure,
    x: &[f64],
    r: f64,
    plane: &Plane,
    delta: f64,
    grid_points: usize,
) -> Result<ComparisonRecord> {
    check_radius(r)?;
    if !(delta > 0.0) || delta >= bounds.delta_k {
        return Err(GmtError::Hypothesis(format!(
            "delta = {delta} must lie in (0, delta_K = {})",
            bounds.delta_k
        )));
    }
    let c = mu.point(mu.snap(x, SNAP_TOL)?).to_vec();
    let lam = field.eval(&c)?;
    let e = bounds.eccentricity;
    let r1 = bounds.lambda_max_k * r;
    let r2 = bounds.lambda_min_k * r;
    let eu_r1 = bilateral_distance(mu, &c, r1, None, plane, grid_points)?;
    let an_r = bilateral_distance(mu, &c, r, Some(&lam), plane, grid_points)?;
    let eu_r2 = bilateral_distance(mu, &c, r2, None, plane, grid_points)?;
    Ok(ComparisonRecord {
        r_prime: r1,
        r_double_prime: r2,
        euclidean_to_anisotropic: ImplicationCheck::new(
            eu_r1,
            delta * r1,
            an_r,
            (2.0 + e) * delta * r1,
        ),
        anisotropic_to_euclidean: ImplicationCheck::new(an_r, delta * r, eu_r2, 2.0 * delta * r),
    })
}
