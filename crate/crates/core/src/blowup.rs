//! Rescalings, the `F_r`/`F` distances between measures, the flatness
//! functional and the uniformity/conicality defects.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_dim, check_radius, GmtError, Result};
use crate::flatness::{KernelSpec, Plane};
use crate::kdtree::KdTree;
use crate::linalg::{dist, dist2, jacobi_eigen, mat_vec, norm};
use crate::measure::DiscreteMeasure;
use crate::metric_field::MetricField;
use crate::transport::solve_transport;

/// Normalised blow-up `T_{X,r}[μ]/μ(B(X,r))`, or its anisotropic version.
#[derive(Debug, Clone)]
pub struct RescaledMeasure {
    pub center: Vec<f64>,
    pub radius: f64,
    pub anisotropic: bool,
    /// `μ(B(X,r))` or `μ(B_Λ(X,r))`.
    pub normalizer: f64,
    pub measure: DiscreteMeasure,
}

/// `p ↦ (p − X)/r` (or `Λ(X)⁻¹(p − X)/r` with a field), weights divided by
/// the mass of the matching ball or ellipse.
pub fn rescale(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    x: &[f64],
    r: f64,
) -> Result<RescaledMeasure> {
    check_radius(r)?;
    check_dim(mu.dim(), x.len())?;
    let d = mu.dim();
    let (a, normalizer, anisotropic) = match field {
        Some(f) if !f.is_identity() => {
            let lam = f.eval(x)?;
            let m = mu.ellipse_mass_with(&lam, x, r);
            (lam.inverse() / r, m, true)
        }
        _ => (DMatrix::identity(d, d) / r, mu.ball_mass(x, r)?, false),
    };
    if normalizer <= 0.0 {
        return Err(GmtError::Domain(format!(
            "no mass at scale {r} about the center"
        )));
    }
    let shift: Vec<f64> = mat_vec(&a, x).iter().map(|v| -v).collect();
    let measure = mu.pushforward_affine(&a, &shift, 1.0 / normalizer)?;
    Ok(RescaledMeasure {
        center: x.to_vec(),
        radius: r,
        anisotropic,
        normalizer,
        measure,
    })
}

/// Largest atom count passed to the exact solver.
pub const LP_CAP: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct FrResult {
    pub r: f64,
    /// Exact optimum of the (possibly aggregated) problem.
    pub value: f64,
    /// Objective of the explicit Lipschitz witness built from the duals.
    pub certificate: f64,
    pub gap: f64,
    /// Bound on `|value − F_r|` caused by aggregation (zero when exact).
    pub subsample_error: f64,
    pub atoms: usize,
    pub pivots: usize,
}

struct Atoms {
    d: usize,
    pos: Vec<f64>,
    c: Vec<f64>,
}

impl Atoms {
    fn len(&self) -> usize {
        self.c.len()
    }

    fn at(&self, i: usize) -> &[f64] {
        &self.pos[i * self.d..(i + 1) * self.d]
    }
}

/// Farthest-point centres over a strided candidate pool, then every atom is
/// moved to its nearest centre; returns the merged atoms and `Σ|c|·moved`.
fn aggregate(atoms: Atoms, cap: usize) -> (Atoms, f64) {
    let n = atoms.len();
    if n <= cap {
        return (atoms, 0.0);
    }
    let d = atoms.d;
    let stride = n.div_ceil(20 * cap).max(1);
    let pool: Vec<usize> = (0..n).step_by(stride).collect();
    let mut best = vec![f64::INFINITY; pool.len()];
    let start = (0..pool.len())
        .min_by(|&a, &b| norm(atoms.at(pool[a])).total_cmp(&norm(atoms.at(pool[b]))))
        .unwrap_or(0);
    let mut centres: Vec<f64> = Vec::with_capacity(cap * d);
    let mut next = start;
    for _ in 0..cap.min(pool.len()) {
        let c = atoms.at(pool[next]).to_vec();
        let mut far = 0.0;
        let mut far_i = 0;
        for (k, &p) in pool.iter().enumerate() {
            let dd = dist2(atoms.at(p), &c);
            if dd < best[k] {
                best[k] = dd;
            }
            if best[k] > far {
                far = best[k];
                far_i = k;
            }
        }
        centres.extend_from_slice(&c);
        if far == 0.0 {
            break;
        }
        next = far_i;
    }
    let tree = KdTree::build(&centres, d, None);
    let mut merged = vec![0.0; centres.len() / d];
    let mut moved = 0.0;
    for i in 0..n {
        let (j, dj) = tree.nearest(atoms.at(i)).expect("centres are non-empty");
        merged[j] += atoms.c[i];
        moved += atoms.c[i].abs() * dj;
    }
    (
        Atoms {
            d,
            pos: centres,
            c: merged,
        },
        moved,
    )
}

/// `sup Σ c_k f_k` over `0 ≤ f_k ≤ (r − |x_k|)₊`, `|f_k − f_l| ≤ |x_k − x_l|`,
/// solved as a transport problem with a dumping bank for each side.
/// Returns `(optimum, witness objective, pivots)`.
fn one_sided(atoms: &Atoms, r: f64, sign: f64) -> Result<(f64, f64, usize)> {
    let src: Vec<usize> = (0..atoms.len())
        .filter(|&i| sign * atoms.c[i] > 0.0)
        .collect();
    let snk: Vec<usize> = (0..atoms.len())
        .filter(|&i| sign * atoms.c[i] < 0.0)
        .collect();
    if src.is_empty() {
        return Ok((0.0, 0.0, 0));
    }
    let cap = |i: usize| (r - norm(atoms.at(i))).max(0.0);
    let pos_total: f64 = src.iter().map(|&i| sign * atoms.c[i]).sum();
    let neg_total: f64 = snk.iter().map(|&j| -sign * atoms.c[j]).sum();
    let mut supply: Vec<f64> = src.iter().map(|&i| sign * atoms.c[i]).collect();
    let mut demand: Vec<f64> = snk.iter().map(|&j| -sign * atoms.c[j]).collect();
    let bank_src = neg_total > 0.0;
    if bank_src {
        supply.push(neg_total);
    }
    demand.push(pos_total);
    let (m, k) = (supply.len(), demand.len());
    let mut cost = vec![0.0; m * k];
    for (a, &i) in src.iter().enumerate() {
        for (b, &j) in snk.iter().enumerate() {
            cost[a * k + b] = dist(atoms.at(i), atoms.at(j));
        }
        cost[a * k + k - 1] = cap(i);
    }
    // bank source ships free everywhere (row already zero)
    let sol = solve_transport(&supply, &demand, &cost)?;
    // f_i = π_bank − π_i on the sources, then the McShane extension
    let pi_bank = sol.potentials[m + k - 1];
    let g: Vec<f64> = src
        .iter()
        .enumerate()
        .map(|(a, &i)| (pi_bank - sol.potentials[a]).clamp(0.0, cap(i)))
        .collect();
    let mut witness = 0.0;
    for t in 0..atoms.len() {
        let x = atoms.at(t);
        let f = src
            .iter()
            .zip(&g)
            .map(|(&i, gi)| gi - dist(x, atoms.at(i)))
            .fold(0.0, f64::max);
        witness += sign * atoms.c[t] * f;
    }
    Ok((sol.cost, witness, sol.pivots))
}

/// Exact `F_r(ν₁, ν₂)` with the default atom cap.
pub fn fr_distance(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, r: f64) -> Result<FrResult> {
    fr_distance_with(nu1, nu2, r, LP_CAP)
}

/// `F_r` on the atoms inside `B(0, r)`; above `cap` atoms the problem is
/// aggregated onto farthest-point centres and the transport bound of that
/// move is reported.
pub fn fr_distance_with(
    nu1: &DiscreteMeasure,
    nu2: &DiscreteMeasure,
    r: f64,
    cap: usize,
) -> Result<FrResult> {
    check_radius(r)?;
    check_dim(nu1.dim(), nu2.dim())?;
    if cap < 2 {
        return Err(GmtError::InvalidInput("atom cap must be at least 2".into()));
    }
    let d = nu1.dim();
    let origin = vec![0.0; d];
    let mut atoms = Atoms {
        d,
        pos: Vec::new(),
        c: Vec::new(),
    };
    for (nu, s) in [(nu1, 1.0), (nu2, -1.0)] {
        for i in nu.support_in(&origin, r)? {
            atoms.pos.extend_from_slice(nu.point(i));
            atoms.c.push(s * nu.weight(i));
        }
    }
    let (atoms, subsample_error) = aggregate(atoms, cap);
    let (plus, minus) = rayon::join(|| one_sided(&atoms, r, 1.0), || one_sided(&atoms, r, -1.0));
    let (plus, minus) = (plus?, minus?);
    let (value, certificate) = if plus.0 >= minus.0 {
        (plus.0, plus.1)
    } else {
        (minus.0, minus.1)
    };
    Ok(FrResult {
        r,
        value,
        certificate,
        gap: value - certificate,
        subsample_error,
        atoms: atoms.len(),
        pivots: plus.2 + minus.2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FDistance {
    pub value: f64,
    /// `2^{-k} F_{2^k}` for `k = 1..=k_max`.
    pub terms: Vec<f64>,
    /// Bound on the omitted tail; infinite when the total masses differ.
    pub tail_bound: f64,
    pub subsample_error: f64,
}

/// `Σ_{k=1}^{k_max} 2^{-k} F_{2^k}(ν₁, ν₂)`.
///
/// For equal total masses every `F_R` is at most the Kantorovich–Rubinstein
/// bound `M·diam`, giving the tail `2^{-k_max}·M·diam`.
pub fn f_distance(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, k_max: u32) -> Result<FDistance> {
    f_distance_with(nu1, nu2, k_max, LP_CAP)
}

pub fn f_distance_with(
    nu1: &DiscreteMeasure,
    nu2: &DiscreteMeasure,
    k_max: u32,
    cap: usize,
) -> Result<FDistance> {
    if k_max == 0 {
        return Err(GmtError::InvalidInput("k_max must be at least 1".into()));
    }
    let mut terms = Vec::with_capacity(k_max as usize);
    let mut subsample_error = 0.0;
    for k in 1..=k_max {
        let r = 2f64.powi(k as i32);
        let fr = fr_distance_with(nu1, nu2, r, cap)?;
        terms.push(fr.value / r);
        subsample_error += fr.subsample_error / r;
    }
    let (m1, m2) = (nu1.total_mass(), nu2.total_mass());
    let tail_bound = if (m1 - m2).abs() <= 1e-12 * m1.max(m2) {
        let origin = vec![0.0; nu1.dim()];
        let reach = nu1.radius_about(&origin).max(nu2.radius_about(&origin));
        2f64.powi(-(k_max as i32)) * m1 * 2.0 * reach
    } else {
        f64::INFINITY
    };
    Ok(FDistance {
        value: terms.iter().sum(),
        terms,
        tail_bound,
        subsample_error,
    })
}

/// `F` of the unit-density light cone in `R⁴`, `½∫₀² φ(t) t⁴ dt` with the
/// `(1, 2)` kernel; frozen from a midpoint rule on 2·10⁶ cells.
pub const CONE_FUNCTIONAL_BASELINE: f64 = 0.8514022145955775;

#[derive(Debug, Clone, Serialize)]
pub struct FlatFunctionalResult {
    pub value: f64,
    pub plane: Plane,
    pub kernel: KernelSpec,
}

/// `F(ν) = min_{P ∋ 0} ν(B(0,1))⁻¹ Σ w_i φ(|Z_i|) dist(Z_i, P)²` with the
/// `(1, 2)` kernel; the minimiser is spanned by the top `m` eigenvectors of
/// the weighted second-moment matrix.
pub fn flatness_functional(nu: &DiscreteMeasure, m: usize) -> Result<FlatFunctionalResult> {
    let d = nu.dim();
    if m == 0 || m >= d {
        return Err(GmtError::InvalidInput(format!(
            "plane dimension {m} invalid in R^{d}"
        )));
    }
    let origin = vec![0.0; d];
    nu.snap(&origin, 1e-6)
        .map_err(|_| GmtError::Domain("0 is not in the support".into()))?;
    let unit = nu.ball_mass(&origin, 1.0)?;
    if unit <= 0.0 {
        return Err(GmtError::Domain("no mass in B(0, 1)".into()));
    }
    let kernel = KernelSpec::functional();
    let mut mom = DMatrix::<f64>::zeros(d, d);
    nu.tree().for_each_in_ball(&origin, kernel.outer, |i, z| {
        let w = nu.weight(i) * kernel.phi(norm(z));
        for a in 0..d {
            for b in a..d {
                mom[(a, b)] += w * z[a] * z[b];
            }
        }
    });
    for a in 0..d {
        for b in 0..a {
            mom[(a, b)] = mom[(b, a)];
        }
    }
    let eig = jacobi_eigen(&mom);
    // ascending eigenvalues: the first d − m are the residual directions
    let value = eig.values[..d - m].iter().sum::<f64>().max(0.0) / unit;
    let basis: Vec<Vec<f64>> = (d - m..d)
        .rev()
        .map(|k| eig.vectors.column(k).iter().copied().collect())
        .collect();
    Ok(FlatFunctionalResult {
        value,
        plane: Plane::new(origin, basis)?,
        kernel,
    })
}

/// `F(ν_{0,R})` along the given radii.
pub fn tangent_flatness_trajectory(
    nu: &DiscreteMeasure,
    m: usize,
    radii: &[f64],
) -> Result<Vec<f64>> {
    let origin = vec![0.0; nu.dim()];
    radii
        .iter()
        .map(|&r| {
            let res = rescale(nu, None, &origin, r)?;
            Ok(flatness_functional(&res.measure, m)?.value)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct UniformityDefect {
    /// Geometric mean of `ν(B(X,r))/r^m`.
    pub c_fit: f64,
    pub sup_defect: f64,
}

pub fn uniformity_defect(
    nu: &DiscreteMeasure,
    centers: &[Vec<f64>],
    scales: &[f64],
    m: usize,
) -> Result<UniformityDefect> {
    if centers.is_empty() || scales.is_empty() {
        return Err(GmtError::InvalidInput("need centers and scales".into()));
    }
    let mut ratios = Vec::with_capacity(centers.len() * scales.len());
    for x in centers {
        for &r in scales {
            let mass = nu.ball_mass(x, r)?;
            if mass <= 0.0 {
                return Err(GmtError::Domain(format!("zero mass at radius {r}")));
            }
            ratios.push(mass / r.powi(m as i32));
        }
    }
    let c_fit = (ratios.iter().map(|v| v.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let sup_defect = ratios
        .iter()
        .map(|v| (v / c_fit - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(UniformityDefect { c_fit, sup_defect })
}

/// `max_r F₁(ν/ν(B(0,1)), T_{0,r}[ν]/ν(B(0,r)))` with the default atom cap.
pub fn conicality_defect(nu: &DiscreteMeasure, radii: &[f64]) -> Result<f64> {
    conicality_defect_with(nu, radii, LP_CAP)
}

pub fn conicality_defect_with(nu: &DiscreteMeasure, radii: &[f64], cap: usize) -> Result<f64> {
    let origin = vec![0.0; nu.dim()];
    let base = rescale(nu, None, &origin, 1.0)?.measure;
    let mut worst: f64 = 0.0;
    for &r in radii {
        let other = rescale(nu, None, &origin, r)?.measure;
        worst = worst.max(fr_distance_with(&base, &other, 1.0, cap)?.value);
    }
    Ok(worst)
}

/// Upper bound on `F₁` between two rescalings that share atoms index by
/// index: `Σ |w − w'| + w'·|x − x'|` over atoms landing in `B(0, 1)`.
pub fn matched_f1_bound(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    check_dim(a.len(), b.len())?;
    let mut acc = 0.0;
    for i in 0..a.len() {
        let (p, q) = (a.point(i), b.point(i));
        if norm(p) < 1.0 || norm(q) < 1.0 {
            acc += (a.weight(i) - b.weight(i)).abs() + b.weight(i) * dist(p, q);
        }
    }
    Ok(acc)
}

/// Blow up at `(X, r)` then at `(0, s)` versus directly at `(X, rs)`;
/// returns the matched `F₁` bound between the two results.
pub fn composition_defect(
    mu: &DiscreteMeasure,
    field: Option<&MetricField>,
    x: &[f64],
    r: f64,
    s: f64,
) -> Result<f64> {
    let first = rescale(mu, field, x, r)?;
    let origin = vec![0.0; mu.dim()];
    let twice = rescale(&first.measure, None, &origin, s)?;
    let direct = rescale(mu, field, x, r * s)?;
    matched_f1_bound(&twice.measure, &direct.measure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac(p: &[f64], w: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(p.to_vec(), p.len(), vec![w]).unwrap()
    }

    #[test]
    fn fr_of_unequal_diracs_at_origin() {
        let v = fr_distance(&dirac(&[0.0, 0.0], 1.0), &dirac(&[0.0, 0.0], 2.0), 1.0).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        assert!(v.gap.abs() < 1e-12);
    }

    #[test]
    fn fr_of_shifted_diracs() {
        for (x, want) in [(0.25, 0.25), (0.5, 0.5), (2.0, 1.0)] {
            let v = fr_distance(&dirac(&[0.0, 0.0], 1.0), &dirac(&[x, 0.0], 1.0), 1.0).unwrap();
            assert!((v.value - want).abs() < 1e-12, "{x}: {}", v.value);
            assert!(v.gap.abs() < 1e-12);
        }
    }

    #[test]
    fn fr_of_identical_measures_is_zero() {
        let a = DiscreteMeasure::new(vec![0.1, 0.2, -0.3, 0.4], 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(fr_distance(&a, &a, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn rescale_normalises_unit_ball() {
        let pts: Vec<f64> = (0..200)
            .flat_map(|i| [i as f64 * 0.01 - 1.0, 0.0])
            .collect();
        let mu = DiscreteMeasure::new(pts, 2, vec![0.01; 200]).unwrap();
        let r = rescale(&mu, None, &[0.0, 0.0], 0.3).unwrap();
        let m = r.measure.ball_mass(&[0.0, 0.0], 1.0).unwrap();
        assert!((m - 1.0).abs() < 1e-9);
    }

    #[test]
    fn functional_vanishes_on_a_line() {
        let pts: Vec<f64> = (0..401)
            .flat_map(|i| [i as f64 * 0.01 - 2.0, 0.0])
            .collect();
        let mu = DiscreteMeasure::new(pts, 2, vec![0.01; 401]).unwrap();
        let f = flatness_functional(&mu, 1).unwrap();
        assert!(f.value < 1e-12);
        assert!(f.plane.basis[0][0].abs() > 1.0 - 1e-12);
    }

    #[test]
    fn functional_needs_origin_on_support() {
        let mu = dirac(&[0.5, 0.5], 1.0);
        assert!(flatness_functional(&mu, 1).is_err());
    }
}
