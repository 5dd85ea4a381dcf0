//! Low-discrepancy grids and a derivative-free simplex minimiser.

use crate::linalg::unit_ball_volume;

const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u32) -> f64 {
    let b = b as u64;
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

/// `i`-th Halton point in `[0, 1)^dim` (no scrambling).
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len());
    (0..dim).map(|k| radical_inverse(i, PRIMES[k])).collect()
}

/// Fibonacci-lattice directions on the unit 2-sphere.
pub fn fibonacci_sphere(count: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let th = golden * i as f64;
            [rho * th.cos(), rho * th.sin(), z]
        })
        .collect()
}

/// Deterministic point set covering the closed unit `n`-ball: roughly three
/// quarters Halton interior points, the rest on the boundary sphere (where
/// sup-distances to a surface are usually attained).
pub fn unit_ball_grid(n: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(n >= 1 && count >= 4);
    let mut out = Vec::with_capacity(count);
    if n == 1 {
        out.push(vec![-1.0]);
        out.push(vec![1.0]);
        let m = count - 2;
        for k in 0..m {
            out.push(vec![-1.0 + (2.0 * k as f64 + 1.0) / m as f64]);
        }
        return out;
    }
    let shell = count / 4;
    let interior = count - shell;
    match n {
        2 => {
            for k in 0..shell {
                let t = 2.0 * std::f64::consts::PI * k as f64 / shell as f64;
                out.push(vec![t.cos(), t.sin()]);
            }
        }
        3 => {
            for p in fibonacci_sphere(shell) {
                out.push(p.to_vec());
            }
        }
        _ => {
            let mut i = 1u64;
            while out.len() < shell {
                let v: Vec<f64> = halton(i, n).iter().map(|u| 2.0 * u - 1.0).collect();
                i += 1;
                let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nv > 1e-3 && nv <= 1.0 {
                    out.push(v.iter().map(|x| x / nv).collect());
                }
            }
        }
    }
    let mut i = 1u64;
    let target = out.len() + interior;
    while out.len() < target {
        let v: Vec<f64> = halton(i, n).iter().map(|u| 2.0 * u - 1.0).collect();
        i += 1;
        if v.iter().map(|x| x * x).sum::<f64>() < 1.0 {
            out.push(v);
        }
    }
    out
}

/// Rough covering radius of an `m`-point interior grid in the unit `n`-ball.
pub fn grid_resolution(n: usize, m: usize) -> f64 {
    (unit_ball_volume(n) / m.max(1) as f64).powf(1.0 / n as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    pub initial_step: f64,
    /// Stop when the simplex value spread falls below this.
    pub f_tol: f64,
    /// Stop when every vertex is this close to the best one.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 200,
            initial_step: 0.25,
            f_tol: 1e-12,
            x_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½, shrink ½)
/// from an axis-aligned initial simplex.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let k = x0.len();
    if k == 0 {
        let v = f(x0);
        return NelderMeadResult {
            x: vec![],
            value: v,
            iterations: 0,
        };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..k {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let mut iters = 0;
    while iters < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[k].1;
        if (worst - best).abs() <= opts.f_tol {
            let spread = simplex[1..]
                .iter()
                .map(|(v, _)| {
                    v.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread <= opts.x_tol || (worst - best).abs() == 0.0 {
                break;
            }
        }
        iters += 1;
        let mut centroid = vec![0.0; k];
        for (v, _) in &simplex[..k] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / k as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[k].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[k - 1].1 {
            simplex[k] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[k].1 {
            let xc = along(0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < simplex[k].1.min(fr) {
            simplex[k] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (a, b) in v.iter_mut().zip(&x_best) {
                *a = b + 0.5 * (*a - b);
            }
            *fv = f(v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        iterations: iters,
    }
}
