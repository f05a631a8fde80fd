//! Brute-force oracles, independent of the simplex solver.
#![allow(dead_code, clippy::needless_range_loop)]

use ordinal_transport::lp::{LinearProgram, Sense};
use rand::Rng;

/// Vertices of the transportation polytope `Pi(mu, nu)`: every choice of
/// `2K - 1` support cells whose (row, column) system has a unique
/// nonnegative solution.
pub fn transport_vertices(mu: &[f64], nu: &[f64]) -> Vec<Vec<f64>> {
    let k = mu.len();
    let cells = k * k;
    let basis = 2 * k - 1;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::with_capacity(basis);
    combinations(cells, basis, 0, &mut chosen, &mut |support| {
        if let Some(x) = solve_support(k, support, mu, nu) {
            if !out.iter().any(|v| v.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12)) {
                out.push(x);
            }
        }
    });
    out
}

fn combinations(n: usize, r: usize, start: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if chosen.len() == r {
        f(chosen);
        return;
    }
    for i in start..n {
        if n - i < r - chosen.len() {
            break;
        }
        chosen.push(i);
        combinations(n, r, i + 1, chosen, f);
        chosen.pop();
    }
}

fn solve_support(k: usize, support: &[usize], mu: &[f64], nu: &[f64]) -> Option<Vec<f64>> {
    let r = support.len();
    // 2K equations, r unknowns
    let mut aug: Vec<Vec<f64>> = (0..2 * k)
        .map(|e| {
            let mut row: Vec<f64> = support
                .iter()
                .map(|&c| {
                    let (i, j) = (c / k, c % k);
                    if (e < k && i == e) || (e >= k && j == e - k) { 1.0 } else { 0.0 }
                })
                .collect();
            row.push(if e < k { mu[e] } else { nu[e - k] });
            row
        })
        .collect();
    let m = aug.len();
    let mut prow = 0;
    for col in 0..r {
        let p = (prow..m).max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))?;
        if aug[p][col].abs() < 1e-12 {
            return None; // singular: not a basis
        }
        aug.swap(prow, p);
        let pv = aug[prow][col];
        for v in aug[prow].iter_mut() {
            *v /= pv;
        }
        for q in 0..m {
            if q != prow {
                let f = aug[q][col];
                if f != 0.0 {
                    for c in 0..=r {
                        aug[q][c] -= f * aug[prow][c];
                    }
                }
            }
        }
        prow += 1;
    }
    if (prow..m).any(|q| aug[q][r].abs() > 1e-10) {
        return None;
    }
    let mut x = vec![0.0; k * k];
    for (idx, &c) in support.iter().enumerate() {
        let v = aug[idx][r];
        if v < -1e-12 {
            return None;
        }
        x[c] = v.max(0.0);
    }
    Some(x)
}

pub fn cost(k: usize, x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(c, m)| (c / k).abs_diff(c % k) as f64 * m).sum()
}

pub fn cdf_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut fa, mut fb, mut d) = (0.0, 0.0, 0.0);
    for i in 0..a.len() - 1 {
        fa += a[i];
        fb += b[i];
        d += (fa - fb).abs();
    }
    d
}

/// Optimal vertices (min-cost) of `Pi(mu, nu)`.
pub fn optimal_vertices(mu: &[f64], nu: &[f64]) -> Vec<Vec<f64>> {
    let k = mu.len();
    let verts = transport_vertices(mu, nu);
    let best = verts.iter().map(|v| cost(k, v)).fold(f64::INFINITY, f64::min);
    verts.into_iter().filter(|v| cost(k, v) <= best + 1e-10).collect()
}

/// All points of `{gamma : lower <= gamma <= lower + width, sum = 1}` on
/// the integer lattice (units of `1 / scale`), for K = 3.
pub fn box_lattice_k3(lower: &[i64; 3], width: i64, scale: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for a in lower[0]..=lower[0] + width {
        for b in lower[1]..=lower[1] + width {
            let c = scale - a - b;
            if c >= lower[2] && c <= lower[2] + width {
                out.push([a, b, c]);
            }
        }
    }
    out
}

pub struct GridEndpoints {
    pub d_low: f64,
    pub d_up: f64,
    pub low_pairs: Vec<([f64; 3], [f64; 3])>,
    pub up_pairs: Vec<([f64; 3], [f64; 3])>,
}

/// Grid search of `min / max D` over two K = 3 lattice boxes.
pub fn grid_endpoints_k3(
    lower_mu: &[i64; 3],
    width_mu: i64,
    lower_nu: &[i64; 3],
    width_nu: i64,
    scale: i64,
) -> GridEndpoints {
    let gs = box_lattice_k3(lower_mu, width_mu, scale);
    let es = box_lattice_k3(lower_nu, width_nu, scale);
    let dist = |g: &[i64; 3], e: &[i64; 3]| (g[0] - e[0]).abs() + (g[0] + g[1] - e[0] - e[1]).abs();
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for g in &gs {
        for e in &es {
            let d = dist(g, e);
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    let to_f = |v: &[i64; 3]| v.map(|x| x as f64 / scale as f64);
    let mut low_pairs = Vec::new();
    let mut up_pairs = Vec::new();
    for g in &gs {
        for e in &es {
            let d = dist(g, e);
            if d == lo {
                low_pairs.push((to_f(g), to_f(e)));
            }
            if d == hi {
                up_pairs.push((to_f(g), to_f(e)));
            }
        }
    }
    GridEndpoints {
        d_low: lo as f64 / scale as f64,
        d_up: hi as f64 / scale as f64,
        low_pairs,
        up_pairs,
    }
}

/// Random point of the simplex (normalized uniforms).
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        if s > 1e-6 {
            return w.iter().map(|x| x / s).collect();
        }
    }
}

/// A random coupling with the given marginals: a random positive matrix
/// scaled by iterative proportional fitting. `None` if IPF fails to reach
/// the marginals within `1e-10`.
pub fn random_coupling_ipf<R: Rng>(rng: &mut R, mu: &[f64], nu: &[f64]) -> Option<Vec<f64>> {
    let k = mu.len();
    let mut m: Vec<f64> = (0..k * k).map(|_| rng.random::<f64>() + 1e-3).collect();
    for _ in 0..5000 {
        for i in 0..k {
            let s: f64 = m[i * k..(i + 1) * k].iter().sum();
            if s > 0.0 {
                m[i * k..(i + 1) * k].iter_mut().for_each(|v| *v *= mu[i] / s);
            }
        }
        for j in 0..k {
            let s: f64 = (0..k).map(|i| m[i * k + j]).sum();
            if s > 0.0 {
                (0..k).for_each(|i| m[i * k + j] *= nu[j] / s);
            }
        }
        let row_err = (0..k)
            .map(|i| (m[i * k..(i + 1) * k].iter().sum::<f64>() - mu[i]).abs())
            .fold(0.0, f64::max);
        if row_err < 1e-12 {
            return Some(m);
        }
    }
    None
}

/// Brute-force optimum over basic solutions: every choice of `m`
/// columns with the rest at a finite bound, solved by Gaussian
/// elimination. Independent of the simplex code path.
pub fn lp_enumerate_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let m = lp.num_constraints();
    let mut best: Option<f64> = None;
    let better = |a: f64, b: f64| match lp.sense() {
        Sense::Minimize => a < b,
        Sense::Maximize => a > b,
    };
    // choose each var's status: 0 = at lower, 1 = at upper, 2 = basic
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut status = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            status.push(c % 3);
            c /= 3;
        }
        let basic: Vec<usize> = (0..n).filter(|&j| status[j] == 2).collect();
        if basic.len() > m {
            continue;
        }
        let mut x = vec![0.0; n];
        let mut ok = true;
        for j in 0..n {
            match status[j] {
                0 if lp.var_lower()[j].is_finite() => x[j] = lp.var_lower()[j],
                1 if lp.var_upper()[j].is_finite() => x[j] = lp.var_upper()[j],
                2 => {}
                _ => ok = false,
            }
        }
        if !ok {
            continue;
        }
        // least-squares-free solve: A_B x_B = b - A_N x_N, square via
        // Gaussian elimination on the m x |B| system (must be consistent).
        let mut aug: Vec<Vec<f64>> = lp
            .eq_matrix()
            .iter()
            .zip(lp.eq_rhs())
            .map(|(row, b)| {
                let mut r: Vec<f64> = basic.iter().map(|&j| row[j]).collect();
                let rest: f64 = (0..n).filter(|j| status[*j] != 2).map(|j| row[j] * x[j]).sum();
                r.push(b - rest);
                r
            })
            .collect();
        let nb = basic.len();
        let mut piv_row = 0;
        let mut pivcols = Vec::new();
        for col in 0..nb {
            let Some(p) = (piv_row..m).max_by(|&a, &b| {
                aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap()
            }) else {
                break;
            };
            if aug[p][col].abs() < 1e-10 {
                ok = false;
                break;
            }
            aug.swap(piv_row, p);
            let pv = aug[piv_row][col];
            for v in aug[piv_row].iter_mut() {
                *v /= pv;
            }
            for r in 0..m {
                if r != piv_row {
                    let f = aug[r][col];
                    for c2 in 0..=nb {
                        aug[r][c2] -= f * aug[piv_row][c2];
                    }
                }
            }
            pivcols.push(col);
            piv_row += 1;
        }
        if !ok {
            continue;
        }
        if (piv_row..m).any(|r| aug[r][nb].abs() > 1e-9) {
            continue;
        }
        for (r, &col) in pivcols.iter().enumerate() {
            x[basic[col]] = aug[r][nb];
        }
        if lp.bound_violation(&x) > 1e-9 || lp.eq_residual(&x) > 1e-9 {
            continue;
        }
        let v = lp.evaluate(&x);
        if best.is_none_or(|b| better(v, b)) {
            best = Some(v);
        }
    }
    best
}

/// Small random bounded LP (n <= 6, m <= 4) built around an integer
/// feasible point, so most instances are feasible.
pub fn random_lp<R: Rng>(rng: &mut R) -> LinearProgram {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=4usize.min(n));
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0..=3) as f64).collect();
    let a: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-3..=3) as f64).collect())
        .collect();
    let b = a.iter().map(|r| r.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
    let c = (0..n).map(|_| rng.random_range(-5..=5) as f64).collect();
    let lower = (0..n).map(|j| x0[j] - rng.random_range(0..=2) as f64).collect();
    let upper = (0..n).map(|j| x0[j] + rng.random_range(0..=3) as f64).collect();
    let sense = if rng.random_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    LinearProgram::new(c, a, b, lower, upper, sense).unwrap()
}
