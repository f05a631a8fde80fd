//! Point-identified transport objects under the ordinal cost `|i - j|`.
//!
//! The discrepancy is computed in closed form from CDFs; the monotone
//! (northwest-corner) coupling attains it. Everything that needs a range
//! over a set of couplings goes through [`crate::lp`].

use rayon::prelude::*;

use crate::domain::{
    cdf, check_same_k, CellBoundsMatrix, Coupling, Interval, OrdinalDistribution, TOL,
};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};

/// Slack on cost-equality constraints, absorbing solver rounding.
pub const COST_SLACK: f64 = 1e-9;

/// The ordinal threshold-crossing cost on `K` categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostSpec {
    k: usize,
}

impl CostSpec {
    pub fn new(k: usize) -> Self {
        Self { k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        i.abs_diff(j) as f64
    }

    /// Row-major cost vector over the `K x K` cells.
    pub fn flat(&self) -> Vec<f64> {
        (0..self.k * self.k)
            .map(|idx| self.cost(idx / self.k, idx % self.k))
            .collect()
    }
}

/// `sum_{k<K} |F_mu(k) - F_nu(k)|`.
pub fn discrepancy(mu: &OrdinalDistribution, nu: &OrdinalDistribution) -> Result<f64> {
    check_same_k(mu.k(), nu.k())?;
    let (fm, fn_) = (cdf(mu), cdf(nu));
    Ok(fm
        .thresholds()
        .iter()
        .zip(fn_.thresholds())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// The monotone coupling: sweep both marginals in category order and move
/// `min(remaining row, remaining column)` at each step.
pub fn min_cost_coupling(mu: &OrdinalDistribution, nu: &OrdinalDistribution) -> Result<Coupling> {
    check_same_k(mu.k(), nu.k())?;
    let k = mu.k();
    let mut row_left = mu.probs().to_vec();
    let mut col_left = nu.probs().to_vec();
    let mut mass = vec![0.0; k * k];
    let (mut i, mut j) = (0, 0);
    while i < k && j < k {
        let moved = row_left[i].min(col_left[j]);
        mass[i * k + j] += moved;
        row_left[i] -= moved;
        col_left[j] -= moved;
        // Advance whichever side is exhausted; on a tie advance both, except
        // at the last row/column where leftover rounding must still land.
        let row_done = row_left[i] <= 1e-15;
        let col_done = col_left[j] <= 1e-15;
        match (row_done, col_done) {
            (true, true) => {
                i += 1;
                j += 1;
            }
            (true, false) => i += 1,
            (false, true) => j += 1,
            (false, false) => unreachable!("one side is exhausted after a transfer"),
        }
    }
    Coupling::from_flat(k, mass)
}

/// `sum_ij |i - j| * mass_ij`.
pub fn transport_cost(c: &Coupling) -> f64 {
    flat_transport_cost(c.k(), c.as_flat())
}

/// Transport cost of an arbitrary square matrix, without requiring it to be
/// a valid coupling.
pub fn matrix_transport_cost(rows: &[Vec<f64>]) -> f64 {
    rows.iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, m)| i.abs_diff(j) as f64 * m))
        .sum()
}

fn flat_transport_cost(k: usize, mass: &[f64]) -> f64 {
    mass.iter()
        .enumerate()
        .map(|(idx, m)| (idx / k).abs_diff(idx % k) as f64 * m)
        .sum()
}

/// Equality rows fixing the row sums to `mu` and column sums to `nu` over
/// the first `K^2` variables of a program with `n` variables.
fn marginal_rows(k: usize, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows = (0..k)
        .map(|i| {
            let mut r = vec![0.0; n];
            r[i * k..(i + 1) * k].iter_mut().for_each(|v| *v = 1.0);
            r
        })
        .collect();
    let cols = (0..k)
        .map(|j| {
            let mut r = vec![0.0; n];
            (0..k).for_each(|i| r[i * k + j] = 1.0);
            r
        })
        .collect();
    (rows, cols)
}

/// The transportation polytope `Pi(mu, nu)` as an LP with objective `cost`.
pub fn transport_lp(
    mu: &OrdinalDistribution,
    nu: &OrdinalDistribution,
    sense: Sense,
) -> Result<LinearProgram> {
    check_same_k(mu.k(), nu.k())?;
    let k = mu.k();
    let n = k * k;
    let (rows, cols) = marginal_rows(k, n);
    let mut a = rows;
    a.extend(cols);
    let mut b = mu.probs().to_vec();
    b.extend_from_slice(nu.probs());
    LinearProgram::new(
        CostSpec::new(k).flat(),
        a,
        b,
        vec![0.0; n],
        vec![1.0; n],
        sense,
    )
}

pub(crate) fn solve_optimal(lp: &LinearProgram, what: &str) -> Result<lp::LpSolution> {
    let sol = lp::solve(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        status => Err(Error::LpFailure(format!("{what}: solver reported {status:?}"))),
    }
}

/// Minimum and maximum of each of the first `K^2` variables over the
/// feasible set of `base`, solved as `2 K^2` independent programs.
///
/// Returns the bounds and the witness points (min then max per cell,
/// row-major).
pub(crate) fn cell_ranges(
    base: &LinearProgram,
    k: usize,
    what: &str,
) -> Result<(CellBoundsMatrix, Vec<Vec<f64>>)> {
    let n = base.num_vars();
    let solved: Vec<Result<(f64, Vec<f64>)>> = (0..2 * k * k)
        .into_par_iter()
        .map(|job| {
            let cell = job / 2;
            let sense = if job % 2 == 0 { Sense::Minimize } else { Sense::Maximize };
            let mut objective = vec![0.0; n];
            objective[cell] = 1.0;
            let lp = base.with_objective(objective, sense)?;
            let sol = solve_optimal(&lp, what)?;
            Ok((sol.objective_value, sol.x))
        })
        .collect();
    let mut cells = Vec::with_capacity(k * k);
    let mut witnesses = Vec::with_capacity(2 * k * k);
    for pair in solved.chunks(2) {
        let (lo, w_lo) = pair[0].clone()?;
        let (hi, w_hi) = pair[1].clone()?;
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(lo, 1.0);
        cells.push(Interval { lo, hi });
        witnesses.push(w_lo);
        witnesses.push(w_hi);
    }
    Ok((CellBoundsMatrix::new(k, cells)?, witnesses))
}

/// Per-cell `[min, max]` of `pi_ij` over all cost-minimal couplings of
/// `(mu, nu)`, together with the `2 K^2` witness couplings (min then max
/// for each cell, row-major).
pub fn optimal_cell_bounds_with_witnesses(
    mu: &OrdinalDistribution,
    nu: &OrdinalDistribution,
) -> Result<(CellBoundsMatrix, Vec<Coupling>)> {
    let d = discrepancy(mu, nu)?;
    let k = mu.k();
    let n = k * k;
    // variables: pi (K^2), then the realised cost t in [D - slack, D + slack]
    let (rows, cols) = marginal_rows(k, n + 1);
    let mut a = rows;
    a.extend(cols);
    let mut cost_row = CostSpec::new(k).flat();
    cost_row.push(-1.0);
    a.push(cost_row);
    let mut b = mu.probs().to_vec();
    b.extend_from_slice(nu.probs());
    b.push(0.0);
    let mut lower = vec![0.0; n];
    let mut upper = vec![1.0; n];
    lower.push((d - COST_SLACK).max(0.0));
    upper.push(d + COST_SLACK);
    let base = LinearProgram::new(vec![0.0; n + 1], a, b, lower, upper, Sense::Minimize)?;

    let (bounds, witnesses) = cell_ranges(&base, k, "optimal cell bounds")?;
    let witnesses = witnesses
        .into_iter()
        .map(|x| Coupling::from_flat(k, x[..n].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((bounds, witnesses))
}

/// Per-cell `[min, max]` of `pi_ij` over all cost-minimal couplings.
pub fn optimal_cell_bounds(
    mu: &OrdinalDistribution,
    nu: &OrdinalDistribution,
) -> Result<CellBoundsMatrix> {
    optimal_cell_bounds_with_witnesses(mu, nu).map(|(b, _)| b)
}

/// Largest transport cost over `Pi(mu, nu)` and a coupling attaining it.
pub fn max_mobility(mu: &OrdinalDistribution, nu: &OrdinalDistribution) -> Result<(f64, Coupling)> {
    let lp = transport_lp(mu, nu, Sense::Maximize)?;
    let sol = solve_optimal(&lp, "maximal mobility")?;
    let coupling = Coupling::from_flat(mu.k(), sol.x)?;
    Ok((transport_cost(&coupling), coupling))
}

/// Fréchet bounds `[max(0, mu_i + nu_j - 1), min(mu_i, nu_j)]` per cell.
pub fn frechet_cell_bounds(
    mu: &OrdinalDistribution,
    nu: &OrdinalDistribution,
) -> Result<CellBoundsMatrix> {
    check_same_k(mu.k(), nu.k())?;
    let cells = mu
        .probs()
        .iter()
        .flat_map(|a| {
            nu.probs().iter().map(move |b| {
                let hi = a.min(*b);
                Interval { lo: (a + b - 1.0).max(0.0).min(hi), hi }
            })
        })
        .collect();
    CellBoundsMatrix::new(mu.k(), cells)
}

/// `value / (K - 1)`, the share of the largest possible discrepancy.
pub fn normalized_discrepancy(value: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::TooFewCategories(k));
    }
    let max = (k - 1) as f64;
    if !(value >= -TOL && value <= max + TOL) {
        return Err(Error::OutOfRange { value, max });
    }
    Ok((value / max).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::make_distribution;
    use proptest::prelude::*;

    fn mu() -> OrdinalDistribution {
        make_distribution(&[0.4, 0.3, 0.2, 0.1]).unwrap()
    }

    fn nu() -> OrdinalDistribution {
        make_distribution(&[0.2, 0.3, 0.3, 0.2]).unwrap()
    }

    fn figure1_right() -> Coupling {
        Coupling::from_rows(&[
            vec![0.2, 0.0, 0.2, 0.0],
            vec![0.0, 0.3, 0.0, 0.0],
            vec![0.0, 0.0, 0.1, 0.1],
            vec![0.0, 0.0, 0.0, 0.1],
        ])
        .unwrap()
    }

    #[test]
    fn cost_spec() {
        let c = CostSpec::new(4);
        for i in 0..4 {
            assert_eq!(c.cost(i, i), 0.0);
            for j in 0..4 {
                assert_eq!(c.cost(i, j), c.cost(j, i));
                if i <= j {
                    // additive along the line
                    assert_eq!(c.cost(0, j), c.cost(0, i) + c.cost(i, j));
                }
            }
        }
    }

    #[test]
    fn discrepancy_examples() {
        assert!((discrepancy(&mu(), &nu()).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(discrepancy(&mu(), &mu()).unwrap(), 0.0);
        let a = OrdinalDistribution::point_mass(6, 0).unwrap();
        let b = OrdinalDistribution::point_mass(6, 5).unwrap();
        assert_eq!(discrepancy(&a, &b).unwrap(), 5.0);
        let c = OrdinalDistribution::point_mass(5, 0).unwrap();
        assert!(matches!(discrepancy(&a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn min_cost_coupling_reproduces_the_monotone_table() {
        let c = min_cost_coupling(&mu(), &nu()).unwrap();
        let expected = [
            [0.2, 0.2, 0.0, 0.0],
            [0.0, 0.1, 0.2, 0.0],
            [0.0, 0.0, 0.1, 0.1],
            [0.0, 0.0, 0.0, 0.1],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((c.get(i, j) - v).abs() < 1e-12, "({i},{j})");
            }
        }
        assert!((transport_cost(&c) - 0.5).abs() < 1e-12);

        let c = min_cost_coupling(&mu(), &mu()).unwrap();
        assert_eq!(c, Coupling::diagonal(&mu()));
        assert_eq!(transport_cost(&c), 0.0);
    }

    #[test]
    fn transport_cost_examples() {
        assert!((transport_cost(&figure1_right()) - 0.5).abs() < 1e-12);
        assert_eq!(transport_cost(&Coupling::diagonal(&nu())), 0.0);
    }

    #[test]
    fn optimal_cell_bounds_examples() {
        let b = optimal_cell_bounds(&mu(), &nu()).unwrap();
        // (1,3): the two reference couplings put 0 and 0.2 there
        assert!(b.get(0, 2).contains(0.0, 1e-9) && b.get(0, 2).contains(0.2, 1e-9));
        let cell41 = b.get(3, 0);
        assert!(cell41.lo.abs() < 1e-9 && cell41.hi.abs() < 1e-9, "{cell41:?}");

        let b = optimal_cell_bounds(&mu(), &mu()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { mu().probs()[i] } else { 0.0 };
                let cell = b.get(i, j);
                assert!((cell.lo - want).abs() < 1e-8 && (cell.hi - want).abs() < 1e-8);
            }
        }
    }

    /// Grid oracle: all couplings of (mu, nu) on a 0.05 lattice with cost
    /// 0.5 never move mass from category 4 to category 1.
    #[test]
    fn cell_41_grid_oracle() {
        let step = 0.05;
        let units = |v: f64| (v / step).round() as i64;
        let mu_u: Vec<i64> = mu().probs().iter().map(|v| units(*v)).collect();
        let nu_u: Vec<i64> = nu().probs().iter().map(|v| units(*v)).collect();
        let mut found_any = false;
        let mut max41 = 0;
        // enumerate the 3x3 free block; the last row/column are implied
        let mut m = [[0i64; 4]; 4];
        fn rec(
            idx: usize,
            m: &mut [[i64; 4]; 4],
            mu: &[i64],
            nu: &[i64],
            found: &mut bool,
            max41: &mut i64,
        ) {
            if idx == 9 {
                let mut full = *m;
                for i in 0..3 {
                    full[i][3] = mu[i] - full[i][..3].iter().sum::<i64>();
                }
                for j in 0..4 {
                    full[3][j] = nu[j] - (0..3).map(|i| full[i][j]).sum::<i64>();
                }
                if full.iter().flatten().any(|v| *v < 0) {
                    return;
                }
                if full[3].iter().sum::<i64>() != mu[3] {
                    return;
                }
                let cost: i64 = (0..4)
                    .flat_map(|i| (0..4).map(move |j| (i, j)))
                    .map(|(i, j)| (i as i64 - j as i64).abs() * full[i][j])
                    .sum();
                if cost == 10 {
                    *found = true;
                    *max41 = (*max41).max(full[3][0]);
                }
                return;
            }
            let (i, j) = (idx / 3, idx % 3);
            for v in 0..=mu[i].min(nu[j]) {
                m[i][j] = v;
                rec(idx + 1, m, mu, nu, found, max41);
            }
            m[i][j] = 0;
        }
        rec(0, &mut m, &mu_u, &nu_u, &mut found_any, &mut max41);
        assert!(found_any);
        assert_eq!(max41, 0);
    }

    #[test]
    fn max_mobility_examples() {
        let (value, c) = max_mobility(&mu(), &nu()).unwrap();
        // Exhaustive check on the 0.1 lattice is in the integration tests;
        // here: the optimum of the transportation LP.
        assert!((value - 1.7).abs() < 1e-9, "{value}");
        assert!(c.check_marginals(&mu(), &nu()).is_ok());

        let p = OrdinalDistribution::point_mass(4, 2).unwrap();
        let (value, c) = max_mobility(&p, &p).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(c, Coupling::diagonal(&p));
    }

    #[test]
    fn figure3_matrix_cost() {
        // Not a coupling of (mu, nu): it carries total mass 1.2.
        let m = vec![
            vec![0.0, 0.0, 0.2, 0.2],
            vec![0.0, 0.0, 0.1, 0.2],
            vec![0.1, 0.2, 0.0, 0.0],
            vec![0.1, 0.1, 0.0, 0.0],
        ];
        assert!((matrix_transport_cost(&m) - 2.4).abs() < 1e-12);
        assert!(Coupling::from_rows(&m).is_err());
        let rows: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
        assert!((rows[2] - 0.3).abs() < 1e-12 && (rows[3] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn frechet_examples() {
        let f = frechet_cell_bounds(&mu(), &nu()).unwrap();
        assert!((f.get(0, 1).hi - 0.3).abs() < 1e-12);
        assert!((f.get(2, 0).hi - 0.2).abs() < 1e-12);
        let a = OrdinalDistribution::point_mass(3, 1).unwrap();
        let b = OrdinalDistribution::point_mass(3, 2).unwrap();
        let f = frechet_cell_bounds(&a, &b).unwrap();
        assert_eq!(f.get(1, 2), Interval { lo: 1.0, hi: 1.0 });
    }

    #[test]
    fn normalization() {
        assert!((normalized_discrepancy(0.125, 4).unwrap() - 0.125 / 3.0).abs() < 1e-15);
        assert!((normalized_discrepancy(0.316, 4).unwrap() - 0.316 / 3.0).abs() < 1e-15);
        assert_eq!(normalized_discrepancy(0.0, 7).unwrap(), 0.0);
        assert!(matches!(normalized_discrepancy(3.5, 4), Err(Error::OutOfRange { .. })));
        assert!(matches!(normalized_discrepancy(-0.1, 4), Err(Error::OutOfRange { .. })));
    }

    fn dist(k: usize) -> impl Strategy<Value = OrdinalDistribution> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-3).then(|| make_distribution(&w.iter().map(|x| x / s).collect::<Vec<_>>()).unwrap())
        })
    }

    fn pair() -> impl Strategy<Value = (OrdinalDistribution, OrdinalDistribution)> {
        (2usize..=8).prop_flat_map(|k| (dist(k), dist(k)))
    }

    fn triple() -> impl Strategy<Value = [OrdinalDistribution; 3]> {
        (2usize..=8).prop_flat_map(|k| [dist(k), dist(k), dist(k)])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_coupling_is_optimal((a, b) in pair()) {
            let c = min_cost_coupling(&a, &b).unwrap();
            prop_assert!(c.check_marginals(&a, &b).is_ok());
            let d = discrepancy(&a, &b).unwrap();
            prop_assert!((transport_cost(&c) - d).abs() < 1e-9);
            let lp = solve_optimal(&transport_lp(&a, &b, Sense::Minimize).unwrap(), "t").unwrap();
            prop_assert!((lp.objective_value - d).abs() < 1e-8);
        }

        #[test]
        fn discrepancy_is_a_metric([a, b, c] in triple()) {
            let ab = discrepancy(&a, &b).unwrap();
            prop_assert!((ab - discrepancy(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert!(ab <= discrepancy(&a, &c).unwrap() + discrepancy(&c, &b).unwrap() + 1e-12);
            prop_assert_eq!(discrepancy(&a, &a).unwrap(), 0.0);
            let differs = a.probs().iter().zip(b.probs()).any(|(x, y)| (x - y).abs() > 1e-6);
            prop_assert_eq!(ab > 1e-12, differs);
        }

        #[test]
        fn couplings_respect_frechet_and_cell_bounds((a, b) in (2usize..=4).prop_flat_map(|k| (dist(k), dist(k)))) {
            let f = frechet_cell_bounds(&a, &b).unwrap();
            let mono = min_cost_coupling(&a, &b).unwrap();
            prop_assert!(f.contains_coupling(&mono, 1e-9));
            let (value, maxc) = max_mobility(&a, &b).unwrap();
            prop_assert!(f.contains_coupling(&maxc, 1e-9));
            prop_assert!(value + 1e-9 >= discrepancy(&a, &b).unwrap());
            prop_assert!(value <= (a.k() - 1) as f64 + 1e-9);
            let (bounds, witnesses) = optimal_cell_bounds_with_witnesses(&a, &b).unwrap();
            prop_assert!(bounds.contains_coupling(&mono, 1e-8));
            for w in &witnesses {
                prop_assert!(f.contains_coupling(w, 1e-8));
            }
        }
    }
}
