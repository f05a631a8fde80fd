//! Dense two-phase primal simplex for
//!
//! ```text
//! minimize / maximize  c·x
//! subject to           A x = b,   lower <= x <= upper
//! ```
//!
//! with bounds that may be infinite. Variables are shifted (and split when
//! free) onto `0 <= y <= u`, and nonbasic variables rest at either bound.
//! Pivoting uses Bland's rule throughout: the lowest-index eligible column
//! enters, and ratio-test ties leave by lowest basic index. Output is fully
//! deterministic for a given input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase-one residual above which a problem is declared infeasible.
pub const INFEASIBILITY_TOL: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const RATIO_TIE: f64 = 1e-12;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    eq_matrix: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
    var_lower: Vec<f64>,
    var_upper: Vec<f64>,
    sense: Sense,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        eq_matrix: Vec<Vec<f64>>,
        eq_rhs: Vec<f64>,
        var_lower: Vec<f64>,
        var_upper: Vec<f64>,
        sense: Sense,
    ) -> Result<Self> {
        let n = objective.len();
        let mismatch = |expected: usize, found: usize| Error::DimensionMismatch { expected, found };
        if eq_rhs.len() != eq_matrix.len() {
            return Err(mismatch(eq_matrix.len(), eq_rhs.len()));
        }
        if let Some(row) = eq_matrix.iter().find(|r| r.len() != n) {
            return Err(mismatch(n, row.len()));
        }
        if var_lower.len() != n {
            return Err(mismatch(n, var_lower.len()));
        }
        if var_upper.len() != n {
            return Err(mismatch(n, var_upper.len()));
        }
        if objective.iter().chain(eq_rhs.iter()).any(|v| !v.is_finite())
            || eq_matrix.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::LpFailure("non-finite coefficient".into()));
        }
        for (j, (l, u)) in var_lower.iter().zip(&var_upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::LpFailure(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        Ok(Self { objective, eq_matrix, eq_rhs, var_lower, var_upper, sense })
    }

    /// Nonnegative variables with no upper bound.
    pub fn nonnegative(
        objective: Vec<f64>,
        eq_matrix: Vec<Vec<f64>>,
        eq_rhs: Vec<f64>,
        sense: Sense,
    ) -> Result<Self> {
        let n = objective.len();
        Self::new(objective, eq_matrix, eq_rhs, vec![0.0; n], vec![f64::INFINITY; n], sense)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn eq_matrix(&self) -> &[Vec<f64>] {
        &self.eq_matrix
    }

    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }

    pub fn var_lower(&self) -> &[f64] {
        &self.var_lower
    }

    pub fn var_upper(&self) -> &[f64] {
        &self.var_upper
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Same constraints, different objective.
    pub fn with_objective(&self, objective: Vec<f64>, sense: Sense) -> Result<Self> {
        if objective.len() != self.num_vars() {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars(),
                found: objective.len(),
            });
        }
        Ok(Self { objective, sense, ..self.clone() })
    }

    /// Largest absolute equality residual of `x`.
    pub fn eq_residual(&self, x: &[f64]) -> f64 {
        self.eq_matrix
            .iter()
            .zip(&self.eq_rhs)
            .map(|(row, b)| (dot(row, x) - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn bound_violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.var_lower.iter().zip(&self.var_upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    /// Objective in the problem's own sense; NaN unless `Optimal`.
    pub objective_value: f64,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        Self { status, x: Vec::new(), objective_value: f64::NAN }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How an original variable maps onto internal columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + y[col]`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - y[col]`
    Reflected { col: usize, offset: f64 },
    /// `x = y[pos] - y[neg]`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `B^-1 A` over all columns (structural then artificial).
    rows: Vec<Vec<f64>>,
    /// Reduced costs of the current phase.
    reduced: Vec<f64>,
    basis: Vec<usize>,
    value: Vec<f64>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    pivots: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn set_costs(&mut self, cost: &[f64]) {
        let mut reduced = cost.to_vec();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (r, a) in reduced.iter_mut().zip(row) {
                    *r -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            reduced[b] = 0.0;
        }
        self.reduced = reduced;
    }

    fn entering(&self) -> Option<usize> {
        (0..self.reduced.len()).find(|&j| {
            if self.is_basic[j] || self.upper[j] <= 0.0 {
                return false;
            }
            let d = self.reduced[j];
            if self.at_upper[j] {
                d > COST_TOL
            } else {
                d < -COST_TOL
            }
        })
    }

    fn run(&mut self) -> Result<PhaseOutcome> {
        while let Some(j) = self.entering() {
            self.pivots += 1;
            if self.pivots > MAX_PIVOTS {
                return Err(Error::LpFailure("pivot limit exceeded".into()));
            }
            // +1: y_j increases from its lower bound; -1: decreases from upper.
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            let mut step = f64::INFINITY;
            let mut leave: Option<usize> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let alpha = dir * row[j];
                let b = self.basis[r];
                let limit = if alpha > PIVOT_TOL {
                    (self.value[b].max(0.0)) / alpha
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    (self.upper[b] - self.value[b]).max(0.0) / -alpha
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some(cur) => {
                        limit < step - RATIO_TIE
                            || (limit <= step + RATIO_TIE && b < self.basis[cur])
                    }
                };
                if better {
                    step = step.min(limit);
                    leave = Some(r);
                }
            }

            let flip = self.upper[j];
            if flip.is_finite() && flip <= step + RATIO_TIE {
                // Bound flip: y_j moves to its opposite bound, basis unchanged.
                for (row, &b) in self.rows.iter().zip(&self.basis) {
                    self.value[b] -= dir * flip * row[j];
                }
                self.at_upper[j] = !self.at_upper[j];
                self.value[j] = if self.at_upper[j] { flip } else { 0.0 };
                continue;
            }

            let Some(r) = leave else {
                return Ok(PhaseOutcome::Unbounded);
            };

            for (row, &b) in self.rows.iter().zip(&self.basis) {
                self.value[b] -= dir * step * row[j];
            }
            self.value[j] += dir * step;

            let out = self.basis[r];
            let went_down = dir * self.rows[r][j] > 0.0;
            self.at_upper[out] = !went_down;
            self.value[out] = if went_down { 0.0 } else { self.upper[out] };
            self.is_basic[out] = false;
            self.is_basic[j] = true;
            self.at_upper[j] = false;
            self.basis[r] = j;
            self.pivot(r, j);
        }
        Ok(PhaseOutcome::Optimal)
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.rows[r][j];
        for a in self.rows[r].iter_mut() {
            *a /= p;
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (a, pr) in row.iter_mut().zip(&pivot_row) {
                    *a -= f * pr;
                }
                row[j] = 0.0;
            }
        }
        let f = self.reduced[j];
        if f != 0.0 {
            for (a, pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *a -= f * pr;
            }
            self.reduced[j] = 0.0;
        }
        self.rows[r] = pivot_row;
    }
}

/// Solves `lp`. Infeasibility and unboundedness are reported as statuses;
/// `Err` is reserved for malformed programs and pivot-limit faults.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();
    let m = lp.num_constraints();
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Map variables onto nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut col_upper = Vec::new();
    let mut col_cost = Vec::new();
    let mut col_source: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.var_lower[j], lp.var_upper[j]);
        let c = sign * lp.objective[j];
        let mut push = |coef: f64, ub: f64| {
            col_source.push((j, coef));
            col_upper.push(ub);
            col_cost.push(coef * c);
            col_source.len() - 1
        };
        let map = if l.is_finite() {
            VarMap::Shifted { col: push(1.0, u - l), offset: l }
        } else if u.is_finite() {
            VarMap::Reflected { col: push(-1.0, f64::INFINITY), offset: u }
        } else {
            let pos = push(1.0, f64::INFINITY);
            let neg = push(-1.0, f64::INFINITY);
            VarMap::Split { pos, neg }
        };
        maps.push(map);
    }
    let ns = col_source.len();

    // Shifted right-hand side, then flip rows so it is nonnegative.
    let mut rhs = lp.eq_rhs.clone();
    for (row, b) in lp.eq_matrix.iter().zip(rhs.iter_mut()) {
        for (j, map) in maps.iter().enumerate() {
            match *map {
                VarMap::Shifted { offset, .. } | VarMap::Reflected { offset, .. } => {
                    *b -= row[j] * offset
                }
                VarMap::Split { .. } => {}
            }
        }
    }
    let row_sign: Vec<f64> = rhs.iter().map(|b| if *b < 0.0 { -1.0 } else { 1.0 }).collect();
    let total = ns + m;
    let mut rows = Vec::with_capacity(m);
    for (i, row) in lp.eq_matrix.iter().enumerate() {
        let mut t = vec![0.0; total];
        for (c, &(src, coef)) in col_source.iter().enumerate() {
            t[c] = row_sign[i] * coef * row[src];
        }
        t[ns + i] = 1.0;
        rows.push(t);
    }
    let structural: Vec<Vec<f64>> = rows.iter().map(|r| r[..ns].to_vec()).collect();
    let rhs: Vec<f64> = rhs.iter().zip(&row_sign).map(|(b, s)| b * s).collect();

    let mut upper = col_upper.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut value = vec![0.0; total];
    value[ns..].copy_from_slice(&rhs);
    let mut is_basic = vec![false; total];
    is_basic[ns..].iter_mut().for_each(|b| *b = true);

    let mut tab = Tableau {
        rows,
        reduced: Vec::new(),
        basis: (ns..total).collect(),
        value,
        upper,
        at_upper: vec![false; total],
        is_basic,
        pivots: 0,
    };

    // Phase one: drive the artificial variables to zero.
    let mut phase_one = vec![0.0; total];
    phase_one[ns..].iter_mut().for_each(|c| *c = 1.0);
    tab.set_costs(&phase_one);
    tab.run()?;
    let residual: f64 = tab.value[ns..].iter().map(|v| v.abs()).sum();
    if residual > INFEASIBILITY_TOL {
        return Ok(LpSolution::without_point(LpStatus::Infeasible));
    }
    // Artificials are pinned at zero from here on; any still basic sit on
    // redundant rows or at degenerate zero level.
    for a in ns..total {
        tab.upper[a] = 0.0;
        if !tab.is_basic[a] {
            tab.value[a] = 0.0;
            tab.at_upper[a] = false;
        }
    }

    let mut phase_two = col_cost.clone();
    phase_two.extend(std::iter::repeat_n(0.0, m));
    tab.set_costs(&phase_two);
    if let PhaseOutcome::Unbounded = tab.run()? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    // Recompute basic values from the nonbasic ones using B^-1, which sits
    // in the artificial columns, to shed accumulated update error.
    let mut reduced_rhs = rhs.clone();
    for (i, row) in structural.iter().enumerate() {
        for (c, a) in row.iter().enumerate() {
            if !tab.is_basic[c] && tab.value[c] != 0.0 {
                reduced_rhs[i] -= a * tab.value[c];
            }
        }
    }
    for (r, row) in tab.rows.iter().enumerate() {
        let b = tab.basis[r];
        let v = dot(&row[ns..], &reduced_rhs);
        tab.value[b] = if b < ns { v.clamp(0.0, tab.upper[b]) } else { v };
    }

    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shifted { col, offset } => offset + tab.value[col],
            VarMap::Reflected { col, offset } => offset - tab.value[col],
            VarMap::Split { pos, neg } => tab.value[pos] - tab.value[neg],
        })
        .map(|v| if v == 0.0 { 0.0 } else { v })
        .collect();
    let x: Vec<f64> = x
        .into_iter()
        .zip(lp.var_lower.iter().zip(&lp.var_upper))
        .map(|(v, (l, u))| v.clamp(*l, *u))
        .collect();
    let objective_value = lp.evaluate(&x);
    Ok(LpSolution { status: LpStatus::Optimal, x, objective_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: f64 = f64::INFINITY;

    fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=4usize.min(n));
        // a feasible point makes most instances feasible
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0..=3) as f64).collect();
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(-3..=3) as f64).collect())
            .collect();
        let b = a.iter().map(|r| dot(r, &x0)).collect();
        let c = (0..n).map(|_| rng.random_range(-5..=5) as f64).collect();
        let lower = (0..n).map(|j| x0[j] - rng.random_range(0..=2) as f64).collect();
        let upper = (0..n).map(|j| x0[j] + rng.random_range(0..=3) as f64).collect();
        let sense = if rng.random_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
        LinearProgram::new(c, a, b, lower, upper, sense).unwrap()
    }

    #[test]
    fn forced_by_bounds() {
        let lp = LinearProgram::new(
            vec![1.0, 0.0],
            vec![vec![1.0, 1.0]],
            vec![1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            Sense::Minimize,
        )
        .unwrap();
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective_value.abs() < 1e-12);
        assert!((s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = LinearProgram::new(
            vec![1.0, 1.0],
            vec![vec![1.0, 1.0]],
            vec![3.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            Sense::Minimize,
        )
        .unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);

        let lp = LinearProgram::nonnegative(
            vec![1.0, 0.0],
            vec![vec![1.0, -1.0]],
            vec![0.0],
            Sense::Maximize,
        )
        .unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_reflected_variables() {
        // min x0 - x1 s.t. x0 + x1 = 0, x0 free, x1 <= 2
        let lp = LinearProgram::new(
            vec![1.0, -1.0],
            vec![vec![1.0, 1.0]],
            vec![0.0],
            vec![-INF, -INF],
            vec![INF, 2.0],
            Sense::Minimize,
        )
        .unwrap();
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 4.0).abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn dimension_mismatch_is_a_fault() {
        let err = LinearProgram::new(
            vec![1.0, 0.0],
            vec![vec![1.0]],
            vec![1.0],
            vec![0.0; 2],
            vec![1.0; 2],
            Sense::Minimize,
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let err = LinearProgram::new(vec![1.0], vec![], vec![1.0], vec![0.0], vec![1.0], Sense::Minimize);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn redundant_rows() {
        // the same constraint twice
        let lp = LinearProgram::nonnegative(
            vec![1.0, 2.0],
            vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![1.0, 2.0],
            Sense::Maximize,
        )
        .unwrap();
        let s = solve(&lp).unwrap();
        assert!((s.objective_value - 2.0).abs() < 1e-12);
    }

    /// Beale's instance cycles under the textbook largest-coefficient rule.
    #[test]
    fn beale_cycling_instance_terminates() {
        // min -3/4 x4 + 150 x5 - 1/50 x6 + 6 x7
        //  x1 + 1/4 x4 - 60 x5 - 1/25 x6 + 9 x7 = 0
        //  x2 + 1/2 x4 - 90 x5 - 1/50 x6 + 3 x7 = 0
        //  x3 + x6 = 1
        let lp = LinearProgram::nonnegative(
            vec![0.0, 0.0, 0.0, -0.75, 150.0, -0.02, 6.0],
            vec![
                vec![1.0, 0.0, 0.0, 0.25, -60.0, -0.04, 9.0],
                vec![0.0, 1.0, 0.0, 0.5, -90.0, -0.02, 3.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
            ],
            vec![0.0, 0.0, 1.0],
            Sense::Minimize,
        )
        .unwrap();
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 0.05).abs() < 1e-10, "{}", s.objective_value);
    }

    proptest! {
        #[test]
        fn optimal_solutions_are_feasible_and_deterministic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lp = random_lp(&mut rng);
            let a = solve(&lp).unwrap();
            let b = solve(&lp).unwrap();
            prop_assert_eq!(&a.x, &b.x);
            if a.is_optimal() {
                prop_assert!(lp.eq_residual(&a.x) <= 1e-8);
                prop_assert!(lp.bound_violation(&a.x) <= 1e-10);
                prop_assert!((lp.evaluate(&a.x) - a.objective_value).abs() <= 1e-9);
            }
        }
    }
}
