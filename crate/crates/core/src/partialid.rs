//! Identified sets under item nonresponse.
//!
//! With response rate `p`, a marginal is only known to lie in
//! `{gamma in simplex : p m_k <= gamma_k <= p m_k + (1 - p)}` where `m` is
//! the respondents' distribution. The discrepancy over two such boxes
//! ranges over an interval `[d_low, d_up]`:
//!
//! - `d_low` is one LP in `(gamma, eta)` with the absolute CDF gaps split
//!   into positive and negative parts;
//! - `d_up` maximizes a convex function, so it is taken as the best of the
//!   `2^(K-1)` linear programs obtained by fixing the sign of every CDF gap.
//!
//! For each endpoint, the flows of couplings that attain it are bounded
//! cell by cell over `{pi : row sums in box_mu, column sums in box_nu,
//! cost = endpoint}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    check_k_supported, check_same_k, CellBoundsMatrix, Coupling, Interval, MarginalBox,
    ObservedSample, OrdinalDistribution,
};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::transport::{
    self, cell_ranges, discrepancy, min_cost_coupling, solve_optimal, CostSpec, COST_SLACK,
};

/// Flow threshold below which a cell counts as zero in interpretations.
pub const FLOW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Lower,
    Upper,
}

impl Endpoint {
    pub const BOTH: [Endpoint; 2] = [Endpoint::Lower, Endpoint::Upper];
}

/// The identified interval for the discrepancy and the marginal pairs that
/// attain each end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedInterval {
    pub d_low: f64,
    pub d_up: f64,
    pub witness_low: (OrdinalDistribution, OrdinalDistribution),
    pub witness_up: (OrdinalDistribution, OrdinalDistribution),
}

impl IdentifiedInterval {
    pub fn interval(&self) -> Interval {
        Interval { lo: self.d_low, hi: self.d_up }
    }

    pub fn value(&self, endpoint: Endpoint) -> f64 {
        match endpoint {
            Endpoint::Lower => self.d_low,
            Endpoint::Upper => self.d_up,
        }
    }

    pub fn witness(&self, endpoint: Endpoint) -> &(OrdinalDistribution, OrdinalDistribution) {
        match endpoint {
            Endpoint::Lower => &self.witness_low,
            Endpoint::Upper => &self.witness_up,
        }
    }
}

/// Per-cell flow bounds over the couplings attaining one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointCouplingBounds {
    pub endpoint: Endpoint,
    pub value: f64,
    pub bounds: CellBoundsMatrix,
    /// The monotone coupling of the endpoint's witness marginals; one member
    /// of the set, not a preferred one.
    pub representative: Coupling,
}

impl EndpointCouplingBounds {
    /// Cells (0-indexed) that every attaining configuration must use.
    pub fn forced_flows(&self) -> Vec<(usize, usize)> {
        self.cells_where(|c| c.lo > FLOW_TOL)
    }

    /// Cells (0-indexed) that no attaining configuration uses.
    pub fn unused_flows(&self) -> Vec<(usize, usize)> {
        self.cells_where(|c| c.hi <= FLOW_TOL)
    }

    /// A zero lower endpoint admits every coupling supported on the
    /// diagonal, which makes the lower-endpoint bounds uninformative.
    pub fn is_degenerate(&self) -> bool {
        self.endpoint == Endpoint::Lower && self.value <= FLOW_TOL
    }

    fn cells_where(&self, keep: impl Fn(&Interval) -> bool) -> Vec<(usize, usize)> {
        let k = self.bounds.k();
        (0..k * k)
            .filter(|idx| keep(&self.bounds.cells()[*idx]))
            .map(|idx| (idx / k, idx % k))
            .collect()
    }
}

/// The sharp box for a sample, with the response rate estimated from it.
///
/// An all-missing sample yields the vacuous box `[0, 1]^K`.
pub fn identified_set(s: &ObservedSample) -> MarginalBox {
    match s.observed_distribution() {
        Some(obs) => MarginalBox::from_observed(&obs, s.response_rate())
            .expect("a sample box always meets the simplex"),
        None => MarginalBox::vacuous(s.k()),
    }
}

/// The sharp box for a sample with a known response rate.
pub fn identified_set_with_rate(s: &ObservedSample, response_rate: f64) -> Result<MarginalBox> {
    if !(0.0..=1.0).contains(&response_rate) {
        return Err(Error::OutOfRange { value: response_rate, max: 1.0 });
    }
    match s.observed_distribution() {
        Some(obs) => MarginalBox::from_observed(&obs, response_rate),
        None if response_rate == 0.0 => Ok(MarginalBox::vacuous(s.k())),
        None => Err(Error::NoObservations),
    }
}

/// Bounds on `F(k)` at the thresholds `k = 1..K-1`.
pub fn cdf_bounds(b: &MarginalBox) -> Vec<Interval> {
    let slack = b.width();
    let mut acc = 0.0;
    b.lower()[..b.k() - 1]
        .iter()
        .map(|l| {
            acc += l;
            Interval { lo: acc, hi: acc + slack }.clamp_to(0.0, 1.0)
        })
        .collect()
}

fn check_boxes(box_mu: &MarginalBox, box_nu: &MarginalBox) -> Result<usize> {
    check_same_k(box_mu.k(), box_nu.k())?;
    check_k_supported(box_mu.k())?;
    for b in [box_mu, box_nu] {
        let lower_sum: f64 = b.lower().iter().sum();
        let upper_sum: f64 = b.upper().iter().sum();
        if lower_sum > 1.0 + crate::TOL || upper_sum < 1.0 - crate::TOL {
            return Err(Error::InfeasibleBox { lower_sum, upper_sum });
        }
    }
    Ok(box_mu.k())
}

fn to_distribution(values: &[f64]) -> Result<OrdinalDistribution> {
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    if (sum - 1.0).abs() > 1e-7 {
        return Err(Error::LpFailure(format!("witness mass {sum} is off the simplex")));
    }
    OrdinalDistribution::new(clipped.iter().map(|v| v / sum).collect())
}

/// Box bounds for `(gamma, eta)` followed by the two unit-mass rows.
fn pair_program_parts(
    box_mu: &MarginalBox,
    box_nu: &MarginalBox,
    n: usize,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let k = box_mu.k();
    let mut sum_gamma = vec![0.0; n];
    let mut sum_eta = vec![0.0; n];
    sum_gamma[..k].iter_mut().for_each(|v| *v = 1.0);
    sum_eta[k..2 * k].iter_mut().for_each(|v| *v = 1.0);
    let mut lower = box_mu.lower().to_vec();
    lower.extend_from_slice(box_nu.lower());
    let mut upper = box_mu.upper().to_vec();
    upper.extend_from_slice(box_nu.upper());
    (vec![sum_gamma, sum_eta], lower, upper)
}

/// `min D(gamma, eta)` over the boxes, with an attaining pair.
pub fn lower_endpoint(
    box_mu: &MarginalBox,
    box_nu: &MarginalBox,
) -> Result<(f64, (OrdinalDistribution, OrdinalDistribution))> {
    let k = check_boxes(box_mu, box_nu)?;
    let gaps = k - 1;
    // variables: gamma (K), eta (K), pos (K-1), neg (K-1) with
    // F_gamma(k) - F_eta(k) = pos_k - neg_k
    let n = 2 * k + 2 * gaps;
    let (mut a, mut lower, mut upper) = pair_program_parts(box_mu, box_nu, n);
    let mut b = vec![1.0, 1.0];
    for t in 0..gaps {
        let mut row = vec![0.0; n];
        for i in 0..=t {
            row[i] = 1.0;
            row[k + i] = -1.0;
        }
        row[2 * k + t] = -1.0;
        row[2 * k + gaps + t] = 1.0;
        a.push(row);
        b.push(0.0);
    }
    lower.extend(std::iter::repeat_n(0.0, 2 * gaps));
    upper.extend(std::iter::repeat_n(f64::INFINITY, 2 * gaps));
    let mut objective = vec![0.0; 2 * k];
    objective.extend(std::iter::repeat_n(1.0, 2 * gaps));
    let lp = LinearProgram::new(objective, a, b, lower, upper, Sense::Minimize)?;
    let sol = solve_optimal(&lp, "lower endpoint")?;
    let gamma = to_distribution(&sol.x[..k])?;
    let eta = to_distribution(&sol.x[k..2 * k])?;
    Ok((discrepancy(&gamma, &eta)?, (gamma, eta)))
}

/// Signs of the CDF gaps for pattern `index`: bit `t` set means `+1`.
fn sign_pattern(index: u64, gaps: usize) -> impl Iterator<Item = f64> {
    (0..gaps).map(move |t| if index >> t & 1 == 1 { 1.0 } else { -1.0 })
}

/// `max D(gamma, eta)` over the boxes, with an attaining pair.
///
/// Ties between sign patterns go to the lowest pattern index.
pub fn upper_endpoint(
    box_mu: &MarginalBox,
    box_nu: &MarginalBox,
) -> Result<(f64, (OrdinalDistribution, OrdinalDistribution))> {
    let k = check_boxes(box_mu, box_nu)?;
    let gaps = k - 1;
    let n = 2 * k;
    let (a, lower, upper) = pair_program_parts(box_mu, box_nu, n);
    let base = LinearProgram::new(vec![0.0; n], a, vec![1.0, 1.0], lower, upper, Sense::Maximize)?;

    let solve_pattern = |index: u64| -> Result<(f64, u64, Vec<f64>)> {
        // sum_t s_t (F_gamma(t) - F_eta(t)) = sum_i w_i (gamma_i - eta_i),
        // w_i = sum_{t >= i} s_t
        let signs: Vec<f64> = sign_pattern(index, gaps).collect();
        let mut weights = vec![0.0; k];
        for i in (0..gaps).rev() {
            weights[i] = weights[i + 1] + signs[i];
        }
        let mut objective = weights.clone();
        objective.extend(weights.iter().map(|w| -w));
        let lp = base.with_objective(objective, Sense::Maximize)?;
        let sol = solve_optimal(&lp, "upper endpoint")?;
        Ok((sol.objective_value, index, sol.x))
    };
    let better = |a: (f64, u64, Vec<f64>), b: (f64, u64, Vec<f64>)| {
        if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
            a
        } else {
            b
        }
    };
    let patterns = 1u64 << gaps;
    let best = (0..patterns)
        .into_par_iter()
        .map(solve_pattern)
        .try_reduce_with(|a, b| Ok(better(a, b)))
        .expect("at least one sign pattern")?;
    let gamma = to_distribution(&best.2[..k])?;
    let eta = to_distribution(&best.2[k..])?;
    Ok((discrepancy(&gamma, &eta)?, (gamma, eta)))
}

/// Both ends of the identified interval for the discrepancy.
pub fn discrepancy_endpoints(
    box_mu: &MarginalBox,
    box_nu: &MarginalBox,
) -> Result<IdentifiedInterval> {
    let (d_low, witness_low) = lower_endpoint(box_mu, box_nu)?;
    let (d_up, witness_up) = upper_endpoint(box_mu, box_nu)?;
    Ok(IdentifiedInterval { d_low, d_up: d_up.max(d_low), witness_low, witness_up })
}

/// The feasible set of couplings with row sums in `box_mu`, column sums in
/// `box_nu` and transport cost `value` (up to [`COST_SLACK`]).
///
/// Variables: `pi` (K^2, row-major), `gamma` (K), `eta` (K), cost `t`.
pub fn endpoint_coupling_program(
    box_mu: &MarginalBox,
    box_nu: &MarginalBox,
    value: f64,
) -> Result<LinearProgram> {
    let k = check_boxes(box_mu, box_nu)?;
    let cells = k * k;
    let n = cells + 2 * k + 1;
    let mut a = Vec::with_capacity(2 * k + 2);
    for i in 0..k {
        let mut row = vec![0.0; n];
        row[i * k..(i + 1) * k].iter_mut().for_each(|v| *v = 1.0);
        row[cells + i] = -1.0;
        a.push(row);
    }
    for j in 0..k {
        let mut row = vec![0.0; n];
        (0..k).for_each(|i| row[i * k + j] = 1.0);
        row[cells + k + j] = -1.0;
        a.push(row);
    }
    let mut unit = vec![0.0; n];
    unit[cells..cells + k].iter_mut().for_each(|v| *v = 1.0);
    a.push(unit);
    let mut cost_row = CostSpec::new(k).flat();
    cost_row.extend(std::iter::repeat_n(0.0, 2 * k));
    cost_row.push(-1.0);
    a.push(cost_row);
    let mut b = vec![0.0; 2 * k];
    b.push(1.0);
    b.push(0.0);

    let mut lower = vec![0.0; cells];
    let mut upper = vec![1.0; cells];
    lower.extend_from_slice(box_mu.lower());
    lower.extend_from_slice(box_nu.lower());
    upper.extend_from_slice(box_mu.upper());
    upper.extend_from_slice(box_nu.upper());
    lower.push((value - COST_SLACK).max(0.0));
    upper.push(value + COST_SLACK);
    LinearProgram::new(vec![0.0; n], a, b, lower, upper, Sense::Minimize)
}

/// Endpoint-conditioned flow bounds, given the identified interval already
/// computed on the same boxes.
pub fn endpoint_coupling_bounds_for(
    box_mu: &MarginalBox,
    box_nu: &MarginalBox,
    interval: &IdentifiedInterval,
    endpoint: Endpoint,
) -> Result<EndpointCouplingBounds> {
    let k = check_boxes(box_mu, box_nu)?;
    let value = interval.value(endpoint);
    let program = endpoint_coupling_program(box_mu, box_nu, value)?;
    if lp::solve(&program)?.status == LpStatus::Infeasible {
        return Err(Error::InfeasibleEndpoint { value });
    }
    let (bounds, _) = cell_ranges(&program, k, "endpoint coupling bounds")?;
    let (gamma, eta) = interval.witness(endpoint);
    let representative = min_cost_coupling(gamma, eta)?;
    Ok(EndpointCouplingBounds { endpoint, value, bounds, representative })
}

/// Endpoint-conditioned flow bounds for `endpoint` of the boxes' interval.
pub fn endpoint_coupling_bounds(
    box_mu: &MarginalBox,
    box_nu: &MarginalBox,
    endpoint: Endpoint,
) -> Result<EndpointCouplingBounds> {
    let interval = discrepancy_endpoints(box_mu, box_nu)?;
    endpoint_coupling_bounds_for(box_mu, box_nu, &interval, endpoint)
}

/// Point-identified special case: both boxes collapse to distributions.
pub fn point_identified(
    mu: &OrdinalDistribution,
    nu: &OrdinalDistribution,
) -> Result<IdentifiedInterval> {
    let d = transport::discrepancy(mu, nu)?;
    let pair = (mu.clone(), nu.clone());
    Ok(IdentifiedInterval { d_low: d, d_up: d, witness_low: pair.clone(), witness_up: pair })
}
