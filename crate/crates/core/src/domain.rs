//! Domain types shared by every module: ordinal distributions, their step
//! CDFs, couplings, observed samples with nonresponse, marginal boxes and
//! interval-valued cell matrices.
//!
//! All types validate on construction and are immutable afterwards.
//! Categories are 0-indexed here; user-facing output is 1-indexed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for simplex membership and mass-balance checks.
pub const TOL: f64 = 1e-9;

/// Entries above `-NEG_TOL` are treated as rounding noise and clamped to zero.
pub const NEG_TOL: f64 = 1e-12;

/// Largest supported number of categories.
pub const MAX_CATEGORIES: usize = 32;

/// A probability vector over `K >= 2` ordered categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OrdinalDistribution {
    probs: Vec<f64>,
}

impl OrdinalDistribution {
    /// Validates `probs` as a point of the simplex.
    ///
    /// Entries in `(-1e-12, 0)` are clamped to zero and a sum within `1e-9`
    /// of one is renormalized; anything else is rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::TooFewCategories(probs.len()));
        }
        let mut probs = probs;
        for (category, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < -NEG_TOL {
                return Err(Error::NegativeMass { category, value: *p });
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > TOL {
            return Err(Error::NotNormalized { sum });
        }
        // Drift at the level of summation rounding is left alone so that
        // revalidating a valid distribution is the identity.
        if (sum - 1.0).abs() > 4.0 * probs.len() as f64 * f64::EPSILON {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    /// Point mass at `category` (0-indexed).
    pub fn point_mass(k: usize, category: usize) -> Result<Self> {
        if category >= k {
            return Err(Error::DimensionMismatch { expected: k, found: category + 1 });
        }
        let mut probs = vec![0.0; k];
        probs[category] = 1.0;
        Self::new(probs)
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cdf(&self) -> StepCdf {
        cdf(self)
    }
}

impl TryFrom<Vec<f64>> for OrdinalDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<OrdinalDistribution> for Vec<f64> {
    fn from(d: OrdinalDistribution) -> Self {
        d.probs
    }
}

/// Validated constructor, see [`OrdinalDistribution::new`].
pub fn make_distribution(probs: &[f64]) -> Result<OrdinalDistribution> {
    OrdinalDistribution::new(probs.to_vec())
}

/// Cumulative shares `F(k) = sum_{i <= k} p_i`, one value per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCdf {
    values: Vec<f64>,
}

impl StepCdf {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values at the interior thresholds `1..K-1`.
    pub fn thresholds(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }
}

pub fn cdf(d: &OrdinalDistribution) -> StepCdf {
    let mut acc = 0.0;
    let mut values: Vec<f64> = d
        .probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    // The terminal value is 1 by construction; pin it so rounding never leaks.
    if let Some(last) = values.last_mut() {
        *last = 1.0;
    }
    StepCdf { values }
}

/// A `K x K` joint mass matrix; entry `(i, j)` is mass moved from origin
/// category `i` to destination category `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Coupling {
    k: usize,
    mass: Vec<f64>,
}

impl Coupling {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::TooFewCategories(k));
        }
        let mut mass = Vec::with_capacity(k * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch { expected: k, found: row.len() });
            }
            mass.extend_from_slice(row);
        }
        Self::from_flat(k, mass)
    }

    /// Row-major constructor.
    pub fn from_flat(k: usize, mut mass: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewCategories(k));
        }
        if mass.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, found: mass.len() });
        }
        for (idx, m) in mass.iter_mut().enumerate() {
            if !m.is_finite() || *m < -NEG_TOL {
                return Err(Error::InvalidCoupling(format!(
                    "negative mass {} at cell ({}, {})",
                    m,
                    idx / k + 1,
                    idx % k + 1
                )));
            }
            if *m < 0.0 {
                *m = 0.0;
            }
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > TOL {
            return Err(Error::InvalidCoupling(format!("total mass {total}, expected 1")));
        }
        Ok(Self { k, mass })
    }

    /// Diagonal coupling `diag(d)`.
    pub fn diagonal(d: &OrdinalDistribution) -> Self {
        let k = d.k();
        let mut mass = vec![0.0; k * k];
        for (i, p) in d.probs().iter().enumerate() {
            mass[i * k + i] = *p;
        }
        Self { k, mass }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.k + j]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.mass
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.mass.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.k)
            .map(|j| (0..self.k).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Checks that rows reproduce `source` and columns reproduce `target`.
    pub fn check_marginals(
        &self,
        source: &OrdinalDistribution,
        target: &OrdinalDistribution,
    ) -> Result<()> {
        for d in [source, target] {
            if d.k() != self.k {
                return Err(Error::DimensionMismatch { expected: self.k, found: d.k() });
            }
        }
        let check = |sums: Vec<f64>, want: &[f64], what: &str| {
            for (idx, (s, w)) in sums.iter().zip(want).enumerate() {
                if (s - w).abs() > TOL {
                    return Err(Error::InvalidCoupling(format!(
                        "{what} {} sums to {s}, marginal is {w}",
                        idx + 1
                    )));
                }
            }
            Ok(())
        };
        check(self.row_sums(), source.probs(), "row")?;
        check(self.col_sums(), target.probs(), "column")
    }
}

impl TryFrom<Vec<Vec<f64>>> for Coupling {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<Coupling> for Vec<Vec<f64>> {
    fn from(c: Coupling) -> Self {
        c.rows()
    }
}

/// Origin (row-sum) and destination (column-sum) marginals of a coupling.
pub fn marginals(c: &Coupling) -> (OrdinalDistribution, OrdinalDistribution) {
    let rows = OrdinalDistribution::new(c.row_sums().into_iter().map(|v| v.max(0.0)).collect())
        .expect("rows of a valid coupling lie on the simplex");
    let cols = OrdinalDistribution::new(c.col_sums().into_iter().map(|v| v.max(0.0)).collect())
        .expect("columns of a valid coupling lie on the simplex");
    (rows, cols)
}

/// Category counts plus a nonresponse count from one cross-section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SampleRepr", into = "SampleRepr")]
pub struct ObservedSample {
    counts: Vec<u64>,
    missing: u64,
}

#[derive(Serialize, Deserialize)]
struct SampleRepr {
    counts: Vec<u64>,
    missing: u64,
    n: u64,
}

impl ObservedSample {
    pub fn new(counts: Vec<u64>, missing: u64) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::TooFewCategories(counts.len()));
        }
        let s = Self { counts, missing };
        if s.n() == 0 {
            return Err(Error::InvalidSample("sample size must be at least 1".into()));
        }
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn missing(&self) -> u64 {
        self.missing
    }

    pub fn observed(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn n(&self) -> u64 {
        self.observed() + self.missing
    }

    /// Empirical response rate `(n - missing) / n`.
    pub fn response_rate(&self) -> f64 {
        self.observed() as f64 / self.n() as f64
    }

    /// Empirical distribution among respondents, `None` if nobody responded.
    pub fn observed_distribution(&self) -> Option<OrdinalDistribution> {
        let observed = self.observed();
        if observed == 0 {
            return None;
        }
        let probs = self.counts.iter().map(|&c| c as f64 / observed as f64).collect();
        Some(OrdinalDistribution::new(probs).expect("count shares are normalized"))
    }
}

impl TryFrom<SampleRepr> for ObservedSample {
    type Error = Error;

    fn try_from(r: SampleRepr) -> Result<Self> {
        let s = ObservedSample::new(r.counts, r.missing)?;
        if s.n() != r.n {
            return Err(Error::InvalidSample(format!(
                "counts and missing add to {}, but n = {}",
                s.n(),
                r.n
            )));
        }
        Ok(s)
    }
}

impl From<ObservedSample> for SampleRepr {
    fn from(s: ObservedSample) -> Self {
        let n = s.n();
        SampleRepr { counts: s.counts, missing: s.missing, n }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn contains_interval(&self, other: &Interval, tol: f64) -> bool {
        self.contains(other.lo, tol) && self.contains(other.hi, tol)
    }

    pub fn clamp_to(&self, min: f64, max: f64) -> Self {
        let lo = self.lo.clamp(min, max);
        let hi = self.hi.clamp(min, max).max(lo);
        Self { lo, hi }
    }
}

/// Per-category bounds `lower_k <= gamma_k <= upper_k` that, intersected
/// with the simplex, form the identified set of a marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl MarginalBox {
    /// Validates a box. The width `upper_k - lower_k` must be the same for
    /// every category (it is the nonresponse share).
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let k = lower.len();
        if k < 2 {
            return Err(Error::TooFewCategories(k));
        }
        if upper.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: upper.len() });
        }
        for (idx, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || *l < -TOL || *u > 1.0 + TOL || l > u {
                return Err(Error::InvalidBox(format!(
                    "category {} has bounds [{l}, {u}]",
                    idx + 1
                )));
            }
        }
        let width = upper[0] - lower[0];
        if lower.iter().zip(&upper).any(|(l, u)| ((u - l) - width).abs() > TOL) {
            return Err(Error::InvalidBox("box width differs across categories".into()));
        }
        let lower_sum: f64 = lower.iter().sum();
        let upper_sum: f64 = upper.iter().sum();
        if lower_sum > 1.0 + TOL || upper_sum < 1.0 - TOL {
            return Err(Error::InfeasibleBox { lower_sum, upper_sum });
        }
        Ok(Self { lower, upper })
    }

    /// The box `[p * obs_k, p * obs_k + (1 - p)]`.
    pub fn from_observed(observed: &OrdinalDistribution, response_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&response_rate) {
            return Err(Error::OutOfRange { value: response_rate, max: 1.0 });
        }
        let slack = 1.0 - response_rate;
        let lower: Vec<f64> = observed.probs().iter().map(|m| response_rate * m).collect();
        let upper = lower.iter().map(|l| (l + slack).min(1.0)).collect();
        Self::new(lower, upper)
    }

    /// `[0, 1]` in every category.
    pub fn vacuous(k: usize) -> Self {
        Self { lower: vec![0.0; k], upper: vec![1.0; k] }
    }

    pub fn k(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Common width of the per-category intervals (the missing share).
    pub fn width(&self) -> f64 {
        self.upper[0] - self.lower[0]
    }

    pub fn contains(&self, d: &OrdinalDistribution, tol: f64) -> bool {
        d.k() == self.k()
            && d
                .probs()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (l, u))| *p >= l - tol && *p <= u + tol)
    }
}

/// A `K x K` matrix of intervals, one per coupling cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBoundsMatrix {
    k: usize,
    cells: Vec<Interval>,
}

impl CellBoundsMatrix {
    /// Row-major constructor. Every cell must satisfy `0 <= lo <= hi <= 1`.
    pub fn new(k: usize, cells: Vec<Interval>) -> Result<Self> {
        if cells.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, found: cells.len() });
        }
        if let Some(bad) = cells
            .iter()
            .find(|c| !(c.lo >= 0.0 && c.lo <= c.hi && c.hi <= 1.0))
        {
            return Err(Error::InvalidInterval { lo: bad.lo, hi: bad.hi });
        }
        Ok(Self { k, cells })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> Interval {
        self.cells[i * self.k + j]
    }

    pub fn cells(&self) -> &[Interval] {
        &self.cells
    }

    pub fn lower_matrix(&self) -> Vec<Vec<f64>> {
        self.cells.chunks(self.k).map(|r| r.iter().map(|c| c.lo).collect()).collect()
    }

    pub fn upper_matrix(&self) -> Vec<Vec<f64>> {
        self.cells.chunks(self.k).map(|r| r.iter().map(|c| c.hi).collect()).collect()
    }

    /// True if every entry of `mass` (row-major) lies in its cell.
    pub fn contains_flat(&self, mass: &[f64], tol: f64) -> bool {
        mass.len() == self.cells.len()
            && self.cells.iter().zip(mass).all(|(c, m)| c.contains(*m, tol))
    }

    pub fn contains_coupling(&self, c: &Coupling, tol: f64) -> bool {
        c.k() == self.k && self.contains_flat(c.as_flat(), tol)
    }

    /// Cellwise containment of another bounds matrix.
    pub fn contains_bounds(&self, other: &CellBoundsMatrix, tol: f64) -> bool {
        self.k == other.k
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.contains_interval(b, tol))
    }
}

pub(crate) fn check_same_k(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_k_supported(k: usize) -> Result<()> {
    if k > MAX_CATEGORIES {
        return Err(Error::KTooLarge { k, max: MAX_CATEGORIES });
    }
    Ok(())
}
