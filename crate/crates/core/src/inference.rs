//! Bootstrap confidence sets for the identified interval and for the
//! endpoint-conditioned flow bounds.
//!
//! Each replication resamples both cross-sections (respondents and
//! nonrespondents together), rebuilds the boxes and recomputes every bound.
//! A bound's confidence set widens the plug-in interval on both sides by a
//! quantile of the largest one-sided deviation
//! `T = max(plugin_lo - boot_lo, boot_hi - plugin_hi)`.
//!
//! Replication `b` draws from its own generator seeded with `seed ^ b`, so
//! results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{check_same_k, CellBoundsMatrix, Interval, MarginalBox, ObservedSample};
use crate::error::{Error, Result};
use crate::partialid::{
    discrepancy_endpoints, endpoint_coupling_bounds_for, identified_set, identified_set_with_rate,
    Endpoint, EndpointCouplingBounds, IdentifiedInterval,
};

/// Attempts per replication before an internal fault is propagated.
const MAX_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Known response rate of the source sample; estimated when `None`.
    #[serde(default)]
    pub source_rate: Option<f64>,
    /// Known response rate of the target sample; estimated when `None`.
    #[serde(default)]
    pub target_rate: Option<f64>,
}

impl BootstrapConfig {
    pub fn new(replications: usize, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = Self { replications, alpha, seed, source_rate: None, target_rate: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_rates(mut self, source: Option<f64>, target: Option<f64>) -> Result<Self> {
        self.source_rate = source;
        self.target_rate = target;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("at least one replication is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} is not in (0, 1)", self.alpha)));
        }
        for rate in [self.source_rate, self.target_rate].into_iter().flatten() {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidConfig(format!("response rate {rate} is not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A value per endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerEndpoint<T> {
    pub lower: T,
    pub upper: T,
}

impl<T> PerEndpoint<T> {
    pub fn get(&self, endpoint: Endpoint) -> &T {
        match endpoint {
            Endpoint::Lower => &self.lower,
            Endpoint::Upper => &self.upper,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerEndpoint<U> {
        PerEndpoint { lower: f(&self.lower), upper: f(&self.upper) }
    }
}

/// Resampled endpoint values of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub d_low: f64,
    pub d_up: f64,
    /// Attempts discarded because of an internal solver fault.
    pub retries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub config: BootstrapConfig,
    pub point: IdentifiedInterval,
    pub point_cells: PerEndpoint<CellBoundsMatrix>,
    pub critical_value_d: f64,
    pub ci_d: Interval,
    pub cell_critical_values: PerEndpoint<Vec<f64>>,
    pub cell_cis: PerEndpoint<CellBoundsMatrix>,
    pub critical_value_simultaneous: f64,
    pub simultaneous_cis: PerEndpoint<CellBoundsMatrix>,
    pub replication_log: Vec<ReplicationRecord>,
}

/// Draws `n` units with replacement from the sample's `K + 1` cells
/// (categories plus nonresponse), via sequential conditional binomials.
pub fn resample<R: Rng + ?Sized>(s: &ObservedSample, rng: &mut R) -> ObservedSample {
    let n = s.n();
    let mut left = n;
    let mut mass_left = n;
    let mut counts = Vec::with_capacity(s.k());
    for &c in s.counts().iter().chain(std::iter::once(&s.missing())) {
        let draw = if left == 0 || c == 0 {
            0
        } else if c == mass_left {
            left
        } else {
            let p = c as f64 / mass_left as f64;
            Binomial::new(left, p).expect("probability in [0, 1]").sample(rng)
        };
        counts.push(draw);
        left -= draw;
        mass_left -= c;
    }
    let missing = counts.pop().expect("missing cell");
    ObservedSample::new(counts, missing).expect("resample keeps n")
}

fn boxes(
    source: &ObservedSample,
    target: &ObservedSample,
    cfg: &BootstrapConfig,
) -> Result<(MarginalBox, MarginalBox)> {
    check_same_k(source.k(), target.k())?;
    let make = |s: &ObservedSample, rate: Option<f64>| match rate {
        Some(p) => identified_set_with_rate(s, p),
        None => Ok(identified_set(s)),
    };
    Ok((make(source, cfg.source_rate)?, make(target, cfg.target_rate)?))
}

struct Estimates {
    interval: IdentifiedInterval,
    cells: Option<PerEndpoint<EndpointCouplingBounds>>,
}

fn estimate(
    source: &ObservedSample,
    target: &ObservedSample,
    cfg: &BootstrapConfig,
    with_cells: bool,
) -> Result<Estimates> {
    let (bm, bn) = boxes(source, target, cfg)?;
    let interval = discrepancy_endpoints(&bm, &bn)?;
    let cells = if with_cells {
        Some(PerEndpoint {
            lower: endpoint_coupling_bounds_for(&bm, &bn, &interval, Endpoint::Lower)?,
            upper: endpoint_coupling_bounds_for(&bm, &bn, &interval, Endpoint::Upper)?,
        })
    } else {
        None
    };
    Ok(Estimates { interval, cells })
}

/// Seed of replication `b` on attempt `attempt` (0 for the first try).
pub fn replication_seed(seed: u64, b: usize, attempt: u64) -> u64 {
    seed ^ (b as u64) ^ attempt.rotate_right(16)
}

fn replicate(
    source: &ObservedSample,
    target: &ObservedSample,
    cfg: &BootstrapConfig,
    with_cells: bool,
) -> Result<Vec<(ReplicationRecord, Estimates)>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|b| {
            let mut attempt = 0;
            loop {
                let seed = replication_seed(cfg.seed, b, attempt);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rs = resample(source, &mut rng);
                let rt = resample(target, &mut rng);
                match estimate(&rs, &rt, cfg, with_cells) {
                    Ok(est) => {
                        let record = ReplicationRecord {
                            replication: b,
                            seed,
                            d_low: est.interval.d_low,
                            d_up: est.interval.d_up,
                            retries: attempt,
                        };
                        return Ok((record, est));
                    }
                    Err(e) if e.is_internal() && attempt + 1 < MAX_ATTEMPTS => attempt += 1,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect()
}

/// The `ceil((1 - alpha) B)`-th order statistic, floored at zero so that a
/// confidence set never shrinks below the plug-in bounds.
pub fn critical_value(stats: &[f64], alpha: f64) -> f64 {
    assert!(!stats.is_empty(), "no bootstrap statistics");
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let rank = (((1.0 - alpha) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[rank - 1].max(0.0)
}

fn deviation(plugin: &Interval, boot: &Interval) -> f64 {
    (plugin.lo - boot.lo).max(boot.hi - plugin.hi)
}

fn widen(plugin: &Interval, c: f64, max: f64) -> Interval {
    Interval { lo: plugin.lo - c, hi: plugin.hi + c }.clamp_to(0.0, max)
}

fn max_discrepancy(s: &ObservedSample) -> f64 {
    (s.k() - 1) as f64
}

/// Plug-in identified interval and its bootstrap confidence set.
pub fn confidence_set_d(
    source: &ObservedSample,
    target: &ObservedSample,
    cfg: &BootstrapConfig,
) -> Result<(IdentifiedInterval, Interval)> {
    cfg.validate()?;
    let point = estimate(source, target, cfg, false)?.interval;
    let reps = replicate(source, target, cfg, false)?;
    let stats: Vec<f64> =
        reps.iter().map(|(_, e)| deviation(&point.interval(), &e.interval.interval())).collect();
    let c = critical_value(&stats, cfg.alpha);
    Ok((point.clone(), widen(&point.interval(), c, max_discrepancy(source))))
}

/// Per-cell deviations `T_ij` of every replication for one endpoint.
fn cell_deviations(
    plugin: &CellBoundsMatrix,
    reps: &[(ReplicationRecord, Estimates)],
    endpoint: Endpoint,
) -> Vec<Vec<f64>> {
    reps.iter()
        .map(|(_, e)| {
            let boot = &e.cells.as_ref().expect("cells were requested").get(endpoint).bounds;
            plugin.cells().iter().zip(boot.cells()).map(|(p, q)| deviation(p, q)).collect()
        })
        .collect()
}

fn per_cell_cis(
    plugin: &CellBoundsMatrix,
    deviations: &[Vec<f64>],
    alpha: f64,
) -> Result<(CellBoundsMatrix, Vec<f64>)> {
    let cells = plugin.cells().len();
    let critical: Vec<f64> = (0..cells)
        .map(|idx| {
            let column: Vec<f64> = deviations.iter().map(|row| row[idx]).collect();
            critical_value(&column, alpha)
        })
        .collect();
    let cis = plugin
        .cells()
        .iter()
        .zip(&critical)
        .map(|(p, c)| widen(p, *c, 1.0))
        .collect();
    Ok((CellBoundsMatrix::new(plugin.k(), cis)?, critical))
}

/// Per-cell confidence intervals for one endpoint's flow bounds.
pub fn confidence_cell_bounds(
    source: &ObservedSample,
    target: &ObservedSample,
    cfg: &BootstrapConfig,
    endpoint: Endpoint,
) -> Result<CellBoundsMatrix> {
    Ok(bootstrap(source, target, cfg)?.cell_cis.get(endpoint).clone())
}

/// Confidence intervals covering every cell of both endpoints jointly.
pub fn simultaneous_cell_bounds(
    source: &ObservedSample,
    target: &ObservedSample,
    cfg: &BootstrapConfig,
) -> Result<PerEndpoint<CellBoundsMatrix>> {
    Ok(bootstrap(source, target, cfg)?.simultaneous_cis)
}

/// Runs the full bootstrap once and assembles every confidence set.
pub fn bootstrap(
    source: &ObservedSample,
    target: &ObservedSample,
    cfg: &BootstrapConfig,
) -> Result<InferenceReport> {
    cfg.validate()?;
    let point = estimate(source, target, cfg, true)?;
    let point_cells = point.cells.expect("cells were requested");
    let interval = point.interval;
    let reps = replicate(source, target, cfg, true)?;

    let stats_d: Vec<f64> =
        reps.iter().map(|(_, e)| deviation(&interval.interval(), &e.interval.interval())).collect();
    let critical_value_d = critical_value(&stats_d, cfg.alpha);
    let ci_d = widen(&interval.interval(), critical_value_d, max_discrepancy(source));

    let deviations = PerEndpoint {
        lower: cell_deviations(&point_cells.lower.bounds, &reps, Endpoint::Lower),
        upper: cell_deviations(&point_cells.upper.bounds, &reps, Endpoint::Upper),
    };
    let (lower_cis, lower_c) =
        per_cell_cis(&point_cells.lower.bounds, &deviations.lower, cfg.alpha)?;
    let (upper_cis, upper_c) =
        per_cell_cis(&point_cells.upper.bounds, &deviations.upper, cfg.alpha)?;

    let stats_joint: Vec<f64> = deviations
        .lower
        .iter()
        .zip(&deviations.upper)
        .map(|(l, u)| l.iter().chain(u).copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let critical_value_simultaneous = critical_value(&stats_joint, cfg.alpha);
    let joint = |plugin: &CellBoundsMatrix| -> Result<CellBoundsMatrix> {
        let cells =
            plugin.cells().iter().map(|p| widen(p, critical_value_simultaneous, 1.0)).collect();
        CellBoundsMatrix::new(plugin.k(), cells)
    };
    let simultaneous_cis = PerEndpoint {
        lower: joint(&point_cells.lower.bounds)?,
        upper: joint(&point_cells.upper.bounds)?,
    };

    Ok(InferenceReport {
        config: *cfg,
        point: interval,
        point_cells: point_cells.map(|e| e.bounds.clone()),
        critical_value_d,
        ci_d,
        cell_critical_values: PerEndpoint { lower: lower_c, upper: upper_c },
        cell_cis: PerEndpoint { lower: lower_cis, upper: upper_cis },
        critical_value_simultaneous,
        simultaneous_cis,
        replication_log: reps.into_iter().map(|(r, _)| r).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::new(0, 0.05, 0).is_err());
        assert!(BootstrapConfig::new(10, 0.0, 0).is_err());
        assert!(BootstrapConfig::new(10, 1.0, 0).is_err());
        let cfg = BootstrapConfig::new(10, 0.05, 0).unwrap();
        assert!(cfg.with_rates(Some(1.2), None).is_err());
    }

    #[test]
    fn resample_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all_missing = ObservedSample::new(vec![0, 0, 0], 12).unwrap();
        let point = ObservedSample::new(vec![9, 0, 0], 0).unwrap();
        for _ in 0..50 {
            assert_eq!(resample(&all_missing, &mut rng), all_missing);
            assert_eq!(resample(&point, &mut rng), point);
        }
    }

    #[test]
    fn resample_law_of_large_numbers() {
        let s = ObservedSample::new(vec![5, 5], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let reps = 100_000;
        let total: u64 = (0..reps).map(|_| resample(&s, &mut rng).counts()[0]).sum();
        let share = total as f64 / (reps as f64 * 10.0);
        assert!((share - 0.5).abs() < 0.005, "{share}");
    }

    #[test]
    fn resample_keeps_n() {
        let s = ObservedSample::new(vec![3, 0, 7, 2], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = resample(&s, &mut rng);
            assert_eq!(r.n(), s.n());
            assert_eq!(r.counts()[1], 0);
        }
    }

    #[test]
    fn quantile_convention() {
        let stats: Vec<f64> = (1..=20).map(f64::from).collect();
        // ceil(0.95 * 20) = 19
        assert_eq!(critical_value(&stats, 0.05), 19.0);
        // ceil(0.9 * 20) = 18
        assert_eq!(critical_value(&stats, 0.1), 18.0);
        assert_eq!(critical_value(&[0.3], 0.05), 0.3);
        assert_eq!(critical_value(&[-0.2, -0.1], 0.05), 0.0);
        let stats: Vec<f64> = (1..=199).map(f64::from).collect();
        assert_eq!(critical_value(&stats, 0.05), 190.0);
    }

    #[test]
    fn single_replication() {
        let s = ObservedSample::new(vec![30, 20, 10], 5).unwrap();
        let t = ObservedSample::new(vec![10, 25, 25], 3).unwrap();
        let cfg = BootstrapConfig::new(1, 0.05, 9).unwrap();
        let r = bootstrap(&s, &t, &cfg).unwrap();
        let rec = r.replication_log[0];
        let t_stat = (r.point.d_low - rec.d_low).max(rec.d_up - r.point.d_up);
        assert_eq!(r.critical_value_d, t_stat.max(0.0));
        assert!(r.ci_d.contains_interval(&r.point.interval(), 0.0));
        assert_eq!(rec.seed, 9);
    }

    #[test]
    fn point_masses_cover_the_diagonal() {
        let s = ObservedSample::new(vec![0, 40, 0], 0).unwrap();
        let cfg = BootstrapConfig::new(5, 0.05, 1).unwrap();
        let r = bootstrap(&s, &s, &cfg).unwrap();
        assert!(r.cell_cis.lower.get(1, 1).contains(1.0, 1e-9));
        assert!(r.ci_d.contains(0.0, 0.0));
    }

    #[test]
    fn reproducible_with_fixed_seed() {
        let s = ObservedSample::new(vec![0, 3], 1).unwrap();
        let t = ObservedSample::new(vec![2, 0], 0).unwrap();
        let cfg = BootstrapConfig::new(2, 0.05, 77).unwrap();
        let a = bootstrap(&s, &t, &cfg).unwrap();
        let b = bootstrap(&s, &t, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            confidence_cell_bounds(&s, &t, &cfg, Endpoint::Upper).unwrap(),
            a.cell_cis.upper
        );
        assert_eq!(simultaneous_cell_bounds(&s, &t, &cfg).unwrap(), a.simultaneous_cis);
    }

    #[test]
    fn containment_chain_and_alpha_monotonicity() {
        let s = ObservedSample::new(vec![50, 30, 15, 5], 10).unwrap();
        let t = ObservedSample::new(vec![20, 30, 30, 20], 4).unwrap();
        let wide = bootstrap(&s, &t, &BootstrapConfig::new(40, 0.01, 5).unwrap()).unwrap();
        let narrow = bootstrap(&s, &t, &BootstrapConfig::new(40, 0.2, 5).unwrap()).unwrap();
        for r in [&wide, &narrow] {
            assert!(r.ci_d.contains_interval(&r.point.interval(), 0.0));
            for e in Endpoint::BOTH {
                assert!(r.cell_cis.get(e).contains_bounds(r.point_cells.get(e), 0.0));
                assert!(r.simultaneous_cis.get(e).contains_bounds(r.cell_cis.get(e), 0.0));
            }
        }
        assert!(wide.ci_d.contains_interval(&narrow.ci_d, 0.0));
        assert!(wide.critical_value_simultaneous >= narrow.critical_value_simultaneous);
        let (point, ci) = confidence_set_d(&s, &t, &BootstrapConfig::new(40, 0.01, 5).unwrap()).unwrap();
        assert_eq!(point, wide.point);
        assert_eq!(ci, wide.ci_d);
    }

    #[test]
    fn mismatched_categories() {
        let s = ObservedSample::new(vec![1, 1], 0).unwrap();
        let t = ObservedSample::new(vec![1, 1, 1], 0).unwrap();
        let cfg = BootstrapConfig::new(3, 0.05, 0).unwrap();
        assert!(matches!(confidence_set_d(&s, &t, &cfg), Err(Error::DimensionMismatch { .. })));
    }
}
