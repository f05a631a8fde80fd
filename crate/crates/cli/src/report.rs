//! The JSON report and its plain-text rendering.

use std::fmt::Write as _;

use ordinal_transport::inference::{bootstrap, BootstrapConfig, InferenceReport};
use ordinal_transport::partialid::{
    cdf_bounds, discrepancy_endpoints, endpoint_coupling_bounds_for, identified_set_with_rate,
    point_identified, Endpoint, IdentifiedInterval,
};
use ordinal_transport::transport::{
    frechet_cell_bounds, max_mobility, min_cost_coupling, normalized_discrepancy, transport_cost,
};
use ordinal_transport::{
    CellBoundsMatrix, Coupling, Interval, MarginalBox, ObservedSample, OrdinalDistribution, Result,
};
use serde::{Deserialize, Serialize};

use crate::ingest::DatasetSpec;

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub source: DatasetSpec,
    pub target: DatasetSpec,
    pub k: usize,
    pub p_override: Option<f64>,
    pub q_override: Option<f64>,
    pub alpha: f64,
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub sample: ObservedSample,
    pub response_rate: f64,
    /// Response rate the identified box was built with (an override, if given).
    pub rate_used: f64,
    pub observed_distribution: Option<OrdinalDistribution>,
    pub identified_box: MarginalBox,
    pub cdf_bounds: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancySummary {
    pub point_identified: bool,
    pub interval: IdentifiedInterval,
    pub normalized: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub endpoint: Endpoint,
    pub value: f64,
    pub bounds: CellBoundsMatrix,
    pub representative: Coupling,
    pub representative_cost: f64,
    /// 1-based `(origin, destination)` cells with a positive lower bound.
    pub forced_flows: Vec<[usize; 2]>,
    /// 1-based cells whose upper bound is zero.
    pub unused_flows: Vec<[usize; 2]>,
    pub degenerate: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMobilitySummary {
    /// Computed on the observed (respondent) distributions.
    pub value: f64,
    pub normalized: f64,
    pub coupling: Coupling,
    pub frechet_bounds: CellBoundsMatrix,
    pub minimal_coupling: Coupling,
    pub minimal_within_frechet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub tool_version: String,
    pub seed: u64,
    pub inputs: Inputs,
    pub source: SampleSummary,
    pub target: SampleSummary,
    pub discrepancy: DiscrepancySummary,
    pub endpoint_couplings: Vec<CouplingSummary>,
    pub max_mobility: Option<MaxMobilitySummary>,
    pub inference: Option<InferenceReport>,
    pub figures: Vec<String>,
}

/// Which optional sections to compute.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sections {
    pub couplings: bool,
    pub max_mobility: bool,
    pub inference: bool,
}

pub struct Analysis {
    pub source: ObservedSample,
    pub target: ObservedSample,
    pub box_source: MarginalBox,
    pub box_target: MarginalBox,
    pub rate_source: f64,
    pub rate_target: f64,
}

impl Analysis {
    pub fn new(
        source: ObservedSample,
        target: ObservedSample,
        p_override: Option<f64>,
        q_override: Option<f64>,
    ) -> Result<Self> {
        let rate_source = p_override.unwrap_or_else(|| source.response_rate());
        let rate_target = q_override.unwrap_or_else(|| target.response_rate());
        let box_source = identified_set_with_rate(&source, rate_source)?;
        let box_target = identified_set_with_rate(&target, rate_target)?;
        if box_source.k() != box_target.k() {
            return Err(ordinal_transport::Error::DimensionMismatch {
                expected: box_source.k(),
                found: box_target.k(),
            });
        }
        Ok(Self { source, target, box_source, box_target, rate_source, rate_target })
    }

    pub fn k(&self) -> usize {
        self.box_source.k()
    }

    /// Both margins are fully identified.
    pub fn point_identified(&self) -> bool {
        self.box_source.width() == 0.0 && self.box_target.width() == 0.0
    }

    fn sample_summary(s: &ObservedSample, rate: f64, b: &MarginalBox) -> SampleSummary {
        SampleSummary {
            sample: s.clone(),
            response_rate: s.response_rate(),
            rate_used: rate,
            observed_distribution: s.observed_distribution(),
            identified_box: b.clone(),
            cdf_bounds: cdf_bounds(b),
        }
    }

    pub fn discrepancy(&self) -> Result<DiscrepancySummary> {
        let interval = match self.observed_pair() {
            Some((mu, nu)) if self.point_identified() => point_identified(&mu, &nu)?,
            _ => discrepancy_endpoints(&self.box_source, &self.box_target)?,
        };
        let normalized = Interval {
            lo: normalized_discrepancy(interval.d_low, self.k())?,
            hi: normalized_discrepancy(interval.d_up, self.k())?,
        };
        Ok(DiscrepancySummary { point_identified: self.point_identified(), interval, normalized })
    }

    fn observed_pair(&self) -> Option<(OrdinalDistribution, OrdinalDistribution)> {
        Some((self.source.observed_distribution()?, self.target.observed_distribution()?))
    }

    pub fn couplings(&self, interval: &IdentifiedInterval) -> Result<Vec<CouplingSummary>> {
        Endpoint::BOTH
            .into_iter()
            .map(|e| {
                let b = endpoint_coupling_bounds_for(&self.box_source, &self.box_target, interval, e)?;
                let to_cells = |v: Vec<(usize, usize)>| -> Vec<[usize; 2]> {
                    v.into_iter().map(|(i, j)| [i + 1, j + 1]).collect()
                };
                let forced = to_cells(b.forced_flows());
                let unused = to_cells(b.unused_flows());
                let degenerate = b.is_degenerate();
                let mut notes: Vec<String> = forced
                    .iter()
                    .map(|[i, j]| {
                        format!("every minimal-mobility configuration moves positive mass from {i} to {j}")
                    })
                    .collect();
                notes.extend(unused.iter().map(|[i, j]| {
                    format!("no minimal-mobility configuration moves mass from {i} to {j}")
                }));
                if degenerate {
                    notes.push(
                        "the lower endpoint is 0: the set of cost-minimal couplings is large and the bounds are uninformative"
                            .into(),
                    );
                }
                Ok(CouplingSummary {
                    endpoint: e,
                    value: b.value,
                    representative_cost: transport_cost(&b.representative),
                    bounds: b.bounds,
                    representative: b.representative,
                    forced_flows: forced,
                    unused_flows: unused,
                    degenerate,
                    notes,
                })
            })
            .collect()
    }

    pub fn max_mobility(&self) -> Result<Option<MaxMobilitySummary>> {
        let Some((mu, nu)) = self.observed_pair() else { return Ok(None) };
        let (value, coupling) = max_mobility(&mu, &nu)?;
        let frechet_bounds = frechet_cell_bounds(&mu, &nu)?;
        let minimal_coupling = min_cost_coupling(&mu, &nu)?;
        Ok(Some(MaxMobilitySummary {
            value,
            normalized: normalized_discrepancy(value, self.k())?,
            minimal_within_frechet: frechet_bounds.contains_coupling(&minimal_coupling, 1e-9),
            coupling,
            frechet_bounds,
            minimal_coupling,
        }))
    }

    pub fn report(&self, inputs: Inputs, seed: u64, sections: Sections) -> Result<Report> {
        let discrepancy = self.discrepancy()?;
        let endpoint_couplings =
            if sections.couplings { self.couplings(&discrepancy.interval)? } else { Vec::new() };
        let max_mobility = if sections.max_mobility { self.max_mobility()? } else { None };
        let inference = if sections.inference {
            let cfg = BootstrapConfig::new(inputs.reps.unwrap_or(0), inputs.alpha, seed)?
                .with_rates(inputs.p_override, inputs.q_override)?;
            Some(bootstrap(&self.source, &self.target, &cfg)?)
        } else {
            None
        };
        Ok(Report {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: TOOL_VERSION.into(),
            seed,
            inputs,
            source: Self::sample_summary(&self.source, self.rate_source, &self.box_source),
            target: Self::sample_summary(&self.target, self.rate_target, &self.box_target),
            discrepancy,
            endpoint_couplings,
            max_mobility,
            inference,
            figures: Vec::new(),
        })
    }
}

fn fmt_interval(i: &Interval) -> String {
    format!("[{:.4}, {:.4}]", i.lo, i.hi)
}

fn fmt_probs(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_matrix(out: &mut String, rows: usize, cell: impl Fn(usize, usize) -> String) {
    for i in 0..rows {
        let line: Vec<String> = (0..rows).map(|j| format!("{:>17}", cell(i, j))).collect();
        let _ = writeln!(out, "    {:>2} {}", i + 1, line.join(""));
    }
}

/// The discrepancy (or its identified interval) and its normalization.
pub fn render_distance(r: &Report) -> String {
    let d = &r.discrepancy;
    let max = r.inputs.k - 1;
    if d.point_identified {
        format!("D = {:.6}\nnormalized D = {:.4} (maximum {max})\n", d.interval.d_low, d.normalized.lo)
    } else {
        format!(
            "D in [{:.6}, {:.6}]\nnormalized D in {} (maximum {max})\n",
            d.interval.d_low,
            d.interval.d_up,
            fmt_interval(&d.normalized)
        )
    }
}

/// Human-readable rendering of every section present in `r`.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let k = r.inputs.k;
    for (name, s) in [("source", &r.source), ("target", &r.target)] {
        let _ = writeln!(
            out,
            "{name}: n = {}, missing = {}, response rate = {:.4}",
            s.sample.n(),
            s.sample.missing(),
            s.response_rate
        );
        let _ = writeln!(out, "  box lower {}", fmt_probs(s.identified_box.lower()));
        let _ = writeln!(out, "  box upper {}", fmt_probs(s.identified_box.upper()));
        let cdf: Vec<String> = s.cdf_bounds.iter().map(fmt_interval).collect();
        let _ = writeln!(out, "  CDF bounds {}", cdf.join(" "));
    }
    out.push_str(&render_distance(r));
    for c in &r.endpoint_couplings {
        let _ = writeln!(out, "\n{:?} endpoint (cost {:.6}): cell bounds", c.endpoint, c.value);
        fmt_matrix(&mut out, k, |i, j| fmt_interval(&c.bounds.get(i, j)));
        let _ = writeln!(out, "  representative coupling (cost {:.6})", c.representative_cost);
        fmt_matrix(&mut out, k, |i, j| format!("{:.3}", c.representative.get(i, j)));
        for note in &c.notes {
            let _ = writeln!(out, "  - {note}");
        }
    }
    if let Some(m) = &r.max_mobility {
        let _ = writeln!(out, "\nmaximal mobility M = {:.6} (normalized {:.4})", m.value, m.normalized);
        fmt_matrix(&mut out, k, |i, j| format!("{:.3}", m.coupling.get(i, j)));
        let _ = writeln!(out, "  Frechet cell bounds");
        fmt_matrix(&mut out, k, |i, j| fmt_interval(&m.frechet_bounds.get(i, j)));
    }
    if let Some(inf) = &r.inference {
        let _ = writeln!(
            out,
            "\nbootstrap: B = {}, alpha = {}, seed = {}",
            inf.config.replications, inf.config.alpha, inf.config.seed
        );
        let _ = writeln!(out, "  confidence set for D: {}", fmt_interval(&inf.ci_d));
        let _ = writeln!(out, "  simultaneous critical value {:.6}", inf.critical_value_simultaneous);
        for e in Endpoint::BOTH {
            let _ = writeln!(out, "  {e:?} endpoint per-cell confidence intervals");
            fmt_matrix(&mut out, k, |i, j| fmt_interval(&inf.cell_cis.get(e).get(i, j)));
        }
        let retries: u64 = inf.replication_log.iter().map(|r| r.retries).sum();
        if retries > 0 {
            let _ = writeln!(out, "  {retries} replication retries");
        }
    }
    for f in &r.figures {
        let _ = writeln!(out, "figure: {f}");
    }
    out
}
