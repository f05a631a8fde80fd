//! Ordinal distributional change measured by optimal transport.
//!
//! The discrepancy between two distributions over `K` ordered categories is
//! the L1 distance between their CDFs, which equals the minimal transport
//! cost under the threshold-crossing cost `|i - j|`. Under item nonresponse
//! the marginals are only partially identified; this crate computes sharp
//! bounds on the discrepancy and on the flows of the cost-minimal couplings
//! attaining each bound, plus bootstrap confidence sets for all of them.
//!
//! Modules, bottom-up:
//!
//! - [`domain`]: validated distributions, couplings, samples and boxes.
//! - [`lp`]: a deterministic dense simplex solver.
//! - [`transport`]: point-identified transport objects.
//! - [`partialid`]: identified sets and their endpoint couplings.
//! - [`inference`]: bootstrap confidence sets.

pub mod domain;
pub mod error;
pub mod inference;
pub mod lp;
pub mod partialid;
pub mod transport;

pub use domain::{
    cdf, make_distribution, marginals, CellBoundsMatrix, Coupling, Interval, MarginalBox,
    ObservedSample, OrdinalDistribution, StepCdf, MAX_CATEGORIES, TOL,
};
pub use error::{Error, Result};
