//! Helpers shared across the integration-test binaries: finite-difference
//! gradient checks, brute-force metric recomputations, and independent
//! root-finding oracles for the multiplier solvers.
#![allow(dead_code)]

pub mod gradients;
pub mod metric_oracle;
pub mod solver_oracle;

use maxcal_core::PriorDistribution;

/// A fixed non-uniform prior so solved multipliers are non-trivial.
pub fn test_prior() -> PriorDistribution {
    let counts = [5u64, 9, 6, 11, 8, 10, 12, 7, 13, 9];
    PriorDistribution::from_counts(&counts).unwrap()
}
