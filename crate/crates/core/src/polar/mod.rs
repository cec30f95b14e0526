//! Polar transform, successive cancellation, and code construction.

pub mod construct;
pub mod sc;
pub mod sets;
pub mod transform;

pub use construct::{
    construct, estimate_bhattacharyya_all, from_estimates, Allocation, CodeSpec, ConstructionConfig, FrozenChoice, LevelEstimate,
    Observation, ZEstimate,
};
pub use sc::{boxplus, sc_probabilities, ScDecoder};
pub use sets::{partition_sets, LevelSets, Role, Thresholds, Variant};
pub use transform::{polar_transform, polar_transform_in_place};

use crate::channel::TestChannel;
use crate::error::{Error, Result};

/// Prior LLR of every position at one level given the lower-level residues.
pub fn prior_llrs(channel: &TestChannel, level: usize, cosets: &[u32]) -> Vec<f64> {
    let mask = (1u32 << level) - 1;
    cosets.iter().map(|&c| channel.prior_llr(level, c & mask)).collect()
}

/// Posterior LLR of every position at one level given residues and observations.
pub fn posterior_llrs(channel: &TestChannel, level: usize, cosets: &[u32], y: &[f64]) -> Vec<f64> {
    let mask = (1u32 << level) - 1;
    cosets.iter().zip(y).map(|(&c, &v)| channel.posterior_llr(level, c & mask, v)).collect()
}

fn prefix_probability(llr: &[f64], u_prefix: &[u8]) -> Result<f64> {
    let n = llr.len();
    let i = u_prefix.len();
    if i >= n {
        return Err(Error::Domain(format!("prefix of length {i} leaves no bit in a block of {n}")));
    }
    let mut u = u_prefix.to_vec();
    u.resize(n, 0);
    Ok(sc_probabilities(llr, &u)?[i])
}

/// `P(u_i = 0 | u_<i, x_<l)` at level `level`, where `i = u_prefix.len()` and
/// `x_below[j]` holds the lower-level bits of position `j` as a residue.
pub fn sc_prior(channel: &TestChannel, level: usize, u_prefix: &[u8], x_below: &[u32]) -> Result<f64> {
    prefix_probability(&prior_llrs(channel, level, x_below), u_prefix)
}

/// `P(u_i = 0 | u_<i, x_<l, y')`.
pub fn sc_posterior(channel: &TestChannel, level: usize, u_prefix: &[u8], x_below: &[u32], y: &[f64]) -> Result<f64> {
    if y.len() != x_below.len() {
        return Err(Error::Domain("observations and lower-level bits differ in length".into()));
    }
    prefix_probability(&posterior_llrs(channel, level, x_below, y), u_prefix)
}
