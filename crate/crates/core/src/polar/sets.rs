use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which rule turns Bhattacharyya estimates into index sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Lossy compression: information bits are the ones neither the prior nor the observation pins down.
    Quantization,
    /// Transmission: information bits are uniform under the prior and reliable given the observation.
    ChannelCoding,
}

/// Role of one index within a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Frozen,
    Info,
    Shaping,
}

/// Frozen, information and shaping index sets of one level, each sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSets {
    pub frozen: Vec<u32>,
    pub info: Vec<u32>,
    pub shaping: Vec<u32>,
}

impl LevelSets {
    pub fn n(&self) -> usize {
        self.frozen.len() + self.info.len() + self.shaping.len()
    }

    /// Role of every index.
    pub fn roles(&self) -> Vec<Role> {
        let mut r = vec![Role::Shaping; self.n()];
        for &i in &self.frozen {
            r[i as usize] = Role::Frozen;
        }
        for &i in &self.info {
            r[i as usize] = Role::Info;
        }
        r
    }

    /// Rebuilds sorted sets from per-index roles.
    pub fn from_roles(roles: &[Role]) -> Self {
        let mut s = Self::default();
        for (i, role) in roles.iter().enumerate() {
            match role {
                Role::Frozen => s.frozen.push(i as u32),
                Role::Info => s.info.push(i as u32),
                Role::Shaping => s.shaping.push(i as u32),
            }
        }
        s
    }

    /// Checks that the three sets partition `0..n`.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.frozen.iter().chain(&self.info).chain(&self.shaping) {
            let i = i as usize;
            if i >= n || seen[i] {
                return Err(Error::Precondition(format!("index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Precondition("index sets do not cover the block".into()));
        }
        for set in [&self.frozen, &self.info, &self.shaping] {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Precondition("index set not sorted".into()));
            }
        }
        Ok(())
    }
}

/// Number of information bits for a rate target, `ceil(n * rate)`.
pub fn info_count(n: usize, rate_target: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&rate_target) {
        return Err(Error::InfeasibleRate { level: 0, target: rate_target });
    }
    let k = (n as f64 * rate_target - 1e-9).ceil().max(0.0) as usize;
    Ok(k.min(n))
}

/// Partitions `0..n` so that `|I| = ceil(n * rate_target)`.
///
/// Quantization ranks indices by `min(z_prior, 1 - z_post)` and keeps the
/// largest as information; the others become shaping if the prior nearly
/// determines them, frozen otherwise. Channel coding ranks by
/// `max(1 - z_prior, z_post)` and keeps the smallest; among the rest,
/// indices whose posterior is as uncertain as the cut allows are frozen
/// and the remainder are shaping. Ties go to the lower index.
pub fn partition_sets(z_prior: &[f64], z_post: &[f64], rate_target: f64, variant: Variant) -> Result<LevelSets> {
    let k = info_count(z_prior.len(), rate_target)?;
    Ok(partition_by_count(z_prior, z_post, k, variant, None))
}

/// Reference levels that put prior and posterior Bhattacharyya values on one scale.
///
/// An index is safely shaping when `z_prior <= shaping` and safely frozen
/// when `1 - z_post <= frozen`. Quantization ranks indices by
/// `min(ln(z_prior / shaping), ln((1 - z_post) / frozen))`; with both levels
/// equal the ranking is the one of `min(z_prior, 1 - z_post)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub shaping: f64,
    pub frozen: f64,
}

impl Thresholds {
    pub const EVEN: Thresholds = Thresholds { shaping: 1.0, frozen: 1.0 };

    /// Distance of an index from the two safe regions, on a log scale. Positive means neither applies.
    pub fn score(&self, z_prior: f64, z_post: f64, frozen_allowed: bool) -> f64 {
        let s = (z_prior.max(f64::MIN_POSITIVE) / self.shaping).ln();
        if frozen_allowed {
            s.min(((1.0 - z_post).max(f64::MIN_POSITIVE) / self.frozen).ln())
        } else {
            s
        }
    }

    /// Whether a non-information index is better frozen than shaped.
    pub fn prefers_frozen(&self, z_prior: f64, z_post: f64) -> bool {
        (1.0 - z_post) / self.frozen < z_prior / self.shaping
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::EVEN
    }
}

/// As [`partition_sets`] with an exact information count and an optional mask of indices allowed in `F`.
pub fn partition_by_count(
    z_prior: &[f64],
    z_post: &[f64],
    k: usize,
    variant: Variant,
    frozen_allowed: Option<&[bool]>,
) -> LevelSets {
    partition_with(z_prior, z_post, Some(k), variant, frozen_allowed, Thresholds::EVEN)
}

/// Number of quantization indices outside both safe regions.
pub fn threshold_count(z_prior: &[f64], z_post: &[f64], frozen_allowed: Option<&[bool]>, th: Thresholds) -> usize {
    let allowed = |i: usize| frozen_allowed.is_none_or(|m| m[i]);
    (0..z_prior.len()).filter(|&i| th.score(z_prior[i], z_post[i], allowed(i)) > 0.0).count()
}

/// General partition. `k = None` takes every quantization index outside both safe regions of `th`.
pub fn partition_with(
    z_prior: &[f64],
    z_post: &[f64],
    k: Option<usize>,
    variant: Variant,
    frozen_allowed: Option<&[bool]>,
    th: Thresholds,
) -> LevelSets {
    let n = z_prior.len();
    assert_eq!(z_post.len(), n);
    let k = k.unwrap_or_else(|| threshold_count(z_prior, z_post, frozen_allowed, th)).min(n);
    let allowed = |i: usize| frozen_allowed.is_none_or(|m| m[i]);
    let mut roles = vec![Role::Shaping; n];
    let mut order: Vec<usize> = (0..n).collect();
    match variant {
        Variant::Quantization => {
            let score: Vec<f64> = (0..n).map(|i| th.score(z_prior[i], z_post[i], allowed(i))).collect();
            order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
            for (rank, &i) in order.iter().enumerate() {
                roles[i] = if rank < k {
                    Role::Info
                } else if allowed(i) && th.prefers_frozen(z_prior[i], z_post[i]) {
                    Role::Frozen
                } else {
                    Role::Shaping
                };
            }
        }
        Variant::ChannelCoding => {
            let score = |i: usize| (1.0 - z_prior[i]).max(z_post[i]);
            order.sort_by(|&a, &b| score(a).total_cmp(&score(b)).then(a.cmp(&b)));
            let tau = if n == 0 { 0.0 } else { score(order[k.max(1) - 1]) };
            for (rank, &i) in order.iter().enumerate() {
                roles[i] = if rank < k {
                    Role::Info
                } else if allowed(i) && z_post[i] >= 1.0 - tau {
                    Role::Frozen
                } else {
                    Role::Shaping
                };
            }
        }
    }
    LevelSets::from_roles(&roles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_channel_fully_loaded() {
        let s = partition_sets(&[1.0; 8], &[0.0; 8], 1.0, Variant::ChannelCoding).unwrap();
        assert_eq!(s.info.len(), 8);
    }

    #[test]
    fn deterministic_source_all_shaping() {
        let s = partition_sets(&[0.0; 8], &[0.0; 8], 0.0, Variant::Quantization).unwrap();
        assert_eq!(s.shaping.len(), 8);
    }

    #[test]
    fn infeasible_targets() {
        assert!(matches!(partition_sets(&[0.5; 4], &[0.5; 4], 1.5, Variant::Quantization), Err(Error::InfeasibleRate { .. })));
        assert!(partition_sets(&[0.5; 4], &[0.5; 4], f64::NAN, Variant::Quantization).is_err());
    }

    #[test]
    fn quantization_roles() {
        let zp = [0.0, 1.0, 1.0, 0.9];
        let zq = [0.0, 1.0, 0.0, 0.5];
        let s = partition_sets(&zp, &zq, 0.5, Variant::Quantization).unwrap();
        assert_eq!(s.shaping, vec![0]);
        assert_eq!(s.frozen, vec![1]);
        assert_eq!(s.info, vec![2, 3]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let s = partition_sets(&[0.5; 4], &[0.5; 4], 0.5, Variant::Quantization).unwrap();
        assert_eq!(s.info, vec![0, 1]);
        let s = partition_sets(&[0.5; 4], &[0.5; 4], 0.5, Variant::ChannelCoding).unwrap();
        assert_eq!(s.info, vec![0, 1]);
    }

    #[test]
    fn mask_bars_frozen() {
        let zp = [1.0, 1.0, 1.0, 1.0];
        let zq = [1.0, 1.0, 0.0, 0.0];
        let mask = [false, true, true, true];
        let s = partition_by_count(&zp, &zq, 2, Variant::Quantization, Some(&mask));
        assert!(!s.frozen.contains(&0));
        assert_eq!(s.n(), 4);
    }

    #[test]
    fn thresholds_pick_unpolarized() {
        let zp = [1e-6, 0.5, 1.0, 1.0, 0.002];
        let zq = [0.0, 0.0, 0.999, 0.5, 0.0];
        let th = Thresholds { shaping: 1e-3, frozen: 1e-2 };
        assert_eq!(threshold_count(&zp, &zq, None, th), 3);
        let s = partition_with(&zp, &zq, None, Variant::Quantization, None, th);
        assert_eq!(s.info, vec![1, 3, 4]);
        assert_eq!(s.shaping, vec![0]);
        assert_eq!(s.frozen, vec![2]);
    }

    #[test]
    fn even_thresholds_match_linear_ranking() {
        let zp = [0.3, 0.9, 0.6, 0.95];
        let zq = [0.1, 0.8, 0.5, 0.05];
        let a = partition_by_count(&zp, &zq, 2, Variant::Quantization, None);
        let mut idx: Vec<usize> = (0..4).collect();
        idx.sort_by(|&i, &j| (zp[j].min(1.0 - zq[j])).total_cmp(&zp[i].min(1.0 - zq[i])));
        let mut want: Vec<u32> = idx[..2].iter().map(|&i| i as u32).collect();
        want.sort();
        assert_eq!(a.info, want);
    }

    proptest! {
        #[test]
        fn always_a_partition(
            zp in proptest::collection::vec(0.0f64..=1.0, 64),
            zq in proptest::collection::vec(0.0f64..=1.0, 64),
            rate in 0.0f64..=1.0,
            channel in proptest::bool::ANY,
        ) {
            let v = if channel { Variant::ChannelCoding } else { Variant::Quantization };
            let s = partition_sets(&zp, &zq, rate, v).unwrap();
            prop_assert!(s.check_partition(64).is_ok());
            prop_assert!(s.info.len() as f64 >= 64.0 * rate - 1e-9);
            prop_assert_eq!(s.info.len(), info_count(64, rate).unwrap());
        }
    }
}
