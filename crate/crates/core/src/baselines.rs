//! Reference baselines, an exhaustive small-block oracle and sweep orchestration.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::channel::{mmse_params, normal_interval, BinnedChannel, TestChannel};
use crate::error::{Error, Result};
use crate::lattice::{default_eta, PartitionChain};
use crate::polar::{construct, sc_probabilities, CodeSpec, ConstructionConfig, LevelSets, Role};
use crate::quantizer::{measure, snr_db, EncodeRule, ExperimentResult, Quantizer};

/// An optimal scalar quantizer for a Gaussian source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydMax {
    /// Reconstruction points, ascending.
    pub levels: Vec<f64>,
    /// Interior decision thresholds, ascending.
    pub thresholds: Vec<f64>,
    pub mse: f64,
    pub snr_db: f64,
    pub iterations: usize,
    /// MSE after every iteration.
    pub history: Vec<f64>,
}

const LLOYD_TOLERANCE: f64 = 1e-12;
const LLOYD_MAX_ITER: usize = 100_000;

/// `phi(x)`, zero at infinities.
fn phi(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// `x phi(x)`, zero at infinities.
fn x_phi(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * phi(x)
    }
}

/// Exact MSE of a unit-variance quantizer with the given cells and points.
fn cell_mse(edges: &[f64], levels: &[f64]) -> f64 {
    levels
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (a, b) = (edges[k], edges[k + 1]);
            let p = normal_interval(a, b);
            let m1 = phi(a) - phi(b);
            let m2 = p + x_phi(a) - x_phi(b);
            m2 - 2.0 * c * m1 + c * c * p
        })
        .sum()
}

/// Lloyd iteration on `N(0, sigma_s^2)` with `2^rate_bits` cells, started at Gaussian quantiles.
pub fn lloyd_max(rate_bits: u32, sigma_s: f64) -> Result<LloydMax> {
    if rate_bits == 0 || rate_bits > 12 {
        return Err(Error::Domain(format!("rate must lie in 1..=12 bits, got {rate_bits}")));
    }
    if !(sigma_s > 0.0 && sigma_s.is_finite()) {
        return Err(Error::Domain(format!("sigma_s must be positive, got {sigma_s}")));
    }
    let cells = 1usize << rate_bits;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut levels: Vec<f64> = (0..cells).map(|k| unit.inverse_cdf((k as f64 + 0.5) / cells as f64)).collect();
    let mut edges = vec![0.0; cells + 1];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        edges[0] = f64::NEG_INFINITY;
        edges[cells] = f64::INFINITY;
        for k in 1..cells {
            edges[k] = 0.5 * (levels[k - 1] + levels[k]);
        }
        let next: Vec<f64> = (0..cells).map(|k| (phi(edges[k]) - phi(edges[k + 1])) / normal_interval(edges[k], edges[k + 1])).collect();
        let moved = next.iter().zip(&levels).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        levels = next;
        iterations += 1;
        history.push(cell_mse(&edges, &levels) * sigma_s * sigma_s);
        if moved < LLOYD_TOLERANCE || iterations >= LLOYD_MAX_ITER {
            break;
        }
    }
    let mse = *history.last().expect("one iteration");
    Ok(LloydMax {
        levels: levels.iter().map(|c| c * sigma_s).collect(),
        thresholds: edges[1..cells].iter().map(|e| e * sigma_s).collect(),
        mse,
        snr_db: snr_db(sigma_s * sigma_s, mse),
        iterations,
        history,
    })
}

/// SNR of the Gaussian rate-distortion bound, `10 log10(4^R)`.
pub fn rd_bound_snr(rate_bits: f64) -> Result<f64> {
    if !(rate_bits >= 0.0 && rate_bits.is_finite()) {
        return Err(Error::Domain(format!("rate must be nonnegative, got {rate_bits}")));
    }
    Ok(20.0 * rate_bits * 2f64.log10())
}

/// Largest block length the oracle enumerates.
pub const ORACLE_MAX_N: usize = 8;

/// Exact tables of one level channel over a binned observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleTables {
    pub n: usize,
    pub bins: usize,
    pub level: usize,
    /// Lower-level residue of every position.
    pub cosets: Vec<u32>,
    pub z_prior: Vec<f64>,
    pub z_post: Vec<f64>,
    /// Conditional entropies in bits.
    pub h_prior: Vec<f64>,
    pub h_post: Vec<f64>,
    pub sets: LevelSets,
    /// Total variation between the random-rounding-everywhere law `P` and the encoder law `Q`.
    pub variation: f64,
    /// Bound on `variation` from the Bhattacharyya values of `F` and `S`.
    pub bound: f64,
    /// The same bound before entropies are replaced by Bhattacharyya values.
    pub bound_entropy: f64,
}

struct Oracle {
    n: usize,
    bins: usize,
    /// `pj[j][x][b] = P(x_j = x, bin b | coset_j)`.
    pj: Vec<[Vec<f64>; 2]>,
}

/// `u` is indexed with `u_0` as the most significant bit, so prefixes are contiguous.
fn transform_index(n: usize, idx: usize) -> Vec<u8> {
    let mut bits: Vec<u8> = (0..n).map(|j| ((idx >> (n - 1 - j)) & 1) as u8).collect();
    crate::polar::polar_transform_in_place(&mut bits).expect("power of two");
    bits
}

impl Oracle {
    fn new(binned: &BinnedChannel, prior: &TestChannel, level: usize, cosets: &[u32]) -> Result<Self> {
        let n = cosets.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Size(n));
        }
        if n > ORACLE_MAX_N {
            return Err(Error::Domain(format!("oracle enumerates at most N = {ORACLE_MAX_N}, got {n}")));
        }
        if level >= prior.levels() {
            return Err(Error::Domain(format!("level {level} beyond the chain")));
        }
        let bins = binned.binning.bins();
        let pj = cosets
            .iter()
            .map(|&c| {
                if c >= 1 << level {
                    return Err(Error::Domain(format!("coset {c} needs more than {level} bits")));
                }
                let mass = prior.dg.coset_mass(level, c);
                if !(mass > 0.0) {
                    return Err(Error::EmptyCoset { level, coset: c });
                }
                let row = |x: u32| (0..bins).map(|b| binned.joint(level, c + (x << level), b) / mass).collect();
                Ok([row(0), row(1)])
            })
            .collect::<Result<_>>()?;
        Ok(Self { n, bins, pj })
    }

    fn bin_configs(&self) -> usize {
        self.bins.pow(self.n as u32)
    }

    /// `P(u, b)` over every `u` for one bin configuration.
    fn joint_u(&self, cfg: usize, xs: &[Vec<u8>]) -> Vec<f64> {
        let mut b = vec![0usize; self.n];
        let mut c = cfg;
        for slot in b.iter_mut() {
            *slot = c % self.bins;
            c /= self.bins;
        }
        xs.iter()
            .map(|x| (0..self.n).map(|j| self.pj[j][x[j] as usize][b[j]]).product())
            .collect()
    }
}

/// Marginals over prefixes: `m[k][p]` sums `w` over all `u` whose first `k` bits read `p`.
fn prefix_marginals(n: usize, w: &[f64]) -> Vec<Vec<f64>> {
    let mut m = vec![Vec::new(); n + 1];
    m[n] = w.to_vec();
    for k in (0..n).rev() {
        m[k] = (0..1usize << k).map(|p| m[k + 1][2 * p] + m[k + 1][2 * p + 1]).collect();
    }
    m
}

fn bz(a: f64, b: f64) -> f64 {
    2.0 * (a * b).sqrt()
}

/// `(a + b) h2(a / (a + b))`, in bits.
fn weighted_h2(a: f64, b: f64) -> f64 {
    let t = a + b;
    if t <= 0.0 {
        return 0.0;
    }
    let f = |p: f64| if p > 0.0 { -p * (p / t).log2() } else { 0.0 };
    f(a) + f(b)
}

/// Exact Bhattacharyya values, entropies and encoder variation at one level of a binned test channel.
///
/// `sets = None` partitions the exact values with `partition_sets` at `rate_target`.
pub fn small_n_oracle(
    channel: &TestChannel,
    binned: &BinnedChannel,
    level: usize,
    cosets: &[u32],
    sets: Option<LevelSets>,
    rate_target: f64,
) -> Result<OracleTables> {
    let o = Oracle::new(binned, channel, level, cosets)?;
    let n = o.n;
    let xs: Vec<Vec<u8>> = (0..1usize << n).map(|u| transform_index(n, u)).collect();
    let mut prior_w = vec![0.0; 1 << n];
    let mut z_post = vec![0.0; n];
    let mut h_post = vec![0.0; n];
    let mut post_marg = Vec::with_capacity(o.bin_configs());
    for cfg in 0..o.bin_configs() {
        let w = o.joint_u(cfg, &xs);
        for (a, b) in prior_w.iter_mut().zip(&w) {
            *a += b;
        }
        let m = prefix_marginals(n, &w);
        for i in 0..n {
            for p in 0..1usize << i {
                let (a, b) = (m[i + 1][2 * p], m[i + 1][2 * p + 1]);
                z_post[i] += bz(a, b);
                h_post[i] += weighted_h2(a, b);
            }
        }
        post_marg.push(m);
    }
    let pm = prefix_marginals(n, &prior_w);
    let mut z_prior = vec![0.0; n];
    let mut h_prior = vec![0.0; n];
    for i in 0..n {
        for p in 0..1usize << i {
            let (a, b) = (pm[i + 1][2 * p], pm[i + 1][2 * p + 1]);
            z_prior[i] += bz(a, b);
            h_prior[i] += weighted_h2(a, b);
        }
    }
    let sets = match sets {
        Some(s) => {
            s.check_partition(n)?;
            s
        }
        None => crate::polar::partition_sets(&z_prior, &z_post, rate_target, crate::polar::Variant::Quantization)?,
    };
    let roles = sets.roles();

    // Q(u, b) = P(b) prod_i q_i(u_i | u_<i, b); P(u, b) is the joint itself.
    let mut variation = 0.0;
    for m in &post_marg {
        for u in 0..1usize << n {
            let mut q = m[0][0];
            for i in 0..n {
                let p = u >> (n - i);
                let bit = (u >> (n - 1 - i)) & 1;
                q *= match roles[i] {
                    Role::Info => {
                        let den = m[i][p];
                        if den > 0.0 {
                            m[i + 1][2 * p + bit] / den
                        } else {
                            0.5
                        }
                    }
                    Role::Frozen => 0.5,
                    Role::Shaping => {
                        let (a, b) = (pm[i + 1][2 * p], pm[i + 1][2 * p + 1]);
                        let map = (b > a) as usize;
                        (bit == map) as u8 as f64
                    }
                };
                if q == 0.0 {
                    break;
                }
            }
            variation += (m[n][u] - q).abs();
        }
    }
    variation *= 0.5;
    let s2 = 2.0 * LN_2;
    let mut bound = 0.0;
    let mut bound_entropy = 0.0;
    for i in 0..n {
        match roles[i] {
            Role::Frozen => {
                bound += (s2 * (1.0 - z_post[i] * z_post[i]).max(0.0)).sqrt();
                bound_entropy += (s2 * (1.0 - h_post[i]).max(0.0)).sqrt();
            }
            Role::Shaping => {
                bound += (s2 * (z_prior[i] - z_post[i] * z_post[i]).max(0.0)).sqrt() + (s2 * z_prior[i]).sqrt();
                bound_entropy += (s2 * (h_prior[i] - h_post[i]).max(0.0)).sqrt() + (s2 * h_prior[i]).sqrt();
            }
            Role::Info => {}
        }
    }
    Ok(OracleTables {
        n,
        bins: o.bins,
        level,
        cosets: cosets.to_vec(),
        z_prior,
        z_post,
        h_prior,
        h_post,
        sets,
        variation,
        bound: 0.5 * bound,
        bound_entropy: 0.5 * bound_entropy,
    })
}

/// Largest gap between SC and enumerated conditionals `P(u_i = 0 | u_<i [, bins])` over every `u` and bin pattern.
pub fn oracle_sc_agreement(channel: &TestChannel, binned: &BinnedChannel, level: usize, cosets: &[u32]) -> Result<f64> {
    let o = Oracle::new(binned, channel, level, cosets)?;
    let n = o.n;
    let xs: Vec<Vec<u8>> = (0..1usize << n).map(|u| transform_index(n, u)).collect();
    let us: Vec<Vec<u8>> = (0..1usize << n).map(|u| (0..n).map(|j| ((u >> (n - 1 - j)) & 1) as u8).collect()).collect();
    let mut prior_w = vec![0.0; 1 << n];
    let mut worst: f64 = 0.0;
    let mut b = vec![0usize; n];
    for cfg in 0..o.bin_configs() {
        let w = o.joint_u(cfg, &xs);
        for (a, v) in prior_w.iter_mut().zip(&w) {
            *a += v;
        }
        let m = prefix_marginals(n, &w);
        let mut c = cfg;
        for slot in b.iter_mut() {
            *slot = c % o.bins;
            c /= o.bins;
        }
        let llr: Vec<f64> = (0..n).map(|j| binned.posterior_llr(level, cosets[j], b[j])).collect();
        for (u, bits) in us.iter().enumerate() {
            let sc = sc_probabilities(&llr, bits)?;
            for i in 0..n {
                let p = u >> (n - i);
                let den = m[i][p];
                if den > 1e-300 {
                    worst = worst.max((sc[i] - m[i + 1][2 * p] / den).abs());
                }
            }
        }
    }
    let pm = prefix_marginals(n, &prior_w);
    let llr: Vec<f64> = cosets.iter().map(|&c| channel.prior_llr(level, c)).collect();
    for (u, bits) in us.iter().enumerate() {
        let sc = sc_probabilities(&llr, bits)?;
        for i in 0..n {
            let p = u >> (n - i);
            worst = worst.max((sc[i] - pm[i + 1][2 * p] / pm[i][p]).abs());
        }
    }
    Ok(worst)
}

/// Test channel on the default chain for a source and target distortion.
pub fn design_channel(sigma_s: f64, delta: f64, levels: usize, flatness: f64) -> Result<TestChannel> {
    let p = mmse_params(sigma_s, delta)?;
    let chain = PartitionChain::new(default_eta(p.sigma_tilde, p.sigma_r, levels, flatness), levels, p.sigma_r)?;
    TestChannel::new(p, chain)
}

/// Constructs a quantizer for one design point.
pub fn design_quantizer(channel: &TestChannel, cfg: &ConstructionConfig) -> Result<CodeSpec> {
    construct(channel, cfg)
}

/// A grid of quantizer experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sigma_s: f64,
    pub deltas: Vec<f64>,
    pub ns: Vec<usize>,
    /// Source blocks per point.
    pub blocks: usize,
    pub seed: u64,
    pub levels: usize,
    pub flatness: f64,
    /// Template for every point; its `n` is overridden.
    pub construction: ConstructionConfig,
    pub rule: EncodeRule,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::Domain("blocks per point must be at least 1".into()));
        }
        if let Some(&n) = self.ns.iter().find(|n| **n == 0 || !n.is_power_of_two()) {
            return Err(Error::Size(n));
        }
        Ok(())
    }
}

/// One sweep point with its distance to the bound at the achieved rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub result: ExperimentResult,
    pub rd_bound_db: f64,
    pub gap_db: f64,
}

/// Runs one design point.
pub fn run_point(cfg: &SweepConfig, delta: f64, n: usize) -> Result<SweepPoint> {
    let ch = design_channel(cfg.sigma_s, delta, cfg.levels, cfg.flatness)?;
    let mut cc = cfg.construction.clone();
    cc.n = n;
    let q = Quantizer::new(design_quantizer(&ch, &cc)?)?;
    let blocks = q.run_blocks(cfg.blocks, cfg.seed, cfg.rule)?;
    let result = measure(&blocks, cfg.sigma_s, cfg.seed)?;
    let rd_bound_db = rd_bound_snr(result.rate)?;
    Ok(SweepPoint { delta, gap_db: rd_bound_db - result.snr_db, rd_bound_db, result })
}

/// Runs every `(delta, n)` point in order; each point runs its blocks in parallel.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.deltas.len() * cfg.ns.len());
    for &n in &cfg.ns {
        for &delta in &cfg.deltas {
            out.push(run_point(cfg, delta, n)?);
        }
    }
    Ok(out)
}

/// Reference SNRs at 1, 2, 3 bits: a polar lattice quantizer and trellis-coded quantization.
pub const TABLE_REFERENCE_DB: [(u32, f64, f64); 3] = [(1, 5.59, 5.56), (2, 11.55, 11.04), (3, 17.57, 16.64)];

/// One row of the rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub rate: u32,
    pub polar_snr_db: f64,
    pub polar_rate: f64,
    pub lloyd_max_db: f64,
    pub rd_bound_db: f64,
    pub reference_db: f64,
}

/// Quantizer at design rate `R`: distortion `sigma_s^2 / 4^R`.
pub fn table_rows(sigma_s: f64, polar: &[(u32, ExperimentResult)]) -> Result<Vec<TableRow>> {
    polar
        .iter()
        .map(|(rate, res)| {
            let reference = TABLE_REFERENCE_DB.iter().find(|r| r.0 == *rate).map(|r| r.1).unwrap_or(f64::NAN);
            Ok(TableRow {
                rate: *rate,
                polar_snr_db: res.snr_db,
                polar_rate: res.rate,
                lloyd_max_db: lloyd_max(*rate, sigma_s)?.snr_db,
                rd_bound_db: rd_bound_snr(*rate as f64)?,
                reference_db: reference,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lloyd_one_bit_closed_form() {
        let q = lloyd_max(1, 1.0).unwrap();
        let c = (2.0 / std::f64::consts::PI).sqrt();
        assert!((q.levels[1] - c).abs() < 1e-10 && (q.levels[0] + c).abs() < 1e-10);
        assert!((q.mse - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-12);
        assert!((q.snr_db - 4.40).abs() < 0.005);
    }

    #[test]
    fn lloyd_table_values() {
        for (r, want) in [(2, 9.30), (3, 14.62)] {
            let q = lloyd_max(r, 3.0).unwrap();
            assert!((q.snr_db - want).abs() < 0.005, "rate {r}: {}", q.snr_db);
        }
    }

    #[test]
    fn lloyd_mse_never_increases() {
        for r in 1..=4 {
            let q = lloyd_max(r, 1.0).unwrap();
            assert!(q.history.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }
    }

    #[test]
    fn rd_bound_values() {
        assert_eq!(rd_bound_snr(0.0).unwrap(), 0.0);
        assert!((rd_bound_snr(1.0).unwrap() - 6.0206).abs() < 1e-4);
        assert!((rd_bound_snr(3.0).unwrap() - 18.0618).abs() < 1e-4);
        assert!(rd_bound_snr(-1.0).is_err());
    }

    fn oracle_channel() -> (TestChannel, BinnedChannel) {
        let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
        let b = ch.binned(ch.equiprobable_binning(8).unwrap());
        (ch, b)
    }

    #[test]
    fn single_index_oracle_matches_closed_form() {
        let (ch, b) = oracle_channel();
        let t = small_n_oracle(&ch, &b, 0, &[0], None, 1.0).unwrap();
        let direct: f64 = (0..8).map(|k| 2.0 * (b.joint(0, 0, k) * b.joint(0, 1, k)).sqrt()).sum();
        assert!((t.z_post[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn all_information_means_no_variation() {
        let (ch, b) = oracle_channel();
        let sets = LevelSets { info: vec![0, 1, 2, 3], ..Default::default() };
        let t = small_n_oracle(&ch, &b, 0, &[0; 4], Some(sets), 1.0).unwrap();
        assert!(t.variation < 1e-15);
    }

    #[test]
    fn oracle_agrees_with_sc_and_bound_holds() {
        let (ch, b) = oracle_channel();
        assert!(oracle_sc_agreement(&ch, &b, 0, &[0; 4]).unwrap() < 1e-10);
        assert!(oracle_sc_agreement(&ch, &b, 1, &[0, 1, 1, 0]).unwrap() < 1e-10);
        let t = small_n_oracle(&ch, &b, 1, &[0, 1, 1, 0], None, 0.5).unwrap();
        assert!(t.variation <= t.bound_entropy + 1e-12 && t.bound_entropy <= t.bound + 1e-12);
    }
}
