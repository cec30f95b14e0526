//! Monte-Carlo construction of multilevel index sets.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{BinnedChannel, LevelInformation, TestChannel, QUADRATURE_POINTS};
use crate::error::{Error, Result};
use crate::lattice::PartitionChain;
use crate::polar::sc::{bhattacharyya_of_llr, ScDecoder};
use crate::polar::sets::{partition_with, threshold_count, LevelSets, Thresholds, Variant};
use crate::polar::transform::polar_transform_in_place;
use crate::rng::{stream, Purpose};

/// Trials per work unit; fixed so sums never depend on the number of threads.
const CHUNK: usize = 16;
/// Work units evaluated together before being folded into the running sum.
const WAVE: usize = 8;

/// How one party observes the lattice point `a`.
#[derive(Clone, Copy, Debug)]
pub enum Observation<'a> {
    /// `a + N(0, delta)` with the channel's noise variance.
    Continuous(&'a TestChannel),
    /// The same, but only the bin index is seen.
    Binned(&'a TestChannel, &'a BinnedChannel),
}

impl Observation<'_> {
    fn observe<R: Rng + ?Sized>(&self, value: f64, rng: &mut R) -> f64 {
        match self {
            Observation::Continuous(ch) => {
                let n: f64 = rng.sample(StandardNormal);
                value + ch.params.delta.sqrt() * n
            }
            Observation::Binned(ch, b) => {
                let n: f64 = rng.sample(StandardNormal);
                b.binning.bin_of(value + ch.params.delta.sqrt() * n) as f64
            }
        }
    }

    /// Posterior LLR of `x_level` given the coset and an observation produced by `observe`.
    pub fn llr(&self, level: usize, coset: u32, obs: f64) -> f64 {
        match self {
            Observation::Continuous(ch) => ch.posterior_llr(level, coset, obs),
            Observation::Binned(_, b) => b.posterior_llr(level, coset, obs as usize),
        }
    }
}

/// Per-index Monte-Carlo estimate with its standard error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl ZEstimate {
    fn from_sums(sum: &[f64], sq: &[f64], trials: usize) -> Self {
        let t = trials as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
        let std_err = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                if trials < 2 {
                    0.0
                } else {
                    ((q / t - m * m).max(0.0) * t / (t - 1.0) / t).sqrt()
                }
            })
            .collect();
        Self { mean, std_err }
    }

    fn constant(n: usize, v: f64) -> Self {
        Self { mean: vec![v; n], std_err: vec![0.0; n] }
    }
}

/// Estimates of one level: the prior-only channel and each observation channel.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub prior: ZEstimate,
    pub posterior: Vec<ZEstimate>,
}

/// Whether a level's prior is so concentrated that every synthesized index is already determined.
fn level_is_determined(prior: &TestChannel, level: usize, n: usize) -> Option<f64> {
    let dg = &prior.dg;
    let mut h = 0.0;
    for c in 0..(1u32 << level) {
        let m = dg.coset_mass(level, c);
        if m > 0.0 {
            h += m * crate::channel::h2(dg.coset_mass(level + 1, c) / m);
        }
    }
    // Z^2 <= H per index and the conditional entropies sum to n H.
    let bound = (n as f64 * h).sqrt();
    (bound < 1e-12).then_some(bound)
}

/// Genie-aided Monte-Carlo estimates of `Z(U_l^i | U_l^<i, X_<l [, observation])` for every level.
///
/// Each trial draws a block of lattice points from the shaping
/// distribution, observes it through every observation model, and runs
/// SC on every level with the true bits as decisions.
pub fn estimate_bhattacharyya_all(
    prior: &TestChannel,
    observations: &[Observation],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<LevelEstimate>> {
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Size(n));
    }
    for o in observations {
        let ch = match o {
            Observation::Continuous(c) | Observation::Binned(c, _) => c,
        };
        if ch.chain() != prior.chain() {
            return Err(Error::Precondition("observation channels must share the prior chain".into()));
        }
    }
    match observations.len() {
        0 => estimate_k::<1>(prior, observations, n, trials, seed),
        1 => estimate_k::<2>(prior, observations, n, trials, seed),
        2 => estimate_k::<3>(prior, observations, n, trials, seed),
        3 => estimate_k::<4>(prior, observations, n, trials, seed),
        k => Err(Error::Domain(format!("at most 3 observation channels supported, got {k}"))),
    }
}

struct Sums {
    /// `[level][component]` vectors of per-index sums and sums of squares.
    sum: Vec<Vec<Vec<f64>>>,
    sq: Vec<Vec<Vec<f64>>>,
}

impl Sums {
    fn zeros(levels: usize, k: usize, n: usize) -> Self {
        Self { sum: vec![vec![vec![0.0; n]; k]; levels], sq: vec![vec![vec![0.0; n]; k]; levels] }
    }

    fn add(&mut self, other: &Sums) {
        for (a, b) in self.sum.iter_mut().flatten().zip(other.sum.iter().flatten()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.sq.iter_mut().flatten().zip(other.sq.iter().flatten()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn estimate_k<const K: usize>(
    prior: &TestChannel,
    observations: &[Observation],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<LevelEstimate>> {
    let chain: PartitionChain = *prior.chain();
    let r = chain.r;
    let skip: Vec<Option<f64>> = (0..r).map(|l| level_is_determined(prior, l, n)).collect();
    let chunks = trials.div_ceil(CHUNK);
    let run_chunk = |c: usize| -> Sums {
        let mut sums = Sums::zeros(r, K, n);
        let mut dec = ScDecoder::<K>::new(n).expect("power of two");
        let mut res = vec![0u32; n];
        let mut obs = vec![[0.0f64; K]; n];
        let mut ch = vec![[0.0f64; K]; n];
        let mut u = vec![0u8; n];
        let mut scratch = vec![0u8; n];
        for t in (c * CHUNK)..((c + 1) * CHUNK).min(trials) {
            let mut rng = stream(seed, Purpose::Construction, t as u64);
            for j in 0..n {
                let k = prior.dg.sample(&mut rng);
                res[j] = chain.residue(k);
                let value = k as f64 * chain.eta;
                for (m, o) in observations.iter().enumerate() {
                    obs[j][m + 1] = o.observe(value, &mut rng);
                }
            }
            for level in 0..r {
                if skip[level].is_some() {
                    continue;
                }
                let mask = (1u32 << level) - 1;
                for j in 0..n {
                    let coset = res[j] & mask;
                    ch[j][0] = prior.prior_llr(level, coset);
                    for (m, o) in observations.iter().enumerate() {
                        ch[j][m + 1] = o.llr(level, coset, obs[j][m + 1]);
                    }
                    scratch[j] = ((res[j] >> level) & 1) as u8;
                }
                polar_transform_in_place(&mut scratch).expect("power of two");
                let truth = &scratch;
                let (s, q) = (&mut sums.sum[level], &mut sums.sq[level]);
                dec.run(&ch, &mut u, |i, l| {
                    for k in 0..K {
                        let z = bhattacharyya_of_llr(l[k]);
                        s[k][i] += z;
                        q[k][i] += z * z;
                    }
                    truth[i]
                });
            }
        }
        sums
    };
    let mut total = Sums::zeros(r, K, n);
    let mut start = 0;
    while start < chunks {
        let end = (start + WAVE).min(chunks);
        let parts: Vec<Sums> = (start..end).into_par_iter().map(run_chunk).collect();
        for p in &parts {
            total.add(p);
        }
        start = end;
    }
    Ok((0..r)
        .map(|level| match skip[level] {
            Some(bound) => LevelEstimate {
                prior: ZEstimate::constant(n, bound),
                posterior: vec![ZEstimate::constant(n, bound); K - 1],
            },
            None => {
                let comp = |k: usize| ZEstimate::from_sums(&total.sum[level][k], &total.sq[level][k], trials);
                LevelEstimate { prior: comp(0), posterior: (1..K).map(comp).collect() }
            }
        })
        .collect())
}

/// How information bits are distributed over levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// `ceil(n (I_l + backoff))` per level. Levels whose information is below `|backoff|` get no backoff.
    PerLevel { backoff: f64 },
    /// A fixed total, spread over levels by ranking every index of every level on one score.
    Total { info_bits: usize },
    /// Explicit per-level counts.
    Counts(Vec<usize>),
    /// Every index outside the safe regions of the configured thresholds; the rate follows.
    Thresholds,
    /// Channel codes only: the most reliable indices while their summed posterior estimate stays within `budget`.
    ErrorBudget { budget: f64 },
}

/// Values given to frozen bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrozenChoice {
    Zero,
    Random { seed: u64 },
}

/// Construction parameters for a multilevel code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub allocation: Allocation,
    pub frozen: FrozenChoice,
    /// Construct on an equiprobable binning of the observation instead of the continuous output.
    pub bins: Option<usize>,
    /// Scale used to rank and split quantization indices.
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ConstructionConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            trials: 100_000,
            seed: 1,
            allocation: Allocation::PerLevel { backoff: 0.02 },
            frozen: FrozenChoice::Zero,
            bins: None,
            thresholds: Thresholds::EVEN,
        }
    }
}

/// Seeds recorded with a code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecSeeds {
    pub construction: u64,
    pub frozen: Option<u64>,
}

/// Construction metadata kept with a code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSummary {
    pub trials: usize,
    pub allocation: Allocation,
    pub thresholds: Thresholds,
    pub bins: Option<usize>,
    /// `I(X_l; Y' | X_<l)` by quadrature.
    pub level_information: Vec<f64>,
    /// Union of the posterior estimates over information indices, per level.
    pub info_z_sum: Vec<f64>,
}

/// A multilevel polar code for the lattice quantizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub n: usize,
    pub params: crate::channel::TestChannelParams,
    pub chain: PartitionChain,
    pub levels: Vec<LevelSets>,
    /// Values of the frozen bits of each level, aligned with `levels[l].frozen`.
    pub frozen_bits: Vec<Vec<u8>>,
    pub seeds: SpecSeeds,
    pub construction: ConstructionSummary,
}

impl CodeSpec {
    /// Checks partition, frozen-bit and cross-level nesting invariants.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !self.n.is_power_of_two() {
            return Err(Error::Size(self.n));
        }
        if self.levels.len() != self.chain.r || self.frozen_bits.len() != self.chain.r {
            return Err(Error::Precondition("one set triple and frozen vector per level required".into()));
        }
        for (l, s) in self.levels.iter().enumerate() {
            s.check_partition(self.n)?;
            if self.frozen_bits[l].len() != s.frozen.len() || self.frozen_bits[l].iter().any(|&b| b > 1) {
                return Err(Error::Precondition(format!("frozen bits of level {l} malformed")));
            }
        }
        for l in 1..self.levels.len() {
            if !is_subset(&self.levels[l].frozen, &self.levels[l - 1].frozen) {
                return Err(Error::Precondition(format!("frozen set of level {l} not inside level {}", l - 1)));
            }
        }
        Ok(())
    }

    /// Information bits per block.
    pub fn info_bits(&self) -> usize {
        self.levels.iter().map(|s| s.info.len()).sum()
    }

    /// Rate in bits per source sample.
    pub fn rate(&self) -> f64 {
        self.info_bits() as f64 / self.n as f64
    }

    /// The test channel this code was built for.
    pub fn channel(&self) -> Result<TestChannel> {
        TestChannel::new(self.params, self.chain)
    }
}

/// Whether sorted `a` is contained in sorted `b`.
pub fn is_subset(a: &[u32], b: &[u32]) -> bool {
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
    }
    true
}

/// Per-level target rates from quadrature information and a backoff.
pub fn rate_targets(info: &[LevelInformation], backoff: f64) -> Vec<f64> {
    info.iter()
        .map(|l| {
            let mi = l.mutual_information;
            let t = if mi > backoff.abs() { mi + backoff } else { mi };
            t.clamp(0.0, 1.0)
        })
        .collect()
}

/// Spreads `total` information bits by ranking every index of every level on one score.
pub fn global_counts(estimates: &[LevelEstimate], total: usize, variant: Variant, th: Thresholds) -> Vec<usize> {
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (l, e) in estimates.iter().enumerate() {
        for i in 0..e.prior.mean.len() {
            let zp = e.prior.mean[i];
            let zq = e.posterior[0].mean[i];
            let score = match variant {
                Variant::Quantization => th.score(zp, zq, true),
                Variant::ChannelCoding => -(1.0 - zp).max(zq),
            };
            all.push((score, l, i));
        }
    }
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut counts = vec![0; estimates.len()];
    for &(_, l, _) in all.iter().take(total) {
        counts[l] += 1;
    }
    counts
}

/// Per-level information counts for an allocation rule. `None` lets thresholds decide per level.
pub fn allocate(
    allocation: &Allocation,
    info: &[LevelInformation],
    estimates: &[LevelEstimate],
    n: usize,
    variant: Variant,
    th: Thresholds,
) -> Result<Option<Vec<usize>>> {
    let r = estimates.len();
    match allocation {
        Allocation::PerLevel { backoff } => rate_targets(info, *backoff)
            .iter()
            .enumerate()
            .map(|(l, &t)| {
                crate::polar::sets::info_count(n, t).map_err(|_| Error::InfeasibleRate { level: l, target: t })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Allocation::Total { info_bits } => {
            if *info_bits > n * r {
                return Err(Error::InfeasibleRate { level: 0, target: *info_bits as f64 / n as f64 });
            }
            Ok(Some(global_counts(estimates, *info_bits, variant, th)))
        }
        Allocation::Counts(c) => {
            if c.len() != r {
                return Err(Error::Domain(format!("need {r} level counts, got {}", c.len())));
            }
            if let Some((l, &k)) = c.iter().enumerate().find(|(_, &k)| k > n) {
                return Err(Error::InfeasibleRate { level: l, target: k as f64 / n as f64 });
            }
            Ok(Some(c.clone()))
        }
        Allocation::Thresholds => {
            if !(th.shaping > 0.0 && th.frozen > 0.0) {
                return Err(Error::Domain("thresholds must be positive".into()));
            }
            Ok(None)
        }
        Allocation::ErrorBudget { budget } => {
            if !(*budget >= 0.0) || variant != Variant::ChannelCoding {
                return Err(Error::Domain("an error budget needs a channel code and a nonnegative budget".into()));
            }
            let mut all: Vec<(f64, usize)> = Vec::new();
            for (l, e) in estimates.iter().enumerate() {
                all.extend(e.prior.mean.iter().zip(&e.posterior[0].mean).map(|(&zp, &zq)| ((1.0 - zp).max(zq), l)));
            }
            Ok(Some(budget_counts(all, *budget, r)))
        }
    }
}

/// Counts per level of the lowest-cost items whose running total stays within `budget`.
pub fn budget_counts(mut items: Vec<(f64, usize)>, budget: f64, levels: usize) -> Vec<usize> {
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut counts = vec![0; levels];
    let mut spent = 0.0;
    for (cost, l) in items {
        spent += cost;
        if spent > budget {
            break;
        }
        counts[l] += 1;
    }
    counts
}

/// Partitions every level in order, keeping each frozen set inside the previous level's.
pub fn partition_levels(
    estimates: &[LevelEstimate],
    counts: Option<&[usize]>,
    variant: Variant,
    observation: usize,
    th: Thresholds,
) -> Vec<LevelSets> {
    let mut out: Vec<LevelSets> = Vec::with_capacity(estimates.len());
    for (l, e) in estimates.iter().enumerate() {
        let n = e.prior.mean.len();
        let mask: Option<Vec<bool>> = out.last().map(|prev| {
            let mut m = vec![false; n];
            for &i in &prev.frozen {
                m[i as usize] = true;
            }
            m
        });
        let zq = &e.posterior[observation].mean;
        let k = match counts {
            Some(c) => c[l],
            None => threshold_count(&e.prior.mean, zq, mask.as_deref(), th),
        };
        out.push(partition_with(&e.prior.mean, zq, Some(k), variant, mask.as_deref(), th));
    }
    out
}

/// Frozen-bit values for a set of levels.
pub fn frozen_values(levels: &[LevelSets], choice: FrozenChoice) -> Vec<Vec<u8>> {
    levels
        .iter()
        .enumerate()
        .map(|(l, s)| match choice {
            FrozenChoice::Zero => vec![0; s.frozen.len()],
            FrozenChoice::Random { seed } => {
                let mut rng = stream(seed, Purpose::Frozen, l as u64);
                (0..s.frozen.len()).map(|_| rng.random::<bool>() as u8).collect()
            }
        })
        .collect()
}

/// Builds the quantizer code for a test channel.
pub fn construct(channel: &TestChannel, cfg: &ConstructionConfig) -> Result<CodeSpec> {
    let info = channel.level_information(QUADRATURE_POINTS);
    let binned = match cfg.bins {
        Some(b) => Some(channel.binned(channel.equiprobable_binning(b)?)),
        None => None,
    };
    let obs = match &binned {
        Some(b) => Observation::Binned(channel, b),
        None => Observation::Continuous(channel),
    };
    let estimates = estimate_bhattacharyya_all(channel, &[obs], cfg.n, cfg.trials, cfg.seed)?;
    from_estimates(channel, cfg, &info, &estimates)
}

/// Assembles a quantizer code from precomputed estimates.
pub fn from_estimates(
    channel: &TestChannel,
    cfg: &ConstructionConfig,
    info: &[LevelInformation],
    estimates: &[LevelEstimate],
) -> Result<CodeSpec> {
    let counts = allocate(&cfg.allocation, info, estimates, cfg.n, Variant::Quantization, cfg.thresholds)?;
    let levels = partition_levels(estimates, counts.as_deref(), Variant::Quantization, 0, cfg.thresholds);
    let info_z_sum = levels
        .iter()
        .zip(estimates)
        .map(|(s, e)| s.info.iter().map(|&i| e.posterior[0].mean[i as usize]).sum())
        .collect();
    let spec = CodeSpec {
        n: cfg.n,
        params: channel.params,
        chain: *channel.chain(),
        frozen_bits: frozen_values(&levels, cfg.frozen),
        levels,
        seeds: SpecSeeds {
            construction: cfg.seed,
            frozen: match cfg.frozen {
                FrozenChoice::Zero => None,
                FrozenChoice::Random { seed } => Some(seed),
            },
        },
        construction: ConstructionSummary {
            trials: cfg.trials,
            allocation: cfg.allocation.clone(),
            thresholds: cfg.thresholds,
            bins: cfg.bins,
            level_information: info.iter().map(|l| l.mutual_information).collect(),
            info_z_sum,
        },
    };
    spec.validate()?;
    Ok(spec)
}
