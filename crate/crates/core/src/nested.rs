//! Wyner-Ziv source coding and Gelfand-Pinsker channel coding from a nested
//! pair of polar lattices sharing one discrete Gaussian shaping.
//!
//! Both schemes use a quantization code (sets `F^Q`, `I^Q`, `S^Q`) and a
//! channel code (sets `F^C`, `I^C`, `S^C`) on the same chain. For Wyner-Ziv
//! the quantization channel is the less noisy one, so `I^C ⊆ I^Q` and the
//! encoder sends `I^Q \ I^C`. For Gelfand-Pinsker the roles flip: the
//! channel code is the less noisy one, `F^C ⊆ F^Q`, and the message rides on
//! quantization-frozen indices the channel decoder can resolve.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{TestChannel, TestChannelParams, QUADRATURE_POINTS};
use crate::error::{Error, Result};
use crate::lattice::{default_eta, PartitionChain, DEFAULT_FLATNESS, DEFAULT_LEVELS};
use crate::polar::construct::{budget_counts, frozen_values, is_subset, partition_levels, ConstructionSummary, SpecSeeds};
use crate::polar::sc::{prob_zero, ScDecoder};
use crate::polar::{
    estimate_bhattacharyya_all, Allocation, CodeSpec, FrozenChoice, LevelEstimate, LevelSets, Observation, Role, Thresholds,
    Variant,
};
use crate::quantizer::mse;
use crate::rng::{stream, Purpose};

/// Noise variance `v` with `sigma_a^2 v / (sigma_a^2 + v) = tilde^2`.
fn noise_for_posterior(sigma_a2: f64, tilde2: f64) -> f64 {
    sigma_a2 * tilde2 / (sigma_a2 - tilde2)
}

/// MMSE parameters of the Gaussian Wyner-Ziv problem `X = Y + Z`, side information `Y` at the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WzParams {
    pub sigma_y2: f64,
    pub sigma_z2: f64,
    pub sigma_x2: f64,
    pub delta: f64,
    /// `sigma_z^2 / (sigma_z^2 - delta)`.
    pub eta: f64,
    /// `eta delta`, the distortion of the auxiliary reconstruction.
    pub delta_prime: f64,
    pub alpha_q: f64,
    pub alpha_c: f64,
    pub gamma: f64,
    pub sigma_a2: f64,
    pub sigma_tilde_q2: f64,
    pub sigma_tilde_c2: f64,
    /// `alpha_q delta'`: noise between the lattice point and the source.
    pub noise_q: f64,
    /// `alpha_q delta' + (alpha_q / alpha_c) sigma_z^2`: noise between the lattice point and `b`.
    pub noise_c: f64,
    /// `alpha_q / alpha_c`, applied to the side information.
    pub side_scale: f64,
    /// `1/2 log2(sigma_z^2 / delta)`.
    pub rate_bound: f64,
    pub rate_q: f64,
    pub rate_c: f64,
}

/// Wyner-Ziv parameters for `0 < delta < sigma_z^2`; `delta = sigma_z^2` gives the zero-rate boundary.
pub fn wz_params(sigma_y2: f64, sigma_z2: f64, delta: f64) -> Result<WzParams> {
    if !(sigma_y2 > 0.0 && sigma_z2 > 0.0 && sigma_y2.is_finite() && sigma_z2.is_finite()) {
        return Err(Error::Domain(format!("variances must be positive, got {sigma_y2}, {sigma_z2}")));
    }
    if !(delta > 0.0 && delta <= sigma_z2) {
        return Err(Error::Domain(format!("delta must lie in (0, sigma_z^2 = {sigma_z2}], got {delta}")));
    }
    let sigma_x2 = sigma_y2 + sigma_z2;
    let gap = sigma_z2 - delta;
    let den = sigma_x2 * gap + sigma_z2 * delta;
    let alpha_q = sigma_x2 * gap / den;
    let alpha_c = sigma_y2 * gap / den;
    let eta = sigma_z2 / gap;
    let delta_prime = eta * delta;
    let gamma = sigma_y2 * delta / (sigma_x2 * sigma_z2);
    let sigma_a2 = alpha_q * alpha_q * (sigma_x2 + delta_prime);
    let core = sigma_x2 * sigma_z2 - sigma_y2 * delta;
    let sigma_tilde_q2 = sigma_a2 * sigma_z2 * delta / core;
    let sigma_tilde_c2 = sigma_a2 * sigma_z2 * sigma_z2 / core;
    let side_scale = alpha_q / alpha_c;
    Ok(WzParams {
        sigma_y2,
        sigma_z2,
        sigma_x2,
        delta,
        eta,
        delta_prime,
        alpha_q,
        alpha_c,
        gamma,
        sigma_a2,
        sigma_tilde_q2,
        sigma_tilde_c2,
        noise_q: alpha_q * delta_prime,
        noise_c: alpha_q * delta_prime + side_scale * sigma_z2,
        side_scale,
        rate_bound: 0.5 * (sigma_z2 / delta).log2(),
        rate_q: (0.5 * (core / (sigma_z2 * delta)).log2()).max(0.0),
        rate_c: (0.5 * (core / (sigma_z2 * sigma_z2)).log2()).max(0.0),
    })
}

impl WzParams {
    /// The model `Y = X + N(0, sigma_n^2)` rescaled to `X = a Y + Z'`. Returns the parameters and `a`.
    pub fn from_noisy_observation(sigma_x2: f64, sigma_n2: f64, delta: f64) -> Result<(Self, f64)> {
        if !(sigma_x2 > 0.0 && sigma_n2 > 0.0) {
            return Err(Error::Domain("variances must be positive".into()));
        }
        let a = sigma_x2 / (sigma_x2 + sigma_n2);
        let sigma_z2 = sigma_n2 * sigma_x2 / (sigma_n2 + sigma_x2);
        Ok((wz_params(sigma_x2 - sigma_z2, sigma_z2, delta)?, a))
    }

    /// `(lhs, rhs)` of `alpha_q delta' - delta = gamma^2 (alpha_q delta' + (alpha_q / alpha_c) sigma_z^2)`.
    pub fn scaling_identity(&self) -> (f64, f64) {
        (self.noise_q - self.delta, self.gamma * self.gamma * self.noise_c)
    }

    /// `(lhs, rhs)` of `(delta' + sigma_z^2) / eta^2 = sigma_z^2 - delta`.
    pub fn variance_identity(&self) -> (f64, f64) {
        ((self.delta_prime + self.sigma_z2) / (self.eta * self.eta), self.sigma_z2 - self.delta)
    }
}

/// MMSE parameters of the Gaussian Gelfand-Pinsker problem `Y = X + S + Z`, interference `S` at the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub p: f64,
    pub sigma_z2: f64,
    pub sigma_i2: f64,
    pub sigma_y2: f64,
    pub rho: f64,
    pub sigma_sprime2: f64,
    pub alpha_c: f64,
    pub alpha_q: f64,
    pub sigma_a2: f64,
    pub sigma_tilde_c2: f64,
    pub sigma_tilde_q2: f64,
    /// Noise between the lattice point and `t = rho s`.
    pub noise_q: f64,
    /// Noise between the lattice point and `b`.
    pub noise_c: f64,
    /// `(alpha_q / alpha_c) rho`, applied to the received signal.
    pub receive_scale: f64,
    /// `1/2 log2(1 + P / sigma_z^2)`.
    pub capacity: f64,
    pub rate_c: f64,
    pub rate_q: f64,
}

/// Gelfand-Pinsker parameters for positive power and variances.
pub fn gp_params(p: f64, sigma_z2: f64, sigma_i2: f64) -> Result<GpParams> {
    if !(p > 0.0 && sigma_z2 > 0.0 && sigma_i2 > 0.0 && p.is_finite() && sigma_z2.is_finite() && sigma_i2.is_finite()) {
        return Err(Error::Domain(format!("P, sigma_z^2, sigma_i^2 must be positive, got {p}, {sigma_z2}, {sigma_i2}")));
    }
    let rho = p / (p + sigma_z2);
    let sigma_sprime2 = rho * rho * sigma_i2 + p;
    let sigma_y2 = sigma_i2 + p + sigma_z2;
    let den = p * sigma_i2 + (p + sigma_z2).powi(2);
    let alpha_c = p * sigma_y2 / den;
    let alpha_q = p * sigma_i2 / den;
    let sigma_a2 = alpha_q * alpha_q * sigma_sprime2;
    let sigma_tilde_c2 = alpha_q * alpha_q * alpha_c / rho * sigma_z2 * sigma_sprime2 / sigma_y2;
    let sigma_tilde_q2 = alpha_q.powi(3) / (rho * rho) * p * sigma_sprime2 / sigma_i2;
    Ok(GpParams {
        p,
        sigma_z2,
        sigma_i2,
        sigma_y2,
        rho,
        sigma_sprime2,
        alpha_c,
        alpha_q,
        sigma_a2,
        sigma_tilde_c2,
        sigma_tilde_q2,
        noise_q: noise_for_posterior(sigma_a2, sigma_tilde_q2),
        noise_c: noise_for_posterior(sigma_a2, sigma_tilde_c2),
        receive_scale: alpha_q / alpha_c * rho,
        capacity: 0.5 * (1.0 + p / sigma_z2).log2(),
        rate_c: 0.5 * (den / (sigma_z2 * (p + sigma_z2))).log2(),
        rate_q: 0.5 * (den / (p + sigma_z2).powi(2)).log2(),
    })
}

impl GpParams {
    /// `(lhs, rhs)` of `alpha_c - alpha_q = (1 - alpha_q) rho`.
    pub fn scaling_identity(&self) -> (f64, f64) {
        (self.alpha_c - self.alpha_q, (1.0 - self.alpha_q) * self.rho)
    }

    /// `(lhs, rhs)` of `((1 - alpha_q) / alpha_q)^2 sigma_a^2 = (1 - alpha_q) P`.
    pub fn power_identity(&self) -> (f64, f64) {
        let k = (1.0 - self.alpha_q) / self.alpha_q;
        (k * k * self.sigma_a2, (1.0 - self.alpha_q) * self.p)
    }
}

/// Which problem a nested code solves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    WynerZiv(WzParams),
    GelfandPinsker(GpParams),
}

impl Scheme {
    fn sigma_a2(&self) -> f64 {
        match self {
            Scheme::WynerZiv(p) => p.sigma_a2,
            Scheme::GelfandPinsker(p) => p.sigma_a2,
        }
    }

    /// `(noise_q, noise_c)` of the two test channels.
    fn noises(&self) -> (f64, f64) {
        match self {
            Scheme::WynerZiv(p) => (p.noise_q, p.noise_c),
            Scheme::GelfandPinsker(p) => (p.noise_q, p.noise_c),
        }
    }
}

/// How the channel-code sets are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRule {
    /// Information candidates need `z_prior >= 1 - prior`; 1 admits every index.
    pub prior: f64,
    /// Largest summed posterior estimate over the information set.
    pub budget: f64,
    /// Non-information indices with `z_post >= 1 - frozen` are frozen.
    pub frozen: f64,
}

/// Construction parameters for a nested pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub levels: usize,
    pub flatness: f64,
    pub quantization: Thresholds,
    pub channel: ChannelRule,
    pub frozen: FrozenChoice,
}

impl NestedConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            trials: 2000,
            seed: 1,
            levels: DEFAULT_LEVELS,
            flatness: DEFAULT_FLATNESS,
            quantization: Thresholds { shaping: 1e-3, frozen: 0.1 },
            channel: ChannelRule { prior: 1.0, budget: 1e-3, frozen: 0.1 },
            frozen: FrozenChoice::Random { seed: 1 },
        }
    }

    /// Settings tuned for Wyner-Ziv at `N = 4096`: a near-certain shaping cut and a loose error budget.
    pub fn wyner_ziv(n: usize) -> Self {
        Self {
            trials: 8000,
            quantization: Thresholds { shaping: 1e-8, frozen: 0.4 },
            channel: ChannelRule { budget: 1e-2, ..Self::new(n).channel },
            ..Self::new(n)
        }
    }

    /// Settings tuned for Gelfand-Pinsker at `N = 4096`; pair with a design power slightly below the limit.
    pub fn gelfand_pinsker(n: usize) -> Self {
        Self {
            trials: 4000,
            quantization: Thresholds { shaping: 1e-6, frozen: 0.3 },
            channel: ChannelRule { budget: 1e-2, ..Self::new(n).channel },
            ..Self::new(n)
        }
    }
}

/// Design power used with [`NestedConfig::gelfand_pinsker`], as a fraction of the limit.
pub const GP_POWER_BACKOFF: f64 = 0.94;

/// A nested pair with its set differences, sorted ascending per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedSpec {
    pub scheme: Scheme,
    pub spec_q: CodeSpec,
    pub spec_c: CodeSpec,
    /// Symmetric difference of the frozen sets.
    pub d_frozen: Vec<Vec<u32>>,
    /// Symmetric difference of the shaping sets.
    pub d_shaping: Vec<Vec<u32>>,
    /// Symmetric difference of the information sets: bits the encoder sends (Wyner-Ziv) or the helper channel carries (Gelfand-Pinsker).
    pub d_info: Vec<Vec<u32>>,
    /// Gelfand-Pinsker message positions, `F^Q ∩ I^C`; empty for Wyner-Ziv.
    pub message: Vec<Vec<u32>>,
}

/// Per-level sizes of the set differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestingReport {
    pub n: usize,
    pub info_q: Vec<usize>,
    pub info_c: Vec<usize>,
    pub d_frozen: Vec<usize>,
    pub d_shaping: Vec<usize>,
    pub d_info: Vec<usize>,
    pub message: Vec<usize>,
}

fn diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    a.iter().filter(|x| b.binary_search(x).is_err()).copied().collect()
}

impl NestedSpec {
    pub fn n(&self) -> usize {
        self.spec_q.n
    }

    /// Checks every set relation the scheme relies on.
    pub fn check_nesting(&self) -> Result<()> {
        self.spec_q.validate()?;
        self.spec_c.validate()?;
        let fail = |what: &str, l: usize| Err(Error::Precondition(format!("{what} violated at level {l}")));
        for (l, (q, c)) in self.spec_q.levels.iter().zip(&self.spec_c.levels).enumerate() {
            if !is_subset(&q.shaping, &c.shaping) {
                return fail("S^Q ⊆ S^C", l);
            }
            match self.scheme {
                Scheme::WynerZiv(_) => {
                    if !is_subset(&q.frozen, &c.frozen) {
                        return fail("F^Q ⊆ F^C", l);
                    }
                    if !is_subset(&c.info, &q.info) {
                        return fail("I^C ⊆ I^Q", l);
                    }
                    let mut both: Vec<u32> = self.d_frozen[l].iter().chain(&self.d_shaping[l]).copied().collect();
                    both.sort_unstable();
                    if both != self.d_info[l] {
                        return fail("dI = dF ∪ dS", l);
                    }
                }
                Scheme::GelfandPinsker(_) => {
                    if !is_subset(&c.frozen, &q.frozen) {
                        return fail("F^C ⊆ F^Q", l);
                    }
                    if !is_subset(&self.message[l], &c.info) || !is_subset(&self.message[l], &q.frozen) {
                        return fail("message ⊆ F^Q ∩ I^C", l);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn report(&self) -> NestingReport {
        let sizes = |v: &[Vec<u32>]| v.iter().map(Vec::len).collect();
        NestingReport {
            n: self.n(),
            info_q: self.spec_q.levels.iter().map(|s| s.info.len()).collect(),
            info_c: self.spec_c.levels.iter().map(|s| s.info.len()).collect(),
            d_frozen: sizes(&self.d_frozen),
            d_shaping: sizes(&self.d_shaping),
            d_info: sizes(&self.d_info),
            message: sizes(&self.message),
        }
    }

    /// Wyner-Ziv bits sent per block, or Gelfand-Pinsker message bits per block.
    pub fn payload_bits(&self) -> usize {
        match self.scheme {
            Scheme::WynerZiv(_) => self.d_info.iter().map(Vec::len).sum(),
            Scheme::GelfandPinsker(_) => self.message.iter().map(Vec::len).sum(),
        }
    }

    /// Shared test channels `(quantization, channel)`.
    pub fn channels(&self) -> Result<(TestChannel, TestChannel)> {
        Ok((self.spec_q.channel()?, self.spec_c.channel()?))
    }
}

fn spec_from(
    n: usize,
    channel: &TestChannel,
    levels: Vec<LevelSets>,
    frozen_bits: Vec<Vec<u8>>,
    cfg: &NestedConfig,
    allocation: Allocation,
    observation: usize,
    estimates: &[LevelEstimate],
) -> CodeSpec {
    let info_z_sum = levels
        .iter()
        .zip(estimates)
        .map(|(s, e)| s.info.iter().map(|&i| e.posterior[observation].mean[i as usize]).sum())
        .collect();
    CodeSpec {
        n,
        params: channel.params,
        chain: *channel.chain(),
        levels,
        frozen_bits,
        seeds: SpecSeeds {
            construction: cfg.seed,
            frozen: match cfg.frozen {
                FrozenChoice::Zero => None,
                FrozenChoice::Random { seed } => Some(seed),
            },
        },
        construction: ConstructionSummary {
            trials: cfg.trials,
            allocation,
            thresholds: cfg.quantization,
            bins: None,
            level_information: channel.level_information(QUADRATURE_POINTS).iter().map(|l| l.mutual_information).collect(),
            info_z_sum,
        },
    }
}

/// Test channels of both codes on the shared chain, `(quantization, channel)`.
pub fn nested_channels(scheme: &Scheme, cfg: &NestedConfig) -> Result<(TestChannel, TestChannel)> {
    if let Scheme::WynerZiv(p) = scheme {
        if p.delta >= p.sigma_z2 {
            return Err(Error::Domain("zero-rate Wyner-Ziv target needs no code".into()));
        }
    }
    let sigma_a = scheme.sigma_a2().sqrt();
    let (noise_q, noise_c) = scheme.noises();
    let pq = TestChannelParams::from_prior(sigma_a, noise_q)?;
    let pc = TestChannelParams::from_prior(sigma_a, noise_c)?;
    let tilde = pq.sigma_tilde.min(pc.sigma_tilde);
    let chain = PartitionChain::new(default_eta(tilde, sigma_a, cfg.levels, cfg.flatness), cfg.levels, sigma_a)?;
    Ok((TestChannel::new(pq, chain)?, TestChannel::new(pc, chain)?))
}

/// Genie estimates with the prior, the quantization observation and the channel observation.
pub fn nested_estimates(ch_q: &TestChannel, ch_c: &TestChannel, cfg: &NestedConfig) -> Result<Vec<LevelEstimate>> {
    estimate_bhattacharyya_all(
        ch_q,
        &[Observation::Continuous(ch_q), Observation::Continuous(ch_c)],
        cfg.n,
        cfg.trials,
        cfg.seed,
    )
}

/// Builds both codes on one chain and derives the set differences.
pub fn build_nested(scheme: Scheme, cfg: &NestedConfig) -> Result<NestedSpec> {
    let (ch_q, ch_c) = nested_channels(&scheme, cfg)?;
    let estimates = nested_estimates(&ch_q, &ch_c, cfg)?;
    nested_from_estimates(scheme, cfg, &ch_q, &ch_c, &estimates)
}

/// Assembles a nested pair from precomputed estimates.
pub fn nested_from_estimates(
    scheme: Scheme,
    cfg: &NestedConfig,
    ch_q: &TestChannel,
    ch_c: &TestChannel,
    estimates: &[LevelEstimate],
) -> Result<NestedSpec> {
    let n = cfg.n;
    if estimates.len() != cfg.levels || estimates.iter().any(|e| e.prior.mean.len() != n || e.posterior.len() != 2) {
        return Err(Error::Precondition("estimates do not match the nested configuration".into()));
    }
    let q_levels = partition_levels(estimates, None, Variant::Quantization, 0, cfg.quantization);
    let q_frozen = frozen_values(&q_levels, cfg.frozen);
    let rule = cfg.channel;
    let gp = matches!(scheme, Scheme::GelfandPinsker(_));

    // Information candidates of the channel code, ranked globally by the channel estimate.
    let q_roles: Vec<Vec<Role>> = q_levels.iter().map(|s| s.roles()).collect();
    let mut items: Vec<(f64, usize)> = Vec::new();
    let mut cand: Vec<Vec<(f64, u32)>> = vec![Vec::new(); cfg.levels];
    for (l, e) in estimates.iter().enumerate() {
        for i in 0..n {
            let zp = e.prior.mean[i];
            let zc = e.posterior[1].mean[i];
            let allowed = if gp { q_roles[l][i] != Role::Shaping } else { q_roles[l][i] == Role::Info };
            if allowed && zp >= 1.0 - rule.prior {
                items.push((zc, l));
                cand[l].push((zc, i as u32));
            }
        }
    }
    let counts = budget_counts(items, rule.budget, cfg.levels);
    let mut c_levels: Vec<LevelSets> = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let mut ranked = cand[l].clone();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut roles = vec![Role::Shaping; n];
        for &(_, i) in ranked.iter().take(counts[l]) {
            roles[i as usize] = Role::Info;
        }
        let prev_frozen = |i: usize| l == 0 || c_levels[l - 1].frozen.binary_search(&(i as u32)).is_ok();
        for i in 0..n {
            if roles[i] == Role::Info || q_roles[l][i] == Role::Shaping || !prev_frozen(i) {
                continue;
            }
            let q_frozen_here = q_roles[l][i] == Role::Frozen;
            let reliable_frozen = estimates[l].posterior[1].mean[i] >= 1.0 - rule.frozen;
            roles[i] = match (gp, q_frozen_here, reliable_frozen) {
                (false, true, _) => Role::Frozen,
                (false, false, true) => Role::Frozen,
                (true, true, true) => Role::Frozen,
                _ => Role::Shaping,
            };
        }
        c_levels.push(LevelSets::from_roles(&roles));
    }
    // Channel frozen values agree with the quantizer's wherever both freeze.
    let c_frozen: Vec<Vec<u8>> = c_levels
        .iter()
        .zip(q_levels.iter().zip(&q_frozen))
        .map(|(c, (q, qv))| {
            c.frozen.iter().map(|i| q.frozen.binary_search(i).map(|k| qv[k]).unwrap_or(0)).collect()
        })
        .collect();

    let mut d_frozen = Vec::new();
    let mut d_shaping = Vec::new();
    let mut d_info = Vec::new();
    let mut message = Vec::new();
    for (q, c) in q_levels.iter().zip(&c_levels) {
        if gp {
            d_frozen.push(diff(&q.frozen, &c.frozen));
            message.push(q.frozen.iter().filter(|i| c.info.binary_search(i).is_ok()).copied().collect());
        } else {
            d_frozen.push(diff(&c.frozen, &q.frozen));
            message.push(Vec::new());
        }
        d_shaping.push(diff(&c.shaping, &q.shaping));
        d_info.push(diff(&q.info, &c.info));
    }
    let budget = Allocation::ErrorBudget { budget: rule.budget };
    let spec_q = spec_from(n, ch_q, q_levels, q_frozen, cfg, Allocation::Thresholds, 0, estimates);
    let spec_c = spec_from(n, ch_c, c_levels, c_frozen, cfg, budget, 1, estimates);
    let nested = NestedSpec { scheme, spec_q, spec_c, d_frozen, d_shaping, d_info, message };
    nested.check_nesting()?;
    Ok(nested)
}

/// How the decoder fills one index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Decision {
    Known(u8),
    Prior,
    Observed,
}

fn full_frozen(spec: &CodeSpec) -> Vec<Vec<u8>> {
    spec.levels
        .iter()
        .zip(&spec.frozen_bits)
        .map(|(s, bits)| {
            let mut v = vec![0u8; spec.n];
            for (&i, &b) in s.frozen.iter().zip(bits) {
                v[i as usize] = b;
            }
            v
        })
        .collect()
}

/// Multilevel random-rounding encoder: `fixed` supplies values on frozen indices.
fn encode_levels<R: Rng + ?Sized>(
    ch: &TestChannel,
    roles: &[Vec<Role>],
    fixed: &[Vec<u8>],
    obs: &[f64],
    rng: &mut R,
) -> Result<(Vec<Vec<u8>>, Vec<u32>)> {
    let n = obs.len();
    let mut dec = ScDecoder::<2>::new(n)?;
    let mut res = vec![0u32; n];
    let mut us = Vec::with_capacity(roles.len());
    for (level, (roles, fixed)) in roles.iter().zip(fixed).enumerate() {
        let mask = (1u32 << level) - 1;
        let llr: Vec<[f64; 2]> = (0..n)
            .map(|j| {
                let c = res[j] & mask;
                [ch.prior_llr(level, c), ch.posterior_llr(level, c, obs[j])]
            })
            .collect();
        let mut u = vec![0u8; n];
        let x = dec.run(&llr, &mut u, |i, l| match roles[i] {
            Role::Info => (rng.random::<f64>() >= prob_zero(l[1])) as u8,
            Role::Frozen => fixed[i],
            Role::Shaping => (l[0] < 0.0) as u8,
        });
        for (r, &b) in res.iter_mut().zip(x) {
            *r |= (b as u32) << level;
        }
        us.push(u);
    }
    Ok((us, res))
}

/// Multilevel SC decoder over the channel-code observation.
fn decode_levels(ch: &TestChannel, plan: &[Vec<Decision>], obs: &[f64]) -> Result<(Vec<Vec<u8>>, Vec<u32>)> {
    let n = obs.len();
    let mut dec = ScDecoder::<2>::new(n)?;
    let mut res = vec![0u32; n];
    let mut us = Vec::with_capacity(plan.len());
    for (level, plan) in plan.iter().enumerate() {
        let mask = (1u32 << level) - 1;
        let llr: Vec<[f64; 2]> = (0..n)
            .map(|j| {
                let c = res[j] & mask;
                [ch.prior_llr(level, c), ch.posterior_llr(level, c, obs[j])]
            })
            .collect();
        let mut u = vec![0u8; n];
        let x = dec.run(&llr, &mut u, |i, l| match plan[i] {
            Decision::Known(b) => b,
            Decision::Prior => (l[0] < 0.0) as u8,
            Decision::Observed => (l[1] < 0.0) as u8,
        });
        for (r, &b) in res.iter_mut().zip(x) {
            *r |= (b as u32) << level;
        }
        us.push(u);
    }
    Ok((us, res))
}

fn normal_block(sigma: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn values(chain: &PartitionChain, res: &[u32]) -> Vec<f64> {
    res.iter().map(|&r| chain.value(r)).collect()
}

/// Bits a Wyner-Ziv encoder sends for one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WzMessage {
    /// `u_l` on `I^Q \ I^C`, per level, in ascending index order.
    pub bits: Vec<Vec<u8>>,
}

impl WzMessage {
    pub fn len(&self) -> usize {
        self.bits.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn wz(nested: &NestedSpec) -> Result<WzParams> {
    match nested.scheme {
        Scheme::WynerZiv(p) => Ok(p),
        _ => Err(Error::Precondition("nested code was built for Gelfand-Pinsker".into())),
    }
}

fn gp(nested: &NestedSpec) -> Result<GpParams> {
    match nested.scheme {
        Scheme::GelfandPinsker(p) => Ok(p),
        _ => Err(Error::Precondition("nested code was built for Wyner-Ziv".into())),
    }
}

/// Quantizes `x` with the quantization code. Returns the message and every level's `u`.
pub fn wz_encode_full<R: Rng + ?Sized>(nested: &NestedSpec, x: &[f64], rng: &mut R) -> Result<(WzMessage, Vec<Vec<u8>>)> {
    wz(nested)?;
    if x.len() != nested.n() {
        return Err(Error::Domain(format!("block has {} samples, code length is {}", x.len(), nested.n())));
    }
    let ch = nested.spec_q.channel()?;
    let roles: Vec<Vec<Role>> = nested.spec_q.levels.iter().map(|s| s.roles()).collect();
    let (us, _) = encode_levels(&ch, &roles, &full_frozen(&nested.spec_q), x, rng)?;
    let bits = nested.d_info.iter().zip(&us).map(|(d, u)| d.iter().map(|&i| u[i as usize]).collect()).collect();
    Ok((WzMessage { bits }, us))
}

/// Quantizes `x` and returns the bits on `I^Q \ I^C`.
pub fn wz_encode<R: Rng + ?Sized>(nested: &NestedSpec, x: &[f64], rng: &mut R) -> Result<WzMessage> {
    Ok(wz_encode_full(nested, x, rng)?.0)
}

/// Decodes with side information `y`. Returns the reconstruction and every level's `u`.
pub fn wz_decode_full(nested: &NestedSpec, msg: &WzMessage, y: &[f64]) -> Result<(Vec<f64>, Vec<Vec<u8>>)> {
    let p = wz(nested)?;
    let n = nested.n();
    if y.len() != n {
        return Err(Error::Domain(format!("side information has {} samples, code length is {n}", y.len())));
    }
    if msg.bits.len() != nested.d_info.len() || msg.bits.iter().zip(&nested.d_info).any(|(b, d)| b.len() != d.len()) {
        return Err(Error::Bitstream("message does not match the nested code".into()));
    }
    let frozen = full_frozen(&nested.spec_q);
    let plan: Vec<Vec<Decision>> = (0..nested.spec_q.levels.len())
        .map(|l| {
            let mut plan = vec![Decision::Observed; n];
            for (i, role) in nested.spec_q.levels[l].roles().into_iter().enumerate() {
                plan[i] = match role {
                    Role::Frozen => Decision::Known(frozen[l][i]),
                    Role::Shaping => Decision::Prior,
                    Role::Info => Decision::Observed,
                };
            }
            for (&i, &b) in nested.d_info[l].iter().zip(&msg.bits[l]) {
                plan[i as usize] = Decision::Known(b);
            }
            plan
        })
        .collect();
    let b: Vec<f64> = y.iter().map(|v| p.side_scale * v).collect();
    let ch_c = nested.spec_c.channel()?;
    let (us, res) = decode_levels(&ch_c, &plan, &b)?;
    let a = values(&nested.spec_c.chain, &res);
    let xr = a.iter().zip(&b).map(|(a, b)| a + p.gamma * (b - a)).collect();
    Ok((xr, us))
}

/// Decodes with side information `y` into `a + gamma (b - a)`.
pub fn wz_decode(nested: &NestedSpec, msg: &WzMessage, y: &[f64]) -> Result<Vec<f64>> {
    Ok(wz_decode_full(nested, msg, y)?.0)
}

/// One simulated Wyner-Ziv block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WzBlock {
    pub sent_bits: usize,
    pub distortion: f64,
    /// Whether the decoder's `u` differs from the encoder's anywhere.
    pub decode_error: bool,
}

/// Aggregate of a Wyner-Ziv simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WzReport {
    pub n: usize,
    pub blocks: usize,
    pub seed: u64,
    pub rate: f64,
    pub rate_bound: f64,
    pub distortion: f64,
    pub distortion_std_err: f64,
    /// Mean distortion over blocks that decoded without error.
    pub distortion_clean: f64,
    pub target: f64,
    pub block_errors: usize,
    pub block_error_rate: f64,
    pub nesting: NestingReport,
}

/// Draws `(x, y)` with `x = y + z` for one block.
pub fn wz_source(p: &WzParams, n: usize, seed: u64, block: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, Purpose::Source, block);
    let y = normal_block(p.sigma_y2.sqrt(), n, &mut rng);
    let z = normal_block(p.sigma_z2.sqrt(), n, &mut rng);
    let x = y.iter().zip(&z).map(|(a, b)| a + b).collect();
    (x, y)
}

/// Encodes and decodes one Wyner-Ziv block.
pub fn wz_block(nested: &NestedSpec, seed: u64, block: u64) -> Result<WzBlock> {
    let p = wz(nested)?;
    let (x, y) = wz_source(&p, nested.n(), seed, block);
    let mut rng = stream(seed, Purpose::Encode, block);
    let (msg, u_enc) = wz_encode_full(nested, &x, &mut rng)?;
    let (xr, u_dec) = wz_decode_full(nested, &msg, &y)?;
    Ok(WzBlock { sent_bits: msg.len(), distortion: mse(&x, &xr), decode_error: u_enc != u_dec })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

/// Simulates `blocks` Wyner-Ziv blocks in parallel.
pub fn simulate_wz(nested: &NestedSpec, blocks: usize, seed: u64) -> Result<WzReport> {
    let p = wz(nested)?;
    if blocks == 0 {
        return Err(Error::Domain("need at least one block".into()));
    }
    let runs: Vec<WzBlock> = (0..blocks as u64).into_par_iter().map(|b| wz_block(nested, seed, b)).collect::<Result<_>>()?;
    let d: Vec<f64> = runs.iter().map(|r| r.distortion).collect();
    let (distortion, distortion_std_err) = mean_se(&d);
    let clean: Vec<f64> = runs.iter().filter(|r| !r.decode_error).map(|r| r.distortion).collect();
    let errors = runs.len() - clean.len();
    let n = nested.n();
    Ok(WzReport {
        n,
        blocks,
        seed,
        rate: nested.payload_bits() as f64 / n as f64,
        rate_bound: p.rate_bound,
        distortion,
        distortion_std_err,
        distortion_clean: if clean.is_empty() { f64::NAN } else { mean_se(&clean).0 },
        target: p.delta,
        block_errors: errors,
        block_error_rate: errors as f64 / blocks as f64,
        nesting: nested.report(),
    })
}

/// Output of a Gelfand-Pinsker encoder for one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpTransmission {
    pub x: Vec<f64>,
    /// `u_l` on the helper-channel indices, per level, in ascending index order.
    pub helper_bits: Vec<Vec<u8>>,
    /// Every level's `u`.
    pub u: Vec<Vec<u8>>,
}

/// Embeds `message` (length `payload_bits`) into the quantization of `rho s` and returns the transmit signal.
pub fn gp_encode<R: Rng + ?Sized>(nested: &NestedSpec, s: &[f64], message: &[u8], rng: &mut R) -> Result<GpTransmission> {
    let p = gp(nested)?;
    let n = nested.n();
    if s.len() != n {
        return Err(Error::Domain(format!("interference has {} samples, code length is {n}", s.len())));
    }
    if message.len() != nested.payload_bits() {
        return Err(Error::Domain(format!("message has {} bits, code carries {}", message.len(), nested.payload_bits())));
    }
    let mut fixed = full_frozen(&nested.spec_q);
    let mut k = 0;
    for (l, m) in nested.message.iter().enumerate() {
        for &i in m {
            fixed[l][i as usize] = message[k] & 1;
            k += 1;
        }
    }
    let t: Vec<f64> = s.iter().map(|v| p.rho * v).collect();
    let ch = nested.spec_q.channel()?;
    let roles: Vec<Vec<Role>> = nested.spec_q.levels.iter().map(|s| s.roles()).collect();
    let (u, res) = encode_levels(&ch, &roles, &fixed, &t, rng)?;
    let a = values(&nested.spec_q.chain, &res);
    let x = a.iter().zip(s).map(|(a, s)| a / p.alpha_q - p.rho * s).collect();
    let helper_bits = nested.d_info.iter().zip(&u).map(|(d, u)| d.iter().map(|&i| u[i as usize]).collect()).collect();
    Ok(GpTransmission { x, helper_bits, u })
}

/// Recovers the message from `y`. Without helper bits, those indices are decided from the observation.
pub fn gp_decode_full(nested: &NestedSpec, y: &[f64], helper_bits: Option<&[Vec<u8>]>) -> Result<(Vec<u8>, Vec<Vec<u8>>)> {
    let p = gp(nested)?;
    let n = nested.n();
    if y.len() != n {
        return Err(Error::Domain(format!("received block has {} samples, code length is {n}", y.len())));
    }
    if let Some(h) = helper_bits {
        if h.len() != nested.d_info.len() || h.iter().zip(&nested.d_info).any(|(b, d)| b.len() != d.len()) {
            return Err(Error::Bitstream("helper bits do not match the nested code".into()));
        }
    }
    let frozen = full_frozen(&nested.spec_q);
    let plan: Vec<Vec<Decision>> = (0..nested.spec_q.levels.len())
        .map(|l| {
            let mut plan = vec![Decision::Observed; n];
            for (i, role) in nested.spec_q.levels[l].roles().into_iter().enumerate() {
                plan[i] = match role {
                    Role::Frozen => Decision::Known(frozen[l][i]),
                    Role::Shaping => Decision::Prior,
                    Role::Info => Decision::Observed,
                };
            }
            for &i in &nested.message[l] {
                plan[i as usize] = Decision::Observed;
            }
            if let Some(h) = helper_bits {
                for (&i, &b) in nested.d_info[l].iter().zip(&h[l]) {
                    plan[i as usize] = Decision::Known(b);
                }
            }
            plan
        })
        .collect();
    let b: Vec<f64> = y.iter().map(|v| p.receive_scale * v).collect();
    let ch_c = nested.spec_c.channel()?;
    let (us, _) = decode_levels(&ch_c, &plan, &b)?;
    let message = nested.message.iter().zip(&us).flat_map(|(m, u)| m.iter().map(move |&i| u[i as usize])).collect();
    Ok((message, us))
}

/// Recovers the message from `y` with the helper bits.
pub fn gp_decode(nested: &NestedSpec, y: &[f64], helper_bits: &[Vec<u8>]) -> Result<Vec<u8>> {
    Ok(gp_decode_full(nested, y, Some(helper_bits))?.0)
}

/// One simulated Gelfand-Pinsker block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpBlock {
    pub power: f64,
    pub message_error: bool,
    /// Message error when the helper bits are withheld.
    pub message_error_unaided: bool,
}

/// Aggregate of a Gelfand-Pinsker simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpReport {
    pub n: usize,
    pub blocks: usize,
    pub seed: u64,
    pub message_rate: f64,
    pub capacity: f64,
    /// Helper-channel bits per sample.
    pub helper_rate: f64,
    pub power: f64,
    pub power_std_err: f64,
    pub power_limit: f64,
    pub block_errors: usize,
    pub block_error_rate: f64,
    pub unaided_errors: usize,
    pub unaided_error_rate: f64,
    pub nesting: NestingReport,
}

/// Draws `(s, z, message)` for one block.
pub fn gp_inputs(nested: &NestedSpec, p: &GpParams, seed: u64, block: u64) -> (Vec<f64>, Vec<f64>, Vec<u8>) {
    let n = nested.n();
    let s = normal_block(p.sigma_i2.sqrt(), n, &mut stream(seed, Purpose::Source, block));
    let z = normal_block(p.sigma_z2.sqrt(), n, &mut stream(seed, Purpose::Channel, block));
    let mut rng = stream(seed, Purpose::Message, block);
    let m = (0..nested.payload_bits()).map(|_| rng.random::<bool>() as u8).collect();
    (s, z, m)
}

/// Transmits and decodes one Gelfand-Pinsker block.
pub fn gp_block(nested: &NestedSpec, seed: u64, block: u64) -> Result<GpBlock> {
    let p = gp(nested)?;
    let (s, z, m) = gp_inputs(nested, &p, seed, block);
    let mut rng = stream(seed, Purpose::Encode, block);
    let tx = gp_encode(nested, &s, &m, &mut rng)?;
    let y: Vec<f64> = tx.x.iter().zip(&s).zip(&z).map(|((x, s), z)| x + s + z).collect();
    let aided = gp_decode(nested, &y, &tx.helper_bits)?;
    let unaided = gp_decode_full(nested, &y, None)?.0;
    Ok(GpBlock {
        power: tx.x.iter().map(|v| v * v).sum::<f64>() / nested.n() as f64,
        message_error: aided != m,
        message_error_unaided: unaided != m,
    })
}

/// Simulates `blocks` Gelfand-Pinsker blocks in parallel.
pub fn simulate_gp(nested: &NestedSpec, blocks: usize, seed: u64) -> Result<GpReport> {
    let p = gp(nested)?;
    if blocks == 0 {
        return Err(Error::Domain("need at least one block".into()));
    }
    let runs: Vec<GpBlock> = (0..blocks as u64).into_par_iter().map(|b| gp_block(nested, seed, b)).collect::<Result<_>>()?;
    let pw: Vec<f64> = runs.iter().map(|r| r.power).collect();
    let (power, power_std_err) = mean_se(&pw);
    let errors = runs.iter().filter(|r| r.message_error).count();
    let unaided = runs.iter().filter(|r| r.message_error_unaided).count();
    let n = nested.n();
    Ok(GpReport {
        n,
        blocks,
        seed,
        message_rate: nested.payload_bits() as f64 / n as f64,
        capacity: p.capacity,
        helper_rate: nested.d_info.iter().map(Vec::len).sum::<usize>() as f64 / n as f64,
        power,
        power_std_err,
        power_limit: p.p,
        block_errors: errors,
        block_error_rate: errors as f64 / blocks as f64,
        unaided_errors: unaided,
        unaided_error_rate: unaided as f64 / blocks as f64,
        nesting: nested.report(),
    })
}

/// Empirical mean and standard error of `Y ((1 - rho) X - rho Z)` with Gaussian `X ~ N(0, P)`, `S`, `Z`.
pub fn gp_independence_check(p: &GpParams, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream(seed, Purpose::Oracle, 0);
    let v: Vec<f64> = (0..samples)
        .map(|_| {
            let x = p.p.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let s = p.sigma_i2.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let z = p.sigma_z2.sqrt() * rng.sample::<f64, _>(StandardNormal);
            (x + s + z) * ((1.0 - p.rho) * x - p.rho * z)
        })
        .collect();
    mean_se(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn wz_example_values() {
        let p = wz_params(1.0, 1.0, 0.5).unwrap();
        assert!(close(p.eta, 2.0) && close(p.delta_prime, 1.0));
        assert!(close(p.alpha_q, 2.0 / 3.0) && close(p.alpha_c, 1.0 / 3.0));
        assert!(close(p.gamma, 0.25) && close(p.rate_bound, 0.5));
        assert!(close(p.sigma_a2, 4.0 / 3.0));
        assert!(close(p.sigma_tilde_q2, 4.0 / 9.0) && close(p.sigma_tilde_c2, 8.0 / 9.0));
        let (l, r) = p.scaling_identity();
        assert!(close(l, 1.0 / 6.0) && close(r, 1.0 / 6.0));
        assert!(close(p.rate_q - p.rate_c, p.rate_bound));
    }

    #[test]
    fn wz_boundary_and_domain() {
        let p = wz_params(1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.rate_bound, 0.0);
        assert!(matches!(wz_params(1.0, 1.0, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn wz_test_channels_match_posteriors() {
        let p = wz_params(1.0, 1.0, 0.5).unwrap();
        let q = TestChannelParams::from_prior(p.sigma_a2.sqrt(), p.noise_q).unwrap();
        let c = TestChannelParams::from_prior(p.sigma_a2.sqrt(), p.noise_c).unwrap();
        assert!(close(q.sigma_tilde.powi(2), p.sigma_tilde_q2));
        assert!(close(c.sigma_tilde.powi(2), p.sigma_tilde_c2));
        assert!(close(q.sigma_s.powi(2), p.sigma_x2));
        assert!(close(c.sigma_s.powi(2), p.side_scale.powi(2) * p.sigma_y2));
    }

    #[test]
    fn gp_example_values() {
        let p = gp_params(1.0, 1.0, 1.0).unwrap();
        assert!(close(p.rho, 0.5) && close(p.sigma_y2, 3.0));
        assert!(close(p.alpha_c, 0.6) && close(p.alpha_q, 0.2));
        assert!(close(p.sigma_sprime2, 1.25) && close(p.sigma_a2, 0.05));
        assert!(close(p.capacity, 0.5));
        assert!(close(p.sigma_tilde_c2 / p.sigma_tilde_q2, 0.5));
        let (l, r) = p.scaling_identity();
        assert!(close(l, 0.4) && close(r, 0.4));
        let (l, r) = p.power_identity();
        assert!(close(l, r));
        assert!(close(p.rate_c - p.rate_q, p.capacity));
        assert!(close(p.noise_q + p.sigma_a2, p.rho * p.rho * p.sigma_i2));
    }

    #[test]
    fn independence_identity_holds_empirically() {
        let p = gp_params(1.0, 1.0, 1.0).unwrap();
        let (m, se) = gp_independence_check(&p, 100_000, 3);
        assert!(m.abs() < 3.0 * se, "{m} vs se {se}");
    }

    #[test]
    fn noisy_observation_model_rescales() {
        let (p, a) = WzParams::from_noisy_observation(1.0, 1.0, 0.25).unwrap();
        assert!(close(a, 0.5));
        assert!(close(p.sigma_z2, 0.5));
        assert!(close(p.sigma_x2, 1.0));
    }
}
