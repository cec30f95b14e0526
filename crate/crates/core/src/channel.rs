//! The Gaussian test channel `Y' = X + N(0, delta)` with discrete Gaussian
//! input, and its per-level binary partition channels.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::lattice::{flatness_factor, DiscreteGaussian, PartitionChain};

/// Default number of trapezoid intervals for integrals over the observation.
pub const QUADRATURE_POINTS: usize = 1 << 16;
/// Integration half-width in units of the observation deviation.
pub const QUADRATURE_SPAN: f64 = 8.0;
/// Magnitude limit applied to every log-likelihood ratio.
pub const LLR_LIMIT: f64 = 1000.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Parameters of the MMSE-scaled test channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestChannelParams {
    pub sigma_s: f64,
    pub delta: f64,
    pub sigma_r: f64,
    pub alpha: f64,
    pub sigma_tilde: f64,
}

/// Test channel for a source of deviation `sigma_s` quantized at distortion `delta`.
pub fn mmse_params(sigma_s: f64, delta: f64) -> Result<TestChannelParams> {
    if !(sigma_s > 0.0 && sigma_s.is_finite()) {
        return Err(Error::Domain(format!("sigma_s must be positive, got {sigma_s}")));
    }
    if !(delta > 0.0) || delta > sigma_s * sigma_s {
        return Err(Error::Domain(format!("delta must lie in (0, sigma_s^2], got {delta}")));
    }
    let sigma_r2 = (sigma_s * sigma_s - delta).max(0.0);
    let sigma_r = sigma_r2.sqrt();
    Ok(TestChannelParams {
        sigma_s,
        delta,
        sigma_r,
        alpha: sigma_r2 / (sigma_r2 + delta),
        sigma_tilde: sigma_r * delta.sqrt() / sigma_s,
    })
}

impl TestChannelParams {
    /// Parameters fixed by the reconstruction deviation rather than the source deviation.
    pub fn from_prior(sigma_r: f64, delta: f64) -> Result<Self> {
        if !(sigma_r > 0.0 && delta > 0.0) {
            return Err(Error::Domain(format!("need sigma_r > 0 and delta > 0, got {sigma_r}, {delta}")));
        }
        let sigma_s = (sigma_r * sigma_r + delta).sqrt();
        Ok(Self {
            sigma_s,
            delta,
            sigma_r,
            alpha: sigma_r * sigma_r / (sigma_r * sigma_r + delta),
            sigma_tilde: sigma_r * delta.sqrt() / sigma_s,
        })
    }

    /// `1/2 log2(sigma_s^2 / delta)`.
    pub fn rd_rate(&self) -> f64 {
        0.5 * (self.sigma_s * self.sigma_s / self.delta).log2()
    }
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Standard normal upper tail.
pub fn normal_q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    normal_q(-x)
}

/// `P(a < Z <= b)` for a standard normal, accurate in both tails.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_q(a) - normal_q(b)
    } else if b <= 0.0 {
        normal_q(-b) - normal_q(-a)
    } else {
        1.0 - normal_q(-a) - normal_q(b)
    }
}

/// Composite trapezoid rule with `n` intervals.
pub fn trapezoid<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + h * i as f64);
    }
    s * h
}

/// Per-level information quantities of the partition channel, in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelInformation {
    /// `H(X_l | X_<l)`.
    pub prior_entropy: f64,
    /// `H(X_l | X_<l, Y')`.
    pub posterior_entropy: f64,
    /// `I(X_l; Y' | X_<l)`.
    pub mutual_information: f64,
}

/// Equiprobable binning of the observation, used for degraded constructions and the exact oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    /// Interior bin edges, ascending; bin `b` is `(edges[b-1], edges[b]]`.
    pub edges: Vec<f64>,
}

impl Binning {
    pub fn bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin_of(&self, y: f64) -> usize {
        self.edges.partition_point(|&e| e < y)
    }

    fn bounds(&self, b: usize) -> (f64, f64) {
        let lo = if b == 0 { f64::NEG_INFINITY } else { self.edges[b - 1] };
        let hi = if b == self.edges.len() { f64::INFINITY } else { self.edges[b] };
        (lo, hi)
    }
}

/// The multilevel test channel: discrete Gaussian input on a partition chain plus Gaussian noise.
#[derive(Clone, Debug)]
pub struct TestChannel {
    pub params: TestChannelParams,
    pub dg: DiscreteGaussian,
    prior_llr: Vec<Vec<f64>>,
    inv_two_var_tilde: f64,
    shrink: Vec<f64>,
}

impl TestChannel {
    /// Builds the channel; the chain's `sigma_r` must match the parameters.
    pub fn new(params: TestChannelParams, chain: PartitionChain) -> Result<Self> {
        if !(params.sigma_r > 0.0) {
            return Err(Error::Precondition("test channel needs sigma_r > 0".into()));
        }
        if (chain.sigma_r - params.sigma_r).abs() > 1e-12 * params.sigma_r {
            return Err(Error::Precondition(format!(
                "chain sigma_r {} differs from channel sigma_r {}",
                chain.sigma_r, params.sigma_r
            )));
        }
        let dg = DiscreteGaussian::new(chain, 0.0)?;
        let mut prior_llr = Vec::with_capacity(chain.r);
        for level in 0..chain.r {
            let mut row = Vec::with_capacity(1 << level);
            for c in 0..(1u32 << level) {
                let m0 = dg.coset_mass(level + 1, c);
                let m1 = dg.coset_mass(level + 1, c + (1 << level));
                row.push(clamp_llr(m0.ln() - m1.ln()));
            }
            prior_llr.push(row);
        }
        let st = params.sigma_tilde;
        let shrink = (0..chain.r).map(|l| (-(chain.spacing(l + 1) / st).powi(2)).exp()).collect();
        Ok(Self { params, dg, prior_llr, inv_two_var_tilde: 1.0 / (2.0 * st * st), shrink })
    }

    pub fn chain(&self) -> &PartitionChain {
        &self.dg.chain
    }

    pub fn levels(&self) -> usize {
        self.dg.chain.r
    }

    pub fn level(&self, level: usize) -> LevelChannel<'_> {
        LevelChannel { channel: self, level }
    }

    /// Density of `Y'`: the discrete Gaussian smoothed by the channel noise.
    pub fn source_density(&self, y: f64) -> f64 {
        let eta = self.dg.chain.eta;
        let var = self.params.delta;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        self.dg
            .support()
            .map(|(k, p)| {
                let d = y - k as f64 * eta;
                p * (-d * d / (2.0 * var)).exp()
            })
            .sum::<f64>()
            * norm
    }

    /// `sum_{k = coset mod 2^bits} P(k) phi(y - k eta)`: the joint density of the coset and `y`.
    pub fn coset_joint_density(&self, bits: usize, coset: u32, y: f64) -> f64 {
        let chain = &self.dg.chain;
        let eta = chain.eta;
        let var = self.params.delta;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        let mask = (1u32 << bits) - 1;
        self.dg
            .support()
            .filter(|&(k, _)| chain.residue(k) & mask == coset)
            .map(|(k, p)| {
                let d = y - k as f64 * eta;
                p * (-d * d / (2.0 * var)).exp()
            })
            .sum::<f64>()
            * norm
    }

    /// Prior LLR `ln P(x_l = 0 | coset) / P(x_l = 1 | coset)`.
    pub fn prior_llr(&self, level: usize, coset: u32) -> f64 {
        self.prior_llr[level][coset as usize]
    }

    /// Posterior LLR `ln P(x_l = 0 | coset, y) / P(x_l = 1 | coset, y)`.
    pub fn posterior_llr(&self, level: usize, coset: u32, y: f64) -> f64 {
        let (p0, s0) = self.child_log_weight(level, coset, y);
        let (p1, s1) = self.child_log_weight(level, coset + (1 << level), y);
        clamp_llr((p0 - p1) + (s0 / s1).ln())
    }

    /// Coset sum `sum_{a in child} exp(-(alpha y - a)^2 / (2 sigma_tilde^2))` over the window,
    /// returned as `(log of the largest term, sum relative to it)`. The child is the residue
    /// class `child mod 2^(level+1)`. Terms away from the peak follow a multiplicative
    /// recurrence, so only two exponentials are needed per side.
    fn child_log_weight(&self, level: usize, child: u32, y: f64) -> (f64, f64) {
        let chain = &self.dg.chain;
        let eta = chain.eta;
        let m = 1i64 << (level + 1);
        let kmin = chain.k_min();
        let k0 = kmin + (child as i64 - kmin).rem_euclid(m);
        let count = (chain.points() as i64) >> (level + 1);
        let my = self.params.alpha * y;
        let step = m as f64 * eta;
        let centre = ((my / eta - k0 as f64) / m as f64).round().clamp(0.0, (count - 1) as f64) as i64;
        let d = my - (k0 + m * centre) as f64 * eta;
        let c = self.inv_two_var_tilde;
        let peak = -d * d * c;
        // Shrink factor between successive ratios, exp(-step^2 / sigma_tilde^2).
        let q = self.shrink[level];
        let up = ((2.0 * d * step - step * step) * c).exp();
        let down = ((-2.0 * d * step - step * step) * c).exp();
        let mut sum = 1.0;
        for (first, limit) in [(up, count - 1 - centre), (down, centre)] {
            let mut ratio = first;
            let mut term = 1.0;
            for _ in 0..limit {
                term *= ratio;
                if term < 1e-18 {
                    break;
                }
                sum += term;
                ratio *= q;
            }
        }
        (peak, sum)
    }

    /// Information quantities for every level by trapezoid quadrature over `y'`.
    pub fn level_information(&self, points: usize) -> Vec<LevelInformation> {
        let r = self.levels();
        let chain = self.dg.chain;
        let span = QUADRATURE_SPAN * self.params.sigma_s;
        let h = 2.0 * span / points as f64;
        let var = self.params.delta;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        let support: Vec<(u32, f64, f64)> =
            self.dg.support().map(|(k, p)| (chain.residue(k), k as f64 * chain.eta, p)).collect();
        let mut post = vec![0.0; r];
        let mut by_res = vec![0.0; chain.points()];
        let mut scratch = vec![0.0; chain.points()];
        for i in 0..=points {
            let y = -span + h * i as f64;
            let w = if i == 0 || i == points { 0.5 * h } else { h };
            for (res, x, p) in &support {
                let d = y - x;
                by_res[*res as usize] = p * norm * (-d * d / (2.0 * var)).exp();
            }
            // Fold residues from the finest level down, accumulating the posterior entropy.
            scratch.copy_from_slice(&by_res);
            for level in (0..r).rev() {
                let half = 1usize << level;
                for c in 0..half {
                    let s0 = scratch[c];
                    let s1 = scratch[c + half];
                    let s = s0 + s1;
                    if s > 0.0 {
                        post[level] += w * s * h2(s0 / s);
                    }
                    scratch[c] = s;
                }
            }
        }
        (0..r)
            .map(|level| {
                let mut prior = 0.0;
                for c in 0..(1u32 << level) {
                    let m = self.dg.coset_mass(level, c);
                    let m0 = self.dg.coset_mass(level + 1, c);
                    if m > 0.0 {
                        prior += m * h2(m0 / m);
                    }
                }
                LevelInformation {
                    prior_entropy: prior,
                    posterior_entropy: post[level],
                    mutual_information: (prior - post[level]).max(0.0),
                }
            })
            .collect()
    }

    /// `I(X; Y')` in bits summed over all levels.
    pub fn mutual_information(&self, points: usize) -> f64 {
        self.level_information(points).iter().map(|l| l.mutual_information).sum()
    }

    /// `V(f_Y', f_Y) = integral |f_Y' - f_Y|` against the Gaussian of matching variance `sigma_s^2`.
    pub fn variational_distance(&self, points: usize) -> f64 {
        let s = self.params.sigma_s;
        let span = QUADRATURE_SPAN * s;
        trapezoid(
            |y| {
                let g = (-y * y / (2.0 * s * s)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * s);
                (self.source_density(y) - g).abs()
            },
            -span,
            span,
            points,
        )
    }

    /// Measured distance to the continuous channel and its `4 epsilon` bound.
    pub fn variational_distance_bound(&self) -> Result<(f64, f64)> {
        let eps = flatness_factor(self.dg.chain.eta, self.params.sigma_tilde);
        if eps >= 0.5 {
            return Err(Error::Precondition(format!("flatness factor {eps} is not below 1/2")));
        }
        Ok((self.variational_distance(QUADRATURE_POINTS), 4.0 * eps))
    }

    /// Interior edges of `bins` bins equiprobable under `f_Y'`.
    pub fn equiprobable_binning(&self, bins: usize) -> Result<Binning> {
        if bins < 2 {
            return Err(Error::Domain(format!("need at least 2 bins, got {bins}")));
        }
        let sd = self.params.delta.sqrt();
        let eta = self.dg.chain.eta;
        let support: Vec<(f64, f64)> = self.dg.support().map(|(k, p)| (k as f64 * eta, p)).collect();
        let cdf = |y: f64| support.iter().map(|(x, p)| p * normal_cdf((y - x) / sd)).sum::<f64>();
        let span = QUADRATURE_SPAN * self.params.sigma_s + 40.0 * sd;
        let mut edges = Vec::with_capacity(bins - 1);
        for b in 1..bins {
            let target = b as f64 / bins as f64;
            let (mut lo, mut hi) = (-span, span);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            edges.push(0.5 * (lo + hi));
        }
        Ok(Binning { edges })
    }

    /// Observation model that only sees the bin index of `y'`.
    pub fn binned(&self, binning: Binning) -> BinnedChannel {
        BinnedChannel::new(self, binning)
    }
}

pub(crate) fn clamp_llr(l: f64) -> f64 {
    if l.is_nan() {
        0.0
    } else {
        l.clamp(-LLR_LIMIT, LLR_LIMIT)
    }
}

/// The binary partition channel at one level, `x_l -> y'`, given the lower bits.
#[derive(Clone, Copy, Debug)]
pub struct LevelChannel<'a> {
    pub channel: &'a TestChannel,
    pub level: usize,
}

impl<'a> LevelChannel<'a> {
    /// `(P(x_l = 0 | coset), P(x_l = 1 | coset))`.
    pub fn prior(&self, coset: u32) -> Result<(f64, f64)> {
        self.channel.dg.coset_conditional(self.level, coset)
    }

    /// Transition density `W(y' | x_{0..=l})`, where `bits < 2^(l+1)` holds `x_0..x_l`.
    ///
    /// Evaluated in completed-square form: the noise and shaping exponents
    /// combine into a Gaussian in `y'` of variance `sigma_r^2 + delta` times
    /// a coset sum centered on the MMSE estimate `alpha y'`.
    pub fn likelihood(&self, bits: u32, y: f64) -> Result<f64> {
        let ch = self.channel;
        let p = &ch.params;
        let chain = &ch.dg.chain;
        if bits as u64 >= 2u64 << self.level {
            return Err(Error::Domain(format!("bits {bits} exceed level {}", self.level)));
        }
        let mask = (2u32 << self.level) - 1;
        let mut f_coset = 0.0;
        let mut sum = 0.0;
        let s2 = p.sigma_r * p.sigma_r;
        let st2 = p.sigma_tilde * p.sigma_tilde;
        for (k, _) in ch.dg.support() {
            if chain.residue(k) & mask != bits {
                continue;
            }
            let a = k as f64 * chain.eta;
            f_coset += (-a * a / (2.0 * s2) - LN_SQRT_2PI).exp() / p.sigma_r;
            let d = p.alpha * y - a;
            sum += (-d * d / (2.0 * st2)).exp();
        }
        if f_coset <= 0.0 {
            return Err(Error::EmptyCoset { level: self.level, coset: bits });
        }
        let envelope = (-y * y / (2.0 * (s2 + p.delta))).exp();
        Ok(envelope * sum / (f_coset * 2.0 * std::f64::consts::PI * p.delta.sqrt() * p.sigma_r))
    }

    /// `(P(x_l = 0 | coset, y'), P(x_l = 1 | coset, y'))`.
    pub fn posterior(&self, coset: u32, y: f64) -> (f64, f64) {
        let l = self.channel.posterior_llr(self.level, coset, y);
        let p0 = 1.0 / (1.0 + (-l).exp());
        (p0, 1.0 - p0)
    }

    /// Symmetric view with uniform input `x~` and output `(y', x xor x~)`.
    pub fn symmetrize(&self, coset: u32) -> Result<SymmetrizedChannel<'a>> {
        let (p0, p1) = self.prior(coset)?;
        Ok(SymmetrizedChannel { level: *self, coset, prior: [p0, p1] })
    }
}

/// Symmetrized form of an asymmetric level channel for one conditioning coset.
#[derive(Clone, Copy, Debug)]
pub struct SymmetrizedChannel<'a> {
    pub level: LevelChannel<'a>,
    pub coset: u32,
    pub prior: [f64; 2],
}

impl SymmetrizedChannel<'_> {
    /// `W~(y', s | x~) = P_X(s xor x~) W(y' | s xor x~)`.
    pub fn transition(&self, y: f64, s: u8, x_tilde: u8) -> Result<f64> {
        let x = (s ^ x_tilde) & 1;
        let bits = self.coset + ((x as u32) << self.level.level);
        Ok(self.prior[x as usize] * self.level.likelihood(bits, y)?)
    }

    /// Bhattacharyya parameter `sum_s integral sqrt(W~(y,s|0) W~(y,s|1)) dy'`.
    pub fn bhattacharyya(&self, points: usize) -> Result<f64> {
        let sd = self.level.channel.params.sigma_s;
        let span = QUADRATURE_SPAN * sd;
        let bits0 = self.coset;
        let bits1 = self.coset + (1 << self.level.level);
        let mut err = None;
        let z = trapezoid(
            |y| match (self.level.likelihood(bits0, y), self.level.likelihood(bits1, y)) {
                (Ok(a), Ok(b)) => 2.0 * (self.prior[0] * a * self.prior[1] * b).sqrt(),
                (Err(e), _) | (_, Err(e)) => {
                    err = Some(e);
                    0.0
                }
            },
            -span,
            span,
            points,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(z),
        }
    }
}

/// Level channels seen through an observation binning.
#[derive(Clone, Debug)]
pub struct BinnedChannel {
    pub binning: Binning,
    /// `post_llr[l][c][b]`: posterior LLR of `x_l` given coset `c` and bin `b`.
    post_llr: Vec<Vec<Vec<f64>>>,
    /// `joint[l][d][b] = P(residue d mod 2^(l+1), bin b)`.
    joint: Vec<Vec<Vec<f64>>>,
    /// `bin_given_point[j][b] = P(bin b | window point j)`.
    bin_given_point: Vec<Vec<f64>>,
}

impl BinnedChannel {
    fn new(ch: &TestChannel, binning: Binning) -> Self {
        let chain = ch.dg.chain;
        let sd = ch.params.delta.sqrt();
        let nb = binning.bins();
        let bin_given_point: Vec<Vec<f64>> = ch
            .dg
            .support()
            .map(|(k, _)| {
                let x = k as f64 * chain.eta;
                (0..nb)
                    .map(|b| {
                        let (lo, hi) = binning.bounds(b);
                        normal_interval((lo - x) / sd, (hi - x) / sd)
                    })
                    .collect()
            })
            .collect();
        let mut joint = Vec::with_capacity(chain.r);
        let mut post_llr = Vec::with_capacity(chain.r);
        for level in 0..chain.r {
            let classes = 2usize << level;
            let mut jt = vec![vec![0.0; nb]; classes];
            for (j, (k, p)) in ch.dg.support().enumerate() {
                let d = (chain.residue(k) as usize) & (classes - 1);
                for b in 0..nb {
                    jt[d][b] += p * bin_given_point[j][b];
                }
            }
            let half = 1usize << level;
            let pl: Vec<Vec<f64>> = (0..half)
                .map(|c| (0..nb).map(|b| clamp_llr(jt[c][b].ln() - jt[c + half][b].ln())).collect())
                .collect();
            post_llr.push(pl);
            joint.push(jt);
        }
        Self { binning, post_llr, joint, bin_given_point }
    }

    pub fn posterior_llr(&self, level: usize, coset: u32, bin: usize) -> f64 {
        self.post_llr[level][coset as usize][bin]
    }

    /// `P(x_{0..=l} = d, bin)` for the residue class `d mod 2^(l+1)`.
    pub fn joint(&self, level: usize, class: u32, bin: usize) -> f64 {
        self.joint[level][class as usize][bin]
    }

    /// `P(bin | window point j)`, with `j` counted from the smallest window index.
    pub fn bin_given_point(&self, j: usize, bin: usize) -> f64 {
        self.bin_given_point[j][bin]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::eta_for_flatness;

    fn canonical(eta: f64) -> TestChannel {
        let p = mmse_params(3.0, 1.0).unwrap();
        TestChannel::new(p, PartitionChain::new(eta, 6, p.sigma_r).unwrap()).unwrap()
    }

    #[test]
    fn mmse_examples() {
        let p = mmse_params(3.0, 1.0).unwrap();
        assert!((p.sigma_r - 8f64.sqrt()).abs() < 1e-15);
        assert!((p.alpha - 8.0 / 9.0).abs() < 1e-15);
        assert!((p.sigma_tilde - 8f64.sqrt() / 3.0).abs() < 1e-15);
        let p = mmse_params(3.0, 9.0).unwrap();
        assert_eq!(p.sigma_r, 0.0);
        assert_eq!(p.alpha, 0.0);
        let p = mmse_params(1.0, 0.5).unwrap();
        assert!((p.alpha - 0.5).abs() < 1e-15);
        assert!(matches!(mmse_params(3.0, 9.5), Err(Error::Domain(_))));
    }

    #[test]
    fn density_integrates_to_one() {
        let ch = canonical(1.0);
        let total = trapezoid(|y| ch.source_density(y), -24.0, 24.0, 1 << 14);
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn likelihood_spot_value_matches_direct_sum() {
        let ch = canonical(1.0);
        let lc = ch.level(0);
        let y = 0.7;
        let got = lc.likelihood(0, y).unwrap();
        // Direct route: prior-weighted Gaussians over a very long even coset.
        let (s2, d) = (8.0f64, 1.0f64);
        let (mut num, mut den) = (0.0, 0.0);
        for j in -60_000i64..60_000 {
            let a = 2.0 * j as f64;
            let w = (-a * a / (2.0 * s2)).exp();
            num += w * (-(y - a) * (y - a) / (2.0 * d)).exp() / (2.0 * std::f64::consts::PI * d).sqrt();
            den += w;
        }
        assert!((got - num / den).abs() < 1e-12 * got, "{got} vs {}", num / den);
    }

    #[test]
    fn likelihood_normalized() {
        let ch = canonical(1.0);
        for level in 0..3 {
            let lc = ch.level(level);
            for bits in [0u32, 1, (2 << level) - 1] {
                let total = trapezoid(|y| lc.likelihood(bits, y).unwrap(), -30.0, 30.0, 1 << 14);
                assert!((total - 1.0).abs() < 1e-6, "level {level} bits {bits}: {total}");
            }
        }
    }

    #[test]
    fn mixture_consistency() {
        let ch = canonical(0.9);
        for level in 0..ch.levels() {
            for &y in &[-5.2, -0.3, 0.0, 1.7, 4.4] {
                let mut total = 0.0;
                for bits in 0..(2u32 << level) {
                    let m = ch.dg.coset_mass(level + 1, bits);
                    total += m * ch.level(level).likelihood(bits, y).unwrap();
                }
                let f = ch.source_density(y);
                assert!((total - f).abs() < 1e-8 * f.max(1e-300), "level {level} y {y}");
            }
        }
    }

    #[test]
    fn fast_posterior_matches_bayes() {
        let ch = canonical(0.9);
        for level in 0..ch.levels() {
            let lc = ch.level(level);
            for coset in [0u32, (1 << level) - 1] {
                for &y in &[-7.0, -1.1, 0.2, 3.3, 30.0] {
                    let (q0, q1) = lc.prior(coset).unwrap();
                    let w0 = lc.likelihood(coset, y).unwrap();
                    let w1 = lc.likelihood(coset + (1 << level), y).unwrap();
                    let p0 = q0 * w0 / (q0 * w0 + q1 * w1);
                    let (f0, f1) = lc.posterior(coset, y);
                    assert!((f0 + f1 - 1.0).abs() < 1e-12);
                    if p0.is_finite() {
                        assert!((f0 - p0).abs() < 1e-9, "level {level} coset {coset} y {y}: {f0} vs {p0}");
                    }
                }
            }
        }
    }

    #[test]
    fn likelihood_mirror_symmetry() {
        let ch = canonical(1.0);
        let level = 2;
        let lc = ch.level(level);
        let mask = (2u32 << level) - 1;
        for bits in 0..=mask {
            let mirror = bits.wrapping_neg() & mask;
            for &y in &[0.3, 2.1] {
                let a = lc.likelihood(bits, y).unwrap();
                let b = lc.likelihood(mirror, -y).unwrap();
                // The window holds one unpaired point at -2^(r-1) eta.
                assert!((a - b).abs() < 1e-9 * a.max(1e-300), "{bits}: {a} {b}");
            }
        }
    }

    #[test]
    fn noiseless_limit_mode() {
        let p = TestChannelParams::from_prior(2.0, 1e-6).unwrap();
        let ch = TestChannel::new(p, PartitionChain::new(1.0, 6, 2.0).unwrap()).unwrap();
        let lc = ch.level(0);
        // Coset of odd points: the density peaks at an odd integer.
        let (mut best, mut at) = (0.0, 0.0);
        let mut y = -3.0;
        while y < 3.0 {
            let v = lc.likelihood(1, y).unwrap();
            if v > best {
                best = v;
                at = y;
            }
            y += 1e-3;
        }
        assert!(((at as f64).abs() - 1.0).abs() < 1e-2, "{at}");
    }

    #[test]
    fn symmetrized_bhattacharyya() {
        let ch = canonical(0.9);
        let lc = ch.level(1);
        let sym = lc.symmetrize(1).unwrap();
        let z = sym.bhattacharyya(1 << 14).unwrap();
        // Direct asymmetric form with a different rule: midpoint sums of joint densities.
        let (a, b, n) = (-24.0, 24.0, 40_000);
        let h = (b - a) / n as f64;
        let mut direct = 0.0;
        for i in 0..n {
            let y = a + h * (i as f64 + 0.5);
            let j0 = ch.coset_joint_density(2, 1, y);
            let j1 = ch.coset_joint_density(2, 3, y);
            direct += 2.0 * (j0 * j1).sqrt() * h;
        }
        direct /= ch.dg.coset_mass(1, 1);
        assert!((z - direct).abs() < 1e-4, "{z} vs {direct}");
        for s in 0..2u8 {
            for xt in 0..2u8 {
                assert!(sym.transition(0.5, s, xt).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn symmetrized_uniform_prior_equals_plain() {
        let p = mmse_params(3.0, 1.0).unwrap();
        let ch = TestChannel::new(p, PartitionChain::new(0.05, 12, p.sigma_r).unwrap()).unwrap();
        let lc = ch.level(0);
        let sym = lc.symmetrize(0).unwrap();
        assert!((sym.prior[0] - 0.5).abs() < 1e-12);
        let plain = trapezoid(
            |y| (lc.likelihood(0, y).unwrap() * lc.likelihood(1, y).unwrap()).sqrt(),
            -24.0,
            24.0,
            1 << 14,
        );
        assert!((sym.bhattacharyya(1 << 14).unwrap() - plain).abs() < 1e-9);
    }

    #[test]
    fn deterministic_prior_has_zero_z() {
        let ch = canonical(1.0);
        // The coarsest level in a wide chain puts all mass on one child.
        let sym = ch.level(5).symmetrize(0).unwrap();
        assert!(sym.prior[1] < 1e-20);
        assert!(sym.bhattacharyya(1 << 12).unwrap() < 1e-12);
    }

    #[test]
    fn information_bound_and_distance() {
        let p = mmse_params(3.0, 1.0).unwrap();
        let eta = eta_for_flatness(p.sigma_tilde, 1e-7);
        let ch = TestChannel::new(p, PartitionChain::new(eta, 6, p.sigma_r).unwrap()).unwrap();
        let mi = ch.mutual_information(1 << 15);
        let bound = crate::lattice::information_bound_check(3.0, 1.0, ch.chain(), 1.0);
        assert!(mi >= bound.i_delta_lower - 1e-9, "{mi} vs {}", bound.i_delta_lower);
        let (measured, b4) = ch.variational_distance_bound().unwrap();
        assert!(measured <= b4, "{measured} vs {b4}");
    }

    #[test]
    fn binned_tables_consistent() {
        let ch = canonical(1.0);
        let bc = ch.binned(ch.equiprobable_binning(8).unwrap());
        for b in 0..8 {
            let total: f64 = (0..2u32).map(|d| bc.joint(0, d, b)).sum();
            assert!((total - 0.125).abs() < 1e-9, "bin {b}: {total}");
        }
        assert_eq!(bc.binning.bin_of(-100.0), 0);
        assert_eq!(bc.binning.bin_of(100.0), 7);
    }
}
