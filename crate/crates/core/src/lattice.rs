//! One-dimensional binary partition chains and discrete Gaussian shaping.
//!
//! Levels are indexed from 0. Level `l` decides bit `x_l` of the lattice
//! index `k` (two's complement, modulo `2^r`), which selects one of the two
//! cosets of `2^(l+1) eta Z` inside the coset of `2^l eta Z` fixed by the
//! lower bits. A coset at level `l` is therefore the residue `k mod 2^l`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terms of a theta series below this are dropped.
pub const SERIES_CUTOFF: f64 = 1e-30;
/// Largest discrete Gaussian mass allowed outside the support window.
pub const TRUNCATION_LIMIT: f64 = 1e-12;
/// Default flatness target used to pick the lattice scale.
pub const DEFAULT_FLATNESS: f64 = 1e-7;
/// Default number of binary partition levels.
pub const DEFAULT_LEVELS: usize = 6;

/// The chain `eta Z / 2 eta Z / ... / 2^r eta Z` with shaping deviation `sigma_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionChain {
    pub eta: f64,
    pub r: usize,
    pub sigma_r: f64,
}

impl PartitionChain {
    pub fn new(eta: f64, r: usize, sigma_r: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!("eta must be positive, got {eta}")));
        }
        if r == 0 || r > 24 {
            return Err(Error::Domain(format!("levels must lie in 1..=24, got {r}")));
        }
        if !(sigma_r >= 0.0 && sigma_r.is_finite()) {
            return Err(Error::Domain(format!("sigma_r must be nonnegative, got {sigma_r}")));
        }
        Ok(Self { eta, r, sigma_r })
    }

    /// Spacing of the level-`l` sublattice, `2^l eta`.
    pub fn spacing(&self, level: usize) -> f64 {
        self.eta * (1u64 << level) as f64
    }

    /// Number of points in the support window.
    pub fn points(&self) -> usize {
        1 << self.r
    }

    /// Smallest lattice index in the window, `-2^(r-1)`.
    pub fn k_min(&self) -> i64 {
        -(1i64 << (self.r - 1))
    }

    /// One past the largest lattice index in the window.
    pub fn k_max(&self) -> i64 {
        1i64 << (self.r - 1)
    }

    /// Residue of index `k` modulo `2^r`.
    pub fn residue(&self, k: i64) -> u32 {
        k.rem_euclid(1i64 << self.r) as u32
    }

    /// Window index whose residue is `res`.
    pub fn fold(&self, res: u32) -> i64 {
        let k = res as i64;
        if k >= self.k_max() {
            k - (1i64 << self.r)
        } else {
            k
        }
    }

    /// Reconstruction value of a residue.
    pub fn value(&self, res: u32) -> f64 {
        self.fold(res) as f64 * self.eta
    }
}

/// `Theta_{(1/eta) Z}(2 pi sigma^2)`, summed over the dual lattice.
pub fn theta_dual(eta: f64, sigma: f64) -> f64 {
    1.0 + flatness_factor(eta, sigma)
}

/// The same theta value from the primal sum via Poisson summation.
pub fn theta_primal(eta: f64, sigma: f64) -> f64 {
    let a = eta * eta / (2.0 * sigma * sigma);
    let mut s = 1.0;
    let mut k = 1.0f64;
    loop {
        let t = (-a * k * k).exp();
        s += 2.0 * t;
        if t < SERIES_CUTOFF {
            break;
        }
        k += 1.0;
    }
    s * eta / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

/// Flatness factor of `eta Z` at deviation `sigma`, `2 sum_{k>=1} exp(-2 pi^2 sigma^2 k^2 / eta^2)`.
pub fn flatness_factor(eta: f64, sigma: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let a = 2.0 * pi * pi * sigma * sigma / (eta * eta);
    let mut s = 0.0;
    let mut k = 1.0f64;
    loop {
        let t = (-a * k * k).exp();
        if t < SERIES_CUTOFF {
            break;
        }
        s += t;
        k += 1.0;
    }
    2.0 * s
}

/// Largest `eta` with `flatness_factor(eta, sigma) <= target`.
pub fn eta_for_flatness(sigma: f64, target: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let guess = pi * sigma * 2f64.sqrt() / (2.0 / target).ln().sqrt();
    let (mut lo, mut hi) = (0.5 * guess, 2.0 * guess);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if flatness_factor(mid, sigma) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Mass of a centered discrete Gaussian over `eta Z` falling outside the window of `2^r` points.
pub fn outside_mass(eta: f64, r: usize, sigma_r: f64, center: f64) -> f64 {
    let kmin = -(1i64 << (r - 1));
    let kmax = 1i64 << (r - 1);
    let logw = |k: i64| {
        let d = k as f64 * eta - center;
        -d * d / (2.0 * sigma_r * sigma_r)
    };
    let peak = (center / eta).round() as i64;
    let inside_peak = peak.clamp(kmin, kmax - 1);
    let m = logw(inside_peak);
    let mut inside = 0.0;
    for k in kmin..kmax {
        inside += (logw(k) - m).exp();
    }
    let mut outside = 0.0;
    let mut k = kmax;
    loop {
        let t = (logw(k) - m).exp();
        outside += t;
        if t < 1e-40 * inside || k > kmax + (1 << 30) {
            break;
        }
        k += 1;
    }
    let mut k = kmin - 1;
    loop {
        let t = (logw(k) - m).exp();
        outside += t;
        if t < 1e-40 * inside || k < kmin - (1 << 30) {
            break;
        }
        k -= 1;
    }
    outside / (inside + outside)
}

/// Smallest `eta` whose window keeps the outside mass below `limit`.
pub fn eta_for_truncation(r: usize, sigma_r: f64, limit: f64) -> f64 {
    if sigma_r == 0.0 {
        return f64::MIN_POSITIVE;
    }
    let (mut lo, mut hi) = (1e-6 * sigma_r, 64.0 * sigma_r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if outside_mass(mid, r, sigma_r, 0.0) <= limit {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Default lattice scale for a test channel: flat to within `flatness`
/// at `sigma_tilde`, widened if the window would otherwise truncate the
/// shaping distribution.
pub fn default_eta(sigma_tilde: f64, sigma_r: f64, r: usize, flatness: f64) -> f64 {
    let flat = eta_for_flatness(sigma_tilde, flatness);
    // A tenth of the truncation limit keeps the result clear of the error boundary.
    let trunc = eta_for_truncation(r, sigma_r, 0.1 * TRUNCATION_LIMIT);
    flat.max(trunc)
}

/// Truncated lattice Gaussian over the support window of a chain.
#[derive(Clone, Debug)]
pub struct DiscreteGaussian {
    pub chain: PartitionChain,
    pub center: f64,
    /// Probability of window index `k_min + j` at position `j`.
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    /// `mass[j][c]`: total probability of residue class `c mod 2^j`, for `j = 0..=r`.
    mass: Vec<Vec<f64>>,
    captured: f64,
}

impl DiscreteGaussian {
    pub fn new(chain: PartitionChain, center: f64) -> Result<Self> {
        let n = chain.points();
        let kmin = chain.k_min();
        let mut pmf = vec![0.0; n];
        if chain.sigma_r == 0.0 {
            let k = (center / chain.eta).round() as i64;
            if k < kmin || k >= chain.k_max() {
                return Err(Error::Truncation { captured: 0.0, limit: TRUNCATION_LIMIT });
            }
            pmf[(k - kmin) as usize] = 1.0;
        } else {
            let s2 = 2.0 * chain.sigma_r * chain.sigma_r;
            let logw: Vec<f64> = (0..n)
                .map(|j| {
                    let d = (kmin + j as i64) as f64 * chain.eta - center;
                    -d * d / s2
                })
                .collect();
            let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (p, l) in pmf.iter_mut().zip(&logw) {
                *p = (l - m).exp();
            }
            let z: f64 = pmf.iter().sum();
            for p in pmf.iter_mut() {
                *p /= z;
            }
        }
        let outside = if chain.sigma_r == 0.0 {
            0.0
        } else {
            outside_mass(chain.eta, chain.r, chain.sigma_r, center)
        };
        if outside > TRUNCATION_LIMIT {
            return Err(Error::Truncation { captured: 1.0 - outside, limit: TRUNCATION_LIMIT });
        }
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        let mut mass = Vec::with_capacity(chain.r + 1);
        for j in 0..=chain.r {
            let mut m = vec![0.0; 1 << j];
            for (idx, p) in pmf.iter().enumerate() {
                let res = chain.residue(kmin + idx as i64) as usize;
                m[res & ((1 << j) - 1)] += p;
            }
            mass.push(m);
        }
        Ok(Self { chain, center, pmf, cdf, mass, captured: 1.0 - outside })
    }

    /// Window indices paired with their probabilities.
    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let kmin = self.chain.k_min();
        self.pmf.iter().enumerate().map(move |(j, &p)| (kmin + j as i64, p))
    }

    /// Probability of window index `k` (zero outside the window).
    pub fn pmf(&self, k: i64) -> f64 {
        let j = k - self.chain.k_min();
        if j < 0 || j >= self.pmf.len() as i64 {
            0.0
        } else {
            self.pmf[j as usize]
        }
    }

    /// Fraction of the untruncated mass inside the window.
    pub fn captured_mass(&self) -> f64 {
        self.captured
    }

    /// Probability of the residue class `coset mod 2^level`.
    pub fn coset_mass(&self, level: usize, coset: u32) -> f64 {
        self.mass[level][coset as usize]
    }

    /// `(P(x_l = 0 | coset), P(x_l = 1 | coset))`, where `coset < 2^level` fixes the lower bits.
    pub fn coset_conditional(&self, level: usize, coset: u32) -> Result<(f64, f64)> {
        if level >= self.chain.r {
            return Err(Error::Domain(format!("level {level} outside 0..{}", self.chain.r)));
        }
        if coset as u64 >= 1u64 << level {
            return Err(Error::Domain(format!("coset {coset} needs more than {level} bits")));
        }
        let m0 = self.mass[level + 1][coset as usize];
        let m1 = self.mass[level + 1][coset as usize + (1 << level)];
        let z = m0 + m1;
        if z <= 0.0 {
            return Err(Error::EmptyCoset { level, coset });
        }
        Ok((m0 / z, m1 / z))
    }

    /// Draws a window index by inverse-CDF lookup.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let j = self.cdf.partition_point(|&c| c <= u).min(self.pmf.len() - 1);
        self.chain.k_min() + j as i64
    }

    /// Second moment of the truncated distribution in signal units.
    pub fn second_moment(&self) -> f64 {
        self.support().map(|(k, p)| p * (k as f64 * self.chain.eta).powi(2)).sum()
    }
}

/// Outcome of the discrete Gaussian mutual information bound check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformationBound {
    pub epsilon: f64,
    pub epsilon_t: f64,
    pub i_delta_lower: f64,
    /// `epsilon < 1/2`.
    pub epsilon_ok: bool,
    /// `pi epsilon_t / (1 - epsilon_t) < epsilon`.
    pub epsilon_t_ok: bool,
}

impl InformationBound {
    pub fn holds(&self) -> bool {
        self.epsilon_ok && self.epsilon_t_ok
    }
}

/// Lower bound on the test-channel mutual information with discrete
/// Gaussian reconstruction. `t` selects the branch of `epsilon_t`.
pub fn information_bound_check(sigma_s: f64, delta: f64, chain: &PartitionChain, t: f64) -> InformationBound {
    let pi = std::f64::consts::PI;
    let sigma_tilde = chain.sigma_r * delta.sqrt() / sigma_s;
    let epsilon = flatness_factor(chain.eta, sigma_tilde);
    let base = flatness_factor(chain.eta, chain.sigma_r * ((pi - t) / pi).sqrt());
    let epsilon_t = if t >= (-1f64).exp() { base } else { (t.powi(-4) + 1.0) * base };
    let rd = 0.5 * (sigma_s * sigma_s / delta).log2();
    InformationBound {
        epsilon,
        epsilon_t,
        i_delta_lower: rd - 5.0 * epsilon,
        epsilon_ok: epsilon < 0.5,
        epsilon_t_ok: pi * epsilon_t / (1.0 - epsilon_t) < epsilon,
    }
}
