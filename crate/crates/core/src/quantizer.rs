//! Multilevel lossy encoder, bitstream decoder and reconstruction.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::TestChannel;
use crate::error::{Error, Result};
use crate::lattice::PartitionChain;
use crate::polar::sc::{prob_zero, ScDecoder};
use crate::polar::{polar_transform, CodeSpec, Role};
use crate::rng::{stream, Purpose};

/// Decision rule for information indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeRule {
    /// Random rounding on I, frozen values on F, prior argmax on S.
    #[default]
    Standard,
    /// Random rounding from the posterior on every index (no compression).
    SampleAll,
    /// Posterior argmax on I, otherwise as `Standard`.
    MapInformation,
}

/// Output of encoding one source block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedBlock {
    /// `u_l` restricted to `I_l`, per level, in ascending index order.
    pub info_bits: Vec<Vec<u8>>,
    pub reconstruction: Vec<f64>,
    pub rate_bits: usize,
    /// `||y - x||^2 / N`.
    pub distortion: f64,
}

/// Aggregate over many blocks of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub n: usize,
    pub blocks: usize,
    pub seed: u64,
    /// Bits per sample.
    pub rate: f64,
    pub distortion: f64,
    pub distortion_std_err: f64,
    pub snr_db: f64,
    /// Half-width of the 95% interval on `snr_db`.
    pub ci95_db: f64,
    pub errors: usize,
}

/// Sum of `2^l x_l` folded to the support window, as lattice values.
pub fn reconstruct(chain: &PartitionChain, u_vectors: &[Vec<u8>]) -> Result<Vec<f64>> {
    if u_vectors.len() != chain.r {
        return Err(Error::Domain(format!("need {} u-vectors, got {}", chain.r, u_vectors.len())));
    }
    let n = u_vectors[0].len();
    let mut res = vec![0u32; n];
    for (l, u) in u_vectors.iter().enumerate() {
        if u.len() != n {
            return Err(Error::Domain("u-vectors differ in length".into()));
        }
        let x = polar_transform(u)?;
        for (r, b) in res.iter_mut().zip(&x) {
            *r |= (*b as u32) << l;
        }
    }
    Ok(res.iter().map(|&r| chain.value(r)).collect())
}

/// Shared-read encoder and decoder for one code.
#[derive(Clone, Debug)]
pub struct Quantizer {
    pub spec: CodeSpec,
    pub channel: TestChannel,
    roles: Vec<Vec<Role>>,
    frozen: Vec<Vec<u8>>,
}

/// Result of encoding one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelOutput {
    pub u: Vec<u8>,
    pub info_bits: Vec<u8>,
    /// `x_l = u G_N`.
    pub x: Vec<u8>,
}

impl Quantizer {
    pub fn new(spec: CodeSpec) -> Result<Self> {
        spec.validate()?;
        let channel = spec.channel()?;
        let roles: Vec<Vec<Role>> = spec.levels.iter().map(|s| s.roles()).collect();
        let frozen = spec
            .levels
            .iter()
            .zip(&spec.frozen_bits)
            .map(|(s, bits)| {
                let mut v = vec![0u8; spec.n];
                for (&i, &b) in s.frozen.iter().zip(bits) {
                    v[i as usize] = b;
                }
                v
            })
            .collect();
        Ok(Self { spec, channel, roles, frozen })
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Encodes level `level` of a block. `residues[j]` holds the lower-level bits of position `j`.
    pub fn encode_level<R: Rng + ?Sized>(
        &self,
        dec: &mut ScDecoder<2>,
        level: usize,
        y: &[f64],
        residues: &[u32],
        rule: EncodeRule,
        rng: &mut R,
    ) -> LevelOutput {
        let n = self.n();
        let mask = (1u32 << level) - 1;
        let ch: Vec<[f64; 2]> = (0..n)
            .map(|j| {
                let c = residues[j] & mask;
                [self.channel.prior_llr(level, c), self.channel.posterior_llr(level, c, y[j])]
            })
            .collect();
        let roles = &self.roles[level];
        let frozen = &self.frozen[level];
        let mut u = vec![0u8; n];
        let x = dec
            .run(&ch, &mut u, |i, l| {
                let random = |rng: &mut R| (rng.random::<f64>() >= prob_zero(l[1])) as u8;
                match (rule, roles[i]) {
                    (EncodeRule::SampleAll, _) => random(rng),
                    (EncodeRule::MapInformation, Role::Info) => (l[1] < 0.0) as u8,
                    (_, Role::Info) => random(rng),
                    (_, Role::Frozen) => frozen[i],
                    (_, Role::Shaping) => (l[0] < 0.0) as u8,
                }
            })
            .to_vec();
        let info_bits = self.spec.levels[level].info.iter().map(|&i| u[i as usize]).collect();
        LevelOutput { u, info_bits, x }
    }

    /// Encodes a source block across all levels.
    pub fn encode<R: Rng + ?Sized>(&self, y: &[f64], rule: EncodeRule, rng: &mut R) -> Result<QuantizedBlock> {
        let n = self.n();
        if y.len() != n {
            return Err(Error::Domain(format!("block has {} samples, code length is {n}", y.len())));
        }
        let mut dec = ScDecoder::<2>::new(n)?;
        let mut res = vec![0u32; n];
        let mut info_bits = Vec::with_capacity(self.spec.chain.r);
        for level in 0..self.spec.chain.r {
            let out = self.encode_level(&mut dec, level, y, &res, rule, rng);
            for (r, &b) in res.iter_mut().zip(&out.x) {
                *r |= (b as u32) << level;
            }
            info_bits.push(out.info_bits);
        }
        let chain = &self.spec.chain;
        let reconstruction: Vec<f64> = res.iter().map(|&r| chain.value(r)).collect();
        let distortion = mse(y, &reconstruction);
        Ok(QuantizedBlock { rate_bits: info_bits.iter().map(Vec::len).sum(), info_bits, reconstruction, distortion })
    }

    /// Rebuilds the reconstruction from information bits alone.
    pub fn decode_bits(&self, info_bits: &[Vec<u8>]) -> Result<Vec<f64>> {
        let n = self.n();
        let r = self.spec.chain.r;
        if info_bits.len() != r {
            return Err(Error::Domain(format!("need {r} levels of information bits, got {}", info_bits.len())));
        }
        let mut dec = ScDecoder::<1>::new(n)?;
        let mut res = vec![0u32; n];
        let mut u = vec![0u8; n];
        for level in 0..r {
            let info = &info_bits[level];
            if info.len() != self.spec.levels[level].info.len() {
                return Err(Error::Domain(format!("level {level} expects {} information bits", self.spec.levels[level].info.len())));
            }
            let mask = (1u32 << level) - 1;
            let ch: Vec<[f64; 1]> = res.iter().map(|&c| [self.channel.prior_llr(level, c & mask)]).collect();
            let roles = &self.roles[level];
            let frozen = &self.frozen[level];
            let mut next = 0;
            let x = dec.run(&ch, &mut u, |i, l| match roles[i] {
                Role::Info => {
                    next += 1;
                    info[next - 1]
                }
                Role::Frozen => frozen[i],
                Role::Shaping => (l[0] < 0.0) as u8,
            });
            for (r, &b) in res.iter_mut().zip(x) {
                *r |= (b as u32) << level;
            }
        }
        let chain = &self.spec.chain;
        Ok(res.iter().map(|&r| chain.value(r)).collect())
    }

    /// Draws an i.i.d. Gaussian source block of deviation `sigma_s`.
    pub fn source_block(&self, seed: u64, block: u64) -> Vec<f64> {
        gaussian_block(self.spec.params.sigma_s, self.n(), seed, block)
    }

    /// Encodes `blocks` independent source blocks in parallel.
    pub fn run_blocks(&self, blocks: usize, seed: u64, rule: EncodeRule) -> Result<Vec<QuantizedBlock>> {
        (0..blocks as u64)
            .into_par_iter()
            .map(|b| {
                let y = self.source_block(seed, b);
                let mut rng = stream(seed, Purpose::Encode, b);
                self.encode(&y, rule, &mut rng)
            })
            .collect()
    }
}

/// i.i.d. `N(0, sigma^2)` samples from the source stream of a block.
pub fn gaussian_block(sigma: f64, n: usize, seed: u64, block: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Source, block);
    (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Mean squared error between two vectors.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Encodes one level with a spec directly; allocates its own decoder.
pub fn encode_level<R: Rng + ?Sized>(
    q: &Quantizer,
    level: usize,
    y: &[f64],
    residues: &[u32],
    rng: &mut R,
) -> Result<LevelOutput> {
    let mut dec = ScDecoder::<2>::new(q.n())?;
    Ok(q.encode_level(&mut dec, level, y, residues, EncodeRule::Standard, rng))
}

/// Aggregates blocks of one configuration.
pub fn measure(blocks: &[QuantizedBlock], sigma_s: f64, seed: u64) -> Result<ExperimentResult> {
    if blocks.is_empty() {
        return Err(Error::Domain("need at least one block".into()));
    }
    let n = blocks[0].reconstruction.len();
    let count = blocks.len() as f64;
    let d: Vec<f64> = blocks.iter().map(|b| b.distortion).collect();
    let mean = d.iter().sum::<f64>() / count;
    let var = if blocks.len() > 1 { d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0) } else { 0.0 };
    let se = (var / count).sqrt();
    Ok(ExperimentResult {
        n,
        blocks: blocks.len(),
        seed,
        rate: blocks[0].rate_bits as f64 / n as f64,
        distortion: mean,
        distortion_std_err: se,
        snr_db: snr_db(sigma_s * sigma_s, mean),
        ci95_db: 10.0 / std::f64::consts::LN_10 * 1.96 * se / mean,
        errors: 0,
    })
}

/// `10 log10(signal / distortion)`.
pub fn snr_db(signal_power: f64, distortion: f64) -> f64 {
    10.0 * (signal_power / distortion).log10()
}

const MAGIC: &[u8; 4] = b"PQB1";

/// SHA-256 of the canonical JSON form of a code.
pub fn spec_hash(spec: &CodeSpec) -> [u8; 32] {
    let bytes = serde_json::to_vec(spec).expect("spec serializes");
    Sha256::digest(&bytes).into()
}

/// Packs information bits: magic, spec hash, `n` (u32 LE), `r` (u8),
/// bit count (u32 LE), then bits MSB-first by level and index.
pub fn write_bitstream(spec: &CodeSpec, info_bits: &[Vec<u8>]) -> Result<Vec<u8>> {
    if info_bits.len() != spec.levels.len() {
        return Err(Error::Bitstream("level count differs from spec".into()));
    }
    let mut bits = Vec::new();
    for (l, b) in info_bits.iter().enumerate() {
        if b.len() != spec.levels[l].info.len() {
            return Err(Error::Bitstream(format!("level {l} has {} bits, spec expects {}", b.len(), spec.levels[l].info.len())));
        }
        bits.extend_from_slice(b);
    }
    let mut out = Vec::with_capacity(45 + bits.len() / 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&spec_hash(spec));
    out.extend_from_slice(&(spec.n as u32).to_le_bytes());
    out.push(spec.chain.r as u8);
    out.extend_from_slice(&(bits.len() as u32).to_le_bytes());
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (k, &b) in chunk.iter().enumerate() {
            byte |= (b & 1) << (7 - k);
        }
        out.push(byte);
    }
    Ok(out)
}

/// Inverse of [`write_bitstream`]; rejects streams written for another spec.
pub fn read_bitstream(spec: &CodeSpec, bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    if bytes.len() < 45 || &bytes[..4] != MAGIC {
        return Err(Error::Bitstream("missing header".into()));
    }
    let stored = &bytes[4..36];
    let want = spec_hash(spec);
    if stored != want {
        return Err(Error::Hash { stored: hex::encode(stored), computed: hex::encode(want) });
    }
    let n = u32::from_le_bytes(bytes[36..40].try_into().unwrap()) as usize;
    let r = bytes[40] as usize;
    let count = u32::from_le_bytes(bytes[41..45].try_into().unwrap()) as usize;
    if n != spec.n || r != spec.chain.r || count != spec.info_bits() {
        return Err(Error::Bitstream("header disagrees with spec".into()));
    }
    let body = &bytes[45..];
    if body.len() != count.div_ceil(8) {
        return Err(Error::Bitstream(format!("expected {} payload bytes, found {}", count.div_ceil(8), body.len())));
    }
    let bit = |k: usize| (body[k / 8] >> (7 - k % 8)) & 1;
    let mut k = 0;
    let mut out = Vec::with_capacity(r);
    for s in &spec.levels {
        out.push((0..s.info.len()).map(|_| { k += 1; bit(k - 1) }).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_fold_example() {
        let chain = PartitionChain::new(1.0, 2, 1.0).unwrap();
        let x = reconstruct(&chain, &[vec![1], vec![1]]).unwrap();
        assert_eq!(x, vec![-1.0]);
        let x = reconstruct(&chain, &[vec![0; 4], vec![0; 4]]).unwrap();
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn snr_of_unit_distortion() {
        assert_eq!(snr_db(9.0, 9.0), 0.0);
        assert!((snr_db(1.0, 0.25) - 6.0206).abs() < 1e-4);
    }
}
