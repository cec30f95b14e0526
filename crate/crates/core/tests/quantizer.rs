use polarq::baselines::{design_channel, design_quantizer};
use polarq::channel::TestChannel;
use polarq::polar::{polar_transform, Allocation, CodeSpec, ConstructionConfig, FrozenChoice, LevelSets, Role, ScDecoder, Thresholds};
use polarq::quantizer::{read_bitstream, reconstruct, write_bitstream, EncodeRule, Quantizer};
use polarq::rng::{stream, Purpose};
use polarq::Error;
use proptest::prelude::*;

fn code(sigma_s: f64, delta: f64, n: usize, trials: usize) -> CodeSpec {
    let ch = design_channel(sigma_s, delta, 6, 1e-7).unwrap();
    let cfg = ConstructionConfig {
        trials,
        allocation: Allocation::Thresholds,
        frozen: FrozenChoice::Random { seed: 1 },
        thresholds: Thresholds { shaping: 1e-3, frozen: 0.1 },
        ..ConstructionConfig::new(n)
    };
    design_quantizer(&ch, &cfg).unwrap()
}

/// `P(x = b | coset)` at one level, from coset masses.
fn prior_bit(ch: &TestChannel, level: usize, coset: u32) -> [f64; 2] {
    let m = ch.dg.coset_mass(level, coset);
    let m1 = ch.dg.coset_mass(level + 1, coset + (1 << level));
    [(m - m1) / m, m1 / m]
}

/// `P(x = b | coset, y) ∝ sum_k P(k) exp(-(y - k eta)^2 / (2 delta))` over the coset's children.
fn posterior_bit(ch: &TestChannel, level: usize, coset: u32, y: f64) -> [f64; 2] {
    let chain = ch.chain();
    let mut w = [0.0; 2];
    for (k, p) in ch.dg.support() {
        let r = chain.residue(k);
        if r & ((1 << level) - 1) == coset {
            let d = y - k as f64 * chain.eta;
            w[((r >> level) & 1) as usize] += p * (-d * d / (2.0 * ch.params.delta)).exp();
        }
    }
    let s = w[0] + w[1];
    [w[0] / s, w[1] / s]
}

/// Law of `u` for independent per-position laws of `x = u G`, indexed with `u_0` most significant.
fn u_law(px: &[[f64; 2]]) -> Vec<f64> {
    let n = px.len();
    (0..1usize << n)
        .map(|idx| {
            let u: Vec<u8> = (0..n).map(|j| ((idx >> (n - 1 - j)) & 1) as u8).collect();
            let x = polar_transform(&u).unwrap();
            x.iter().zip(px).map(|(&b, p)| p[b as usize]).product()
        })
        .collect()
}

/// `P(u_i = 1 | u_<i)` from a full law, prefix given as the first `i` bits of `idx`.
fn conditional_one(law: &[f64], n: usize, i: usize, idx: usize) -> f64 {
    let prefix = idx >> (n - i);
    let (mut a, mut b) = (0.0, 0.0);
    for (v, &p) in law.iter().enumerate() {
        if v >> (n - i) == prefix {
            if (v >> (n - 1 - i)) & 1 == 1 {
                b += p;
            } else {
                a += p;
            }
        }
    }
    b / (a + b)
}

/// Encoder law of `u` at one level: posterior sampling on I, frozen values on F, prior argmax on S.
fn encoder_law(roles: &[Role], frozen: &[u8], prior: &[f64], post: &[f64]) -> Vec<f64> {
    let n = roles.len();
    (0..1usize << n)
        .map(|idx| {
            let mut q = 1.0;
            for i in 0..n {
                let bit = (idx >> (n - 1 - i)) & 1;
                q *= match roles[i] {
                    Role::Info => {
                        let p1 = conditional_one(post, n, i, idx);
                        if bit == 1 { p1 } else { 1.0 - p1 }
                    }
                    Role::Frozen => (bit == frozen[i] as usize) as u8 as f64,
                    Role::Shaping => {
                        let map = (conditional_one(prior, n, i, idx) > 0.5) as usize;
                        (bit == map) as u8 as f64
                    }
                };
            }
            q
        })
        .collect()
}

/// An `N = 4` code whose level 0 uses all three roles. Frozen indices above level 0 become
/// information bits: their prior is often exactly uniform, and a shaping tie would be decided by rounding.
fn toy() -> Quantizer {
    let mut spec = code(3.0, 1.0, 4, 200);
    spec.levels[0] = LevelSets { frozen: vec![0], shaping: vec![1], info: vec![2, 3] };
    spec.frozen_bits[0] = vec![1];
    for l in 1..spec.levels.len() {
        let roles: Vec<Role> = spec.levels[l].roles().into_iter().enumerate().map(|(i, r)| if r == Role::Frozen && i != 0 { Role::Info } else { r }).collect();
        spec.levels[l] = LevelSets::from_roles(&roles);
        spec.frozen_bits[l] = vec![0; spec.levels[l].frozen.len()];
    }
    Quantizer::new(spec).unwrap()
}

#[test]
fn four_position_encoder_matches_enumeration() {
    let q = toy();
    let ch = &q.channel;
    let y = [0.7, -2.1, 3.3, 0.2];
    let roles = q.spec.levels[0].roles();
    let post = u_law(&y.map(|v| posterior_bit(ch, 0, 0, v)));
    let prior = u_law(&[prior_bit(ch, 0, 0); 4]);
    let law = encoder_law(&roles, &[1, 0, 0, 0], &prior, &post);
    assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let runs = 200_000;
    let mut counts = vec![0usize; 16];
    let mut dec = ScDecoder::<2>::new(4).unwrap();
    let mut rng = stream(17, Purpose::Encode, 0);
    for _ in 0..runs {
        let out = q.encode_level(&mut dec, 0, &y, &[0; 4], EncodeRule::Standard, &mut rng);
        counts[out.u.iter().fold(0, |a, &b| 2 * a + b as usize)] += 1;
    }
    let tv: f64 = counts.iter().zip(&law).map(|(&c, &p)| (c as f64 / runs as f64 - p).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn four_position_decoder_matches_enumeration() {
    let q = toy();
    let ch = &q.channel;
    let chain = *ch.chain();
    let mut rng = stream(3, Purpose::Oracle, 0);
    for _ in 0..20 {
        let info: Vec<Vec<u8>> = q.spec.levels.iter().map(|s| s.info.iter().map(|_| rand::Rng::random::<bool>(&mut rng) as u8).collect()).collect();
        let mut res = [0u32; 4];
        for (l, sets) in q.spec.levels.iter().enumerate() {
            let mask = (1u32 << l) - 1;
            let px: Vec<[f64; 2]> = res.iter().map(|&r| prior_bit(ch, l, r & mask)).collect();
            let prior = u_law(&px);
            let roles = sets.roles();
            let mut u = [0u8; 4];
            let (mut fi, mut ii) = (0, 0);
            for i in 0..4 {
                let idx = u.iter().fold(0, |a, &b| 2 * a + b as usize);
                u[i] = match roles[i] {
                    Role::Frozen => {
                        fi += 1;
                        q.spec.frozen_bits[l][fi - 1]
                    }
                    Role::Info => {
                        ii += 1;
                        info[l][ii - 1]
                    }
                    Role::Shaping => (conditional_one(&prior, 4, i, idx) > 0.5) as u8,
                };
            }
            let x = polar_transform(&u).unwrap();
            for (r, b) in res.iter_mut().zip(x) {
                *r |= (b as u32) << l;
            }
        }
        let want: Vec<f64> = res.iter().map(|&r| chain.value(r)).collect();
        assert_eq!(q.decode_bits(&info).unwrap(), want);
    }
}

#[test]
fn decode_reproduces_encoder_and_bitstream_round_trips() {
    let q = Quantizer::new(code(3.0, 1.0, 256, 300)).unwrap();
    let blocks = q.run_blocks(100, 5, EncodeRule::Standard).unwrap();
    for b in &blocks {
        assert_eq!(b.rate_bits, q.spec.info_bits());
        assert_eq!(q.decode_bits(&b.info_bits).unwrap(), b.reconstruction);
        let bytes = write_bitstream(&q.spec, &b.info_bits).unwrap();
        assert_eq!(read_bitstream(&q.spec, &bytes).unwrap(), b.info_bits);
    }
}

#[test]
fn flipped_info_bit_changes_reconstruction() {
    let q = Quantizer::new(code(3.0, 1.0, 256, 300)).unwrap();
    let b = &q.run_blocks(1, 2, EncodeRule::Standard).unwrap()[0];
    for l in 0..b.info_bits.len() {
        for i in [0, b.info_bits[l].len() / 2] {
            if b.info_bits[l].is_empty() {
                continue;
            }
            let mut bits = b.info_bits.clone();
            bits[l][i] ^= 1;
            let x = q.decode_bits(&bits).unwrap();
            assert!(x.iter().zip(&b.reconstruction).any(|(a, c)| a != c), "level {l} index {i}");
        }
    }
}

#[test]
fn bitstream_rejects_foreign_spec_and_truncation() {
    let a = code(3.0, 1.0, 64, 100);
    let mut b = a.clone();
    b.seeds.construction += 1;
    let q = Quantizer::new(a.clone()).unwrap();
    let blk = &q.run_blocks(1, 1, EncodeRule::Standard).unwrap()[0];
    let bytes = write_bitstream(&a, &blk.info_bits).unwrap();
    assert!(matches!(read_bitstream(&b, &bytes), Err(Error::Hash { .. })));
    assert!(read_bitstream(&a, &bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn identical_seeds_identical_blocks() {
    let q = Quantizer::new(code(3.0, 1.0, 128, 100)).unwrap();
    assert_eq!(q.run_blocks(8, 4, EncodeRule::Standard).unwrap(), q.run_blocks(8, 4, EncodeRule::Standard).unwrap());
}

#[test]
fn sampling_everywhere_gives_target_distortion() {
    let delta = 1.0;
    let q = Quantizer::new(code(3.0, delta, 256, 50)).unwrap();
    let blocks = q.run_blocks(300, 9, EncodeRule::SampleAll).unwrap();
    let r = polarq::quantizer::measure(&blocks, 3.0, 9).unwrap();
    assert!((r.distortion - delta).abs() <= 3.0 * r.distortion_std_err, "{} +- {}", r.distortion, r.distortion_std_err);
}

#[test]
fn rate_one_point_distortion_in_range() {
    let q = Quantizer::new(code(3.0, 1.0, 1024, 2000)).unwrap();
    let r = polarq::quantizer::measure(&q.run_blocks(100, 3, EncodeRule::Standard).unwrap(), 3.0, 3).unwrap();
    assert!((0.9..=1.3).contains(&r.distortion), "distortion {}", r.distortion);
    assert!((1.3..=2.2).contains(&r.rate), "rate {}", r.rate);
}

#[test]
fn reencoding_a_reconstruction_does_not_hurt() {
    let q = Quantizer::new(code(3.0, 1.0, 256, 500)).unwrap();
    let blocks = q.run_blocks(20, 6, EncodeRule::Standard).unwrap();
    let mut rng = stream(6, Purpose::Encode, 1 << 40);
    let again: f64 = blocks.iter().map(|b| q.encode(&b.reconstruction, EncodeRule::Standard, &mut rng).unwrap().distortion).sum::<f64>();
    let first: f64 = blocks.iter().map(|b| b.distortion).sum::<f64>();
    assert!(again <= first, "{again} > {first}");
}

#[test]
fn quantization_noise_is_nearly_gaussian() {
    let q = Quantizer::new(code(3.0, 0.1, 1024, 1000)).unwrap();
    let blocks = q.run_blocks(20, 8, EncodeRule::Standard).unwrap();
    let mut e = Vec::new();
    for (b, blk) in blocks.iter().enumerate() {
        let y = q.source_block(8, b as u64);
        e.extend(y.iter().zip(&blk.reconstruction).map(|(a, c)| a - c));
    }
    let n = e.len() as f64;
    let m = e.iter().sum::<f64>() / n;
    let v = e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let k = e.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v);
    assert!((k - 3.0).abs() <= 0.2, "kurtosis {k}");
}

#[test]
fn zero_rate_code_sends_a_fixed_word() {
    let mut spec = code(3.0, 1.0, 64, 100);
    for s in spec.levels.iter_mut() {
        let roles: Vec<Role> = s.roles().into_iter().map(|r| if r == Role::Info { Role::Shaping } else { r }).collect();
        *s = LevelSets::from_roles(&roles);
    }
    let q = Quantizer::new(spec).unwrap();
    let blocks = q.run_blocks(400, 2, EncodeRule::Standard).unwrap();
    let c = blocks[0].reconstruction.clone();
    assert!(blocks.iter().all(|b| b.rate_bits == 0 && b.reconstruction == c));
    let want = 9.0 + c.iter().map(|v| v * v).sum::<f64>() / 64.0;
    let r = polarq::quantizer::measure(&blocks, 3.0, 2).unwrap();
    assert!((r.distortion - want).abs() <= 4.0 * r.distortion_std_err, "{} vs {}", r.distortion, want);
}

proptest! {
    #[test]
    fn reconstruction_stays_in_window(seed in 0u64..1000, eta in 0.1f64..3.0) {
        let chain = polarq::lattice::PartitionChain::new(eta, 6, 2.0).unwrap();
        let mut rng = stream(seed, Purpose::Oracle, 0);
        let u: Vec<Vec<u8>> = (0..6).map(|_| (0..32).map(|_| rand::Rng::random::<bool>(&mut rng) as u8).collect()).collect();
        let x = reconstruct(&chain, &u).unwrap();
        prop_assert!(x.iter().all(|&v| v >= -32.0 * eta - 1e-9 && v < 32.0 * eta));
    }
}
