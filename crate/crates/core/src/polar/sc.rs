//! Successive cancellation in the LLR domain.
//!
//! A decoder runs `K` LLR trees in lockstep over one shared sequence of
//! bit decisions. Component 0 is usually the prior-only channel and the
//! others are channels with observations.

use crate::channel::clamp_llr;
use crate::error::{Error, Result};

/// Exact check-node combination `ln((1 + e^(a+b)) / (e^a + e^b))`.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let (x, y) = (a.abs(), b.abs());
    if (x - y).abs() > 40.0 {
        // Both correction terms are below e^-40 relative to the result.
        return s * x.min(y);
    }
    let e1 = (-(a + b).abs()).exp();
    let e2 = (-(a - b).abs()).exp();
    s * a.abs().min(b.abs()) + ((e1 - e2) / (1.0 + e2)).ln_1p()
}

/// Variable-node combination given the upper-branch bit.
#[inline]
pub fn g_node(a: f64, b: f64, u: u8) -> f64 {
    if u == 0 {
        b + a
    } else {
        b - a
    }
}

/// `P(0)` from an LLR.
#[inline]
pub fn prob_zero(llr: f64) -> f64 {
    1.0 / (1.0 + (-llr).exp())
}

/// Bhattacharyya value `2 sqrt(p (1 - p))` of an LLR, i.e. `sech(L / 2)`.
#[inline]
pub fn bhattacharyya_of_llr(llr: f64) -> f64 {
    let e = (-0.5 * llr.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Reusable SC decoder for block length `n` with `K` lockstep channels.
pub struct ScDecoder<const K: usize> {
    n: usize,
    llr: Vec<Vec<[f64; K]>>,
    beta: Vec<Vec<u8>>,
    next: usize,
}

impl<const K: usize> ScDecoder<K> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Size(n));
        }
        let depth = n.trailing_zeros() as usize;
        let llr = (0..=depth).map(|d| vec![[0.0; K]; n >> d]).collect();
        let beta = (0..=depth).map(|d| vec![0u8; n >> d]).collect();
        Ok(Self { n, llr, beta, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Runs one SC pass. `decide(i, llrs)` receives the `K` LLRs of `u_i`
    /// given the decided prefix and returns the decision. Writes `u` and
    /// returns the re-encoded codeword `x = u G_N`.
    pub fn run<F>(&mut self, channel: &[[f64; K]], u: &mut [u8], mut decide: F) -> &[u8]
    where
        F: FnMut(usize, &[f64; K]) -> u8,
    {
        assert_eq!(channel.len(), self.n);
        assert_eq!(u.len(), self.n);
        for (dst, src) in self.llr[0].iter_mut().zip(channel) {
            for k in 0..K {
                dst[k] = clamp_llr(src[k]);
            }
        }
        self.next = 0;
        self.recurse(0, u, &mut decide);
        &self.beta[0]
    }

    fn recurse<F>(&mut self, depth: usize, u: &mut [u8], decide: &mut F)
    where
        F: FnMut(usize, &[f64; K]) -> u8,
    {
        let size = self.n >> depth;
        if size == 1 {
            let i = self.next;
            let bit = decide(i, &self.llr[depth][0]) & 1;
            u[i] = bit;
            self.beta[depth][0] = bit;
            self.next += 1;
            return;
        }
        let half = size / 2;
        {
            let (up, down) = self.llr.split_at_mut(depth + 1);
            let src = &up[depth];
            let dst = &mut down[0];
            for j in 0..half {
                let (a, b) = (&src[j], &src[j + half]);
                for k in 0..K {
                    dst[j][k] = boxplus(a[k], b[k]);
                }
            }
        }
        self.recurse(depth + 1, u, decide);
        {
            let (bu, bd) = self.beta.split_at_mut(depth + 1);
            bu[depth][..half].copy_from_slice(&bd[0][..half]);
            let (up, down) = self.llr.split_at_mut(depth + 1);
            let src = &up[depth];
            let dst = &mut down[0];
            let va = &bu[depth];
            for j in 0..half {
                let (a, b) = (&src[j], &src[j + half]);
                for k in 0..K {
                    dst[j][k] = clamp_llr(g_node(a[k], b[k], va[j]));
                }
            }
        }
        self.recurse(depth + 1, u, decide);
        let (bu, bd) = self.beta.split_at_mut(depth + 1);
        let cur = &mut bu[depth];
        let vb = &bd[0];
        for j in 0..half {
            cur[j] ^= vb[j];
            cur[j + half] = vb[j];
        }
    }
}

/// Genie-aided pass: per-index `P(u_i = 0 | u_<i, channel)` with the prefix taken from `u`.
pub fn sc_probabilities(channel_llr: &[f64], u: &[u8]) -> Result<Vec<f64>> {
    let mut dec = ScDecoder::<1>::new(channel_llr.len())?;
    if u.len() != channel_llr.len() {
        return Err(Error::Domain(format!("u has length {}, expected {}", u.len(), channel_llr.len())));
    }
    let ch: Vec<[f64; 1]> = channel_llr.iter().map(|&l| [l]).collect();
    let mut probs = vec![0.0; u.len()];
    let mut out = vec![0u8; u.len()];
    dec.run(&ch, &mut out, |i, l| {
        probs[i] = prob_zero(l[0]);
        u[i]
    });
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::polar_transform;
    use proptest::prelude::*;

    fn direct_boxplus(a: f64, b: f64) -> f64 {
        ((1.0 + (a + b).exp()) / (a.exp() + b.exp())).ln()
    }

    /// Exact conditionals by enumerating all inputs of a product channel with per-position priors.
    fn brute_force(p0: &[f64], u: &[u8]) -> Vec<f64> {
        let n = p0.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let (mut z0, mut z1) = (0.0, 0.0);
            for tail in 0..(1usize << (n - i)) {
                let mut v = u[..i].to_vec();
                for t in 0..(n - i) {
                    v.push(((tail >> t) & 1) as u8);
                }
                let x = polar_transform(&v).unwrap();
                let p: f64 = x.iter().zip(p0).map(|(&b, &q)| if b == 0 { q } else { 1.0 - q }).product();
                if v[i] == 0 {
                    z0 += p;
                } else {
                    z1 += p;
                }
            }
            out[i] = z0 / (z0 + z1);
        }
        out
    }

    #[test]
    fn boxplus_matches_definition() {
        for &(a, b) in &[(0.3, -1.2), (4.0, 5.0), (-7.5, -0.1), (0.0, 3.0), (12.0, -11.0)] {
            assert!((boxplus(a, b) - direct_boxplus(a, b)).abs() < 1e-12, "{a} {b}");
        }
        assert!((boxplus(900.0, 800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn sech_form() {
        for &l in &[0.0, 0.4, -3.0, 20.0] {
            let p = prob_zero(l);
            let want = 2.0 * (p * (1.0 - p)).sqrt();
            assert!((bhattacharyya_of_llr(l) - want).abs() < 1e-6 * want);
        }
        assert!((bhattacharyya_of_llr(80.0) - 2.0 * (-40.0f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn single_position_returns_channel() {
        let p = sc_probabilities(&[0.7], &[0]).unwrap();
        assert!((p[0] - prob_zero(0.7)).abs() < 1e-15);
    }

    #[test]
    fn chain_rule_at_four() {
        let p0 = [0.507, 0.81, 0.33, 0.62];
        let llr: Vec<f64> = p0.iter().map(|p: &f64| (p / (1.0 - p)).ln()).collect();
        for bits in 0..16u32 {
            let u: Vec<u8> = (0..4).map(|i| ((bits >> i) & 1) as u8).collect();
            let sc = sc_probabilities(&llr, &u).unwrap();
            let bf = brute_force(&p0, &u);
            for i in 0..4 {
                assert!((sc[i] - bf[i]).abs() < 1e-10, "u={u:?} i={i}");
            }
            // Product of the sequential conditionals is the joint probability of u.
            let x = polar_transform(&u).unwrap();
            let joint: f64 = x.iter().zip(&p0).map(|(&b, &q)| if b == 0 { q } else { 1.0 - q }).product();
            let prod: f64 = sc.iter().zip(&u).map(|(&p, &b)| if b == 0 { p } else { 1.0 - p }).product();
            assert!((joint - prod).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_channel_gives_half() {
        let u = vec![1u8, 0, 1, 1, 0, 0, 1, 0];
        let p = sc_probabilities(&[0.0; 8], &u).unwrap();
        assert!(p.iter().all(|&q| (q - 0.5).abs() < 1e-15));
    }

    #[test]
    fn decoder_returns_codeword() {
        let mut dec = ScDecoder::<2>::new(16).unwrap();
        let ch = vec![[0.3, -0.4]; 16];
        let mut u = vec![0u8; 16];
        let want: Vec<u8> = (0..16).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
        let x = dec.run(&ch, &mut u, |i, _| want[i]).to_vec();
        assert_eq!(u, want);
        assert_eq!(x, polar_transform(&want).unwrap());
    }

    proptest! {
        #[test]
        fn boxplus_symmetric_and_bounded(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let v = boxplus(a, b);
            prop_assert!((v - boxplus(b, a)).abs() < 1e-12);
            prop_assert!(v.abs() <= a.abs().min(b.abs()) + 1e-12);
        }

        #[test]
        fn lockstep_components_independent(l in proptest::collection::vec(-8.0f64..8.0, 32), bits in proptest::collection::vec(0u8..2, 32)) {
            let single = sc_probabilities(&l, &bits).unwrap();
            let mut dec = ScDecoder::<2>::new(32).unwrap();
            let ch: Vec<[f64; 2]> = l.iter().map(|&v| [v, -v]).collect();
            let mut u = vec![0u8; 32];
            let mut seen = vec![[0.0; 2]; 32];
            dec.run(&ch, &mut u, |i, v| { seen[i] = *v; bits[i] });
            for i in 0..32 {
                prop_assert_eq!(prob_zero(seen[i][0]), single[i]);
            }
        }
    }
}
