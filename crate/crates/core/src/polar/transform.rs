use crate::error::{Error, Result};

/// `x = u G_N` over GF(2) with `G_N` the `m`-fold Kronecker power of `[[1,0],[1,1]]`, in place.
///
/// No bit-reversal permutation is applied. The transform is an involution.
pub fn polar_transform_in_place(bits: &mut [u8]) -> Result<()> {
    let n = bits.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Size(n));
    }
    let mut h = 1;
    while h < n {
        for block in bits.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x ^= *y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Out-of-place form of [`polar_transform_in_place`].
pub fn polar_transform(bits: &[u8]) -> Result<Vec<u8>> {
    let mut out = bits.to_vec();
    polar_transform_in_place(&mut out)?;
    Ok(out)
}
