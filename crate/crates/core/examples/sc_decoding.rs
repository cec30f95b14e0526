//! Polar transform and successive cancellation on a binary symmetric channel.

use polarq::polar::{polar_transform, sc_probabilities, ScDecoder};
use polarq::rng::{stream, Purpose};
use rand::Rng;

fn main() -> polarq::Result<()> {
    let n = 1024;
    let p = 0.05f64;
    let llr = ((1.0 - p) / p).ln();
    let mut rng = stream(3, Purpose::Channel, 0);

    // Genie passes on noisy all-zero words estimate each index's Bhattacharyya parameter.
    let mut z = vec![0.0; n];
    for _ in 0..400 {
        let ch: Vec<f64> = (0..n).map(|_| if rng.random_bool(p) { -llr } else { llr }).collect();
        for (zi, q) in z.iter_mut().zip(sc_probabilities(&ch, &vec![0; n])?) {
            *zi += 2.0 * (q * (1.0 - q)).sqrt();
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let info: Vec<usize> = order[..n / 2].to_vec();
    let mut frozen = vec![true; n];
    for &i in &info {
        frozen[i] = false;
    }

    let mut dec = ScDecoder::<1>::new(n)?;
    let (mut errors, blocks) = (0, 200);
    for _ in 0..blocks {
        let mut u = vec![0u8; n];
        for &i in &info {
            u[i] = rng.random::<bool>() as u8;
        }
        let x = polar_transform(&u)?;
        let ch: Vec<[f64; 1]> = x.iter().map(|&b| [if (b ^ rng.random_bool(p) as u8) == 0 { llr } else { -llr }]).collect();
        let mut out = vec![0u8; n];
        dec.run(&ch, &mut out, |i, l| if frozen[i] { 0 } else { (l[0] < 0.0) as u8 });
        errors += (out != u) as usize;
    }
    println!("rate 1/2 over BSC({p}): {errors}/{blocks} block errors");
    Ok(())
}
