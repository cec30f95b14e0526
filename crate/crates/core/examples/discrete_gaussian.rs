//! Sampling the truncated lattice Gaussian and checking its coset masses.

use polarq::lattice::{DiscreteGaussian, PartitionChain};
use polarq::rng::{stream, Purpose};

fn main() -> polarq::Result<()> {
    let chain = PartitionChain::new(0.5, 6, 2.0)?;
    let dg = DiscreteGaussian::new(chain, 0.0)?;
    println!("captured mass {:.15}, second moment {:.6}", dg.captured_mass(), dg.second_moment());

    let mut rng = stream(7, Purpose::Oracle, 0);
    let draws = 200_000;
    let mut odd = 0usize;
    let mut energy = 0.0;
    for _ in 0..draws {
        let k = dg.sample(&mut rng);
        odd += chain.residue(k) as usize & 1;
        energy += (k as f64 * chain.eta).powi(2);
    }
    println!("odd residues: sampled {:.4}, exact {:.4}", odd as f64 / draws as f64, dg.coset_mass(1, 1) / (dg.coset_mass(1, 0) + dg.coset_mass(1, 1)));
    println!("second moment: sampled {:.4}", energy / draws as f64);
    let (p0, p1) = dg.coset_conditional(1, 1)?;
    println!("P(x_1 | x_0 = 1) = ({p0:.4}, {p1:.4})");
    Ok(())
}
