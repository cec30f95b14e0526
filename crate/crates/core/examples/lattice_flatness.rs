//! Flatness factor of a scaled integer lattice, the lattice scale picked
//! for a test channel, and how close the shaped source density is to Gaussian.

use polarq::baselines::design_channel;
use polarq::lattice::{eta_for_flatness, flatness_factor, theta_dual, theta_primal, DEFAULT_FLATNESS, DEFAULT_LEVELS};

fn main() -> polarq::Result<()> {
    for eta in [0.5, 1.0, 1.5, 2.0] {
        let eps = flatness_factor(eta, 1.0);
        let gap = theta_dual(eta, 1.0) - theta_primal(eta, 1.0);
        println!("eta {eta:.1}: flatness {eps:.4e} (theta sums differ by {gap:.1e})");
    }
    println!("largest eta flat to 1e-7 at sigma 1: {:.6}", eta_for_flatness(1.0, 1e-7));

    let ch = design_channel(3.0, 1.0, DEFAULT_LEVELS, DEFAULT_FLATNESS)?;
    let (distance, bound) = ch.variational_distance_bound()?;
    println!(
        "sigma_s 3, delta 1: eta {:.6}, window {} points, distance to Gaussian {distance:.3e} (bound {bound:.3e})",
        ch.chain().eta,
        ch.chain().points()
    );
    Ok(())
}
