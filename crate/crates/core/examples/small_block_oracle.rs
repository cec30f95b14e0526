//! Exhaustive tables of a four-position level channel with eight observation bins.

use polarq::baselines::{design_channel, oracle_sc_agreement, small_n_oracle};

fn main() -> polarq::Result<()> {
    let ch = design_channel(3.0, 1.0, 6, 1e-7)?;
    let binned = ch.binned(ch.equiprobable_binning(8)?);
    for (level, cosets) in [(0, [0u32; 4]), (1, [0, 1, 1, 0])] {
        let t = small_n_oracle(&ch, &binned, level, &cosets, None, 0.5)?;
        println!("level {level}, cosets {cosets:?}");
        for (i, role) in t.sets.roles().iter().enumerate() {
            println!("  u_{i}: {role:?}  z_prior {:.6}  z_post {:.6}", t.z_prior[i], t.z_post[i]);
        }
        println!("  V(P, Q) = {:.4e} <= bound {:.4e}", t.variation, t.bound);
        println!("  SC vs enumeration: {:.1e}", oracle_sc_agreement(&ch, &binned, level, &cosets)?);
    }
    Ok(())
}
