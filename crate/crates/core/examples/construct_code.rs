//! Building a multilevel quantizer code and inspecting its index sets.

use polarq::baselines::{design_channel, design_quantizer};
use polarq::lattice::{DEFAULT_FLATNESS, DEFAULT_LEVELS};
use polarq::polar::{Allocation, ConstructionConfig, FrozenChoice, Thresholds};

fn main() -> polarq::Result<()> {
    let ch = design_channel(3.0, 1.0, DEFAULT_LEVELS, DEFAULT_FLATNESS)?;
    let cfg = ConstructionConfig {
        trials: 1000,
        allocation: Allocation::Thresholds,
        frozen: FrozenChoice::Random { seed: 1 },
        thresholds: Thresholds { shaping: 1e-3, frozen: 0.1 },
        ..ConstructionConfig::new(1024)
    };
    let spec = design_quantizer(&ch, &cfg)?;
    println!("level  |I|   |F|   |S|   I(X;Y|X_<l)");
    for (l, s) in spec.levels.iter().enumerate() {
        println!("{l:>5} {:>5} {:>5} {:>5}   {:.4}", s.info.len(), s.frozen.len(), s.shaping.len(), spec.construction.level_information[l]);
    }
    println!("rate {:.4} bits, bound {:.4} bits", spec.rate(), ch.params.rd_rate());
    Ok(())
}
