//! Quantize Gaussian blocks, pack the bits, and rebuild the reconstruction from the bitstream alone.

use polarq::baselines::{design_channel, design_quantizer};
use polarq::polar::{Allocation, ConstructionConfig, FrozenChoice, Thresholds};
use polarq::quantizer::{measure, read_bitstream, write_bitstream, EncodeRule, Quantizer};

fn main() -> polarq::Result<()> {
    let ch = design_channel(3.0, 1.0, 6, 1e-7)?;
    let cfg = ConstructionConfig {
        trials: 1000,
        allocation: Allocation::Thresholds,
        frozen: FrozenChoice::Random { seed: 1 },
        thresholds: Thresholds { shaping: 1e-3, frozen: 0.1 },
        ..ConstructionConfig::new(1024)
    };
    let q = Quantizer::new(design_quantizer(&ch, &cfg)?)?;
    let blocks = q.run_blocks(50, 11, EncodeRule::Standard)?;

    let bytes = write_bitstream(&q.spec, &blocks[0].info_bits)?;
    let bits = read_bitstream(&q.spec, &bytes)?;
    assert_eq!(q.decode_bits(&bits)?, blocks[0].reconstruction);
    println!("block 0: {} bits in {} bytes, decoded exactly", blocks[0].rate_bits, bytes.len());

    let r = measure(&blocks, 3.0, 11)?;
    println!("rate {:.4} bits, distortion {:.4} +- {:.4}, snr {:.3} dB", r.rate, r.distortion, r.distortion_std_err, r.snr_db);
    Ok(())
}
