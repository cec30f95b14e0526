//! Lossy compression with side information at the decoder using a nested pair.
//!
//! Runs at a small block length so it finishes in seconds; the CLI `wz-sim`
//! command runs the full-size configuration.

use polarq::nested::{build_nested, simulate_wz, wz_params, NestedConfig, Scheme};

fn main() -> polarq::Result<()> {
    let p = wz_params(1.0, 1.0, 0.5)?;
    println!("alpha_q {:.4}, alpha_c {:.4}, gamma {:.4}, bound {:.3} bits", p.alpha_q, p.alpha_c, p.gamma, p.rate_bound);
    let cfg = NestedConfig { trials: 1000, ..NestedConfig::wyner_ziv(1024) };
    let nested = build_nested(Scheme::WynerZiv(p), &cfg)?;
    nested.check_nesting()?;
    let rep = nested.report();
    println!("per level |I^Q| {:?}, |I^C| {:?}, sent {:?}", rep.info_q, rep.info_c, rep.d_info);
    let r = simulate_wz(&nested, 50, 3)?;
    println!(
        "rate {:.4} bits, distortion {:.4} +- {:.4} (target {}), block errors {}/{}",
        r.rate, r.distortion, r.distortion_std_err, r.target, r.block_errors, r.blocks
    );
    Ok(())
}
