//! Channel coding with interference known at the transmitter.
//!
//! Small block length for speed; the CLI `gp-sim` command runs the full-size configuration.

use polarq::nested::{build_nested, gp_params, simulate_gp, NestedConfig, Scheme, GP_POWER_BACKOFF};

fn main() -> polarq::Result<()> {
    let nominal = gp_params(1.0, 1.0, 1.0)?;
    println!("capacity {:.4} bits, alpha_c {:.4}, alpha_q {:.4}", nominal.capacity, nominal.alpha_c, nominal.alpha_q);
    let p = gp_params(GP_POWER_BACKOFF, 1.0, 1.0)?;
    let cfg = NestedConfig { trials: 1000, ..NestedConfig::gelfand_pinsker(1024) };
    let nested = build_nested(Scheme::GelfandPinsker(p), &cfg)?;
    let r = simulate_gp(&nested, 50, 3)?;
    println!(
        "message rate {:.4} bits, helper rate {:.4}, power {:.4} +- {:.4}, block errors {}/{} ({} without helper bits)",
        r.message_rate, r.helper_rate, r.power, r.power_std_err, r.block_errors, r.blocks, r.unaided_errors
    );
    Ok(())
}
