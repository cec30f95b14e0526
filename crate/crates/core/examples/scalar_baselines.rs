//! Optimal scalar quantizers against the rate-distortion bound.

use polarq::baselines::{lloyd_max, rd_bound_snr, TABLE_REFERENCE_DB};

fn main() -> polarq::Result<()> {
    println!("rate  lloyd_max_db  rd_bound_db  reference_db  tcq_db");
    for &(rate, reference, tcq) in &TABLE_REFERENCE_DB {
        let q = lloyd_max(rate, 3.0)?;
        println!("{rate:>4} {:>13.2} {:>12.2} {reference:>13.2} {tcq:>7.2}", q.snr_db, rd_bound_snr(rate as f64)?);
    }
    let q = lloyd_max(2, 1.0)?;
    println!("2-bit levels {:?}", q.levels.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!("2-bit thresholds {:?} after {} iterations", q.thresholds.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(), q.iterations);
    Ok(())
}
