//! Saving and loading versioned spec files, and what happens when one is corrupted.

use polarq::baselines::{design_channel, design_quantizer};
use polarq::io::{load_spec, save_spec, spec_from_bytes, spec_to_bytes};
use polarq::polar::{CodeSpec, ConstructionConfig};
use polarq::Error;

fn main() -> polarq::Result<()> {
    let ch = design_channel(3.0, 1.0, 6, 1e-7)?;
    let spec = design_quantizer(&ch, &ConstructionConfig { trials: 200, ..ConstructionConfig::new(256) })?;
    let path = std::env::temp_dir().join("polarq_spec_example.json");
    save_spec(&spec, &path)?;
    let back: CodeSpec = load_spec(&path)?;
    println!("round trip equal: {}", back == spec);

    let mut bytes = spec_to_bytes(&spec)?;
    let at = bytes.windows(6).position(|w| w == b"\"info\"").expect("index sets present") + 9;
    bytes[at] = if bytes[at] == b'1' { b'2' } else { b'1' };
    match spec_from_bytes::<CodeSpec>(&bytes) {
        Err(Error::Hash { .. }) => println!("tampered file rejected by hash"),
        other => println!("unexpected: {:?}", other.map(|s| s.n)),
    }
    std::fs::remove_file(path)?;
    Ok(())
}
