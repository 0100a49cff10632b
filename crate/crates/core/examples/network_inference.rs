//! Run the bundled network spec end to end and compare with the classical pass.
//!
//! `cargo run --example network_inference [path/to/spec.json]`

use std::path::PathBuf;

use qnn_core::network::{quantum_forward, NetworkSpec, RunOptions};

fn main() -> qnn_core::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/network_m4_k1.json"));
    let net = NetworkSpec::load(&path)?;
    let x = net.input_or_random()?;
    let report = quantum_forward(&net, &x, RunOptions { shots: 10_000, ..Default::default() })?;

    println!("geometry {:?}", report.geometry);
    println!("classical y {:?}", report.y_reference);
    println!("encoded   y {:?}", report.y_encoded);
    if let Some(h) = &report.histogram {
        println!("sampled   y {:?}", h.probabilities);
    }
    println!("l2 {:.3e} vs ε {}, passed {}", report.comparison.l2, report.comparison.epsilon, report.passed);
    Ok(())
}
