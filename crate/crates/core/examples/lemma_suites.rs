//! Run every ledger suite with a handful of cases and print the summaries.

use qnn_core::verify::{verify_all, VerifyConfig};

fn main() -> qnn_core::Result<()> {
    let report = verify_all(&VerifyConfig { seed: 1, cases: 20, corrupt_alpha: None })?;
    for s in &report.suites {
        println!("{:<24} {} cases, {} failures, worst actual/bound {:.3}", s.lemma, s.cases, s.failures, s.worst_ratio);
    }
    println!("circuit checks: {} (all passed: {})", report.circuit.len(), report.circuit.iter().all(|c| c.passed));
    println!("passed: {}", report.passed);
    Ok(())
}
