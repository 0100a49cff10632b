//! `qnn`: lemma verification, network runs and QRAM structure builds.
//!
//! Every table printed here is rendered from the JSON report that is also
//! written to `--out`, so the two never disagree.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use qnn_core::encodings::Mode;
use qnn_core::network::{quantum_forward, NetworkSpec, RunOptions};
use qnn_core::qram::MatrixQramStructure;
use qnn_core::tensor::Tensor;
use qnn_core::verify::{verify_all, VerifyConfig};
use qnn_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qnn", version, about = "Block-encoding simulator for coherent residual networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Semantic,
    Circuit,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Semantic => Mode::Semantic,
            ModeArg::Circuit => Mode::Circuit,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every ledger suite and the circuit cross-checks.
    VerifyLemmas {
        /// Optional JSON file with `seed`, `cases`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test hook: corrupt the recorded α of one lemma.
        #[arg(long, hide = true)]
        inject_alpha_fault: Option<String>,
    },
    /// Run a network spec through the encoded pipeline and compare with the classical pass.
    RunNetwork {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "semantic")]
        mode: ModeArg,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; a `.csv` with per-stage rows is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        shots: u64,
    },
    /// Preprocess a matrix file into a QRAM structure file.
    BuildQram {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Angle-word bits.
        #[arg(long, default_value_t = 32)]
        bits: usize,
        /// Divide by the spectral norm plus a small margin when ‖W‖₂ > 1.
        #[arg(long)]
        rescale: bool,
    },
}

const RESCALE_MARGIN: f64 = 1e-9;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QNN_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::VerifyLemmas { config, seed, cases, out, inject_alpha_fault } => {
            verify_lemmas(config.as_deref(), seed, cases, out.as_deref(), inject_alpha_fault)
        }
        Command::RunNetwork { config, mode, seed, out, shots } => run_network(&config, mode.into(), seed, out.as_deref(), shots),
        Command::BuildQram { config, out, bits, rescale } => build_qram(&config, &out, bits, rescale),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_json(path: Option<&Path>, json: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, json)?;
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn f(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.3e}"),
        None => "-".into(),
    }
}

fn verify_lemmas(
    config: Option<&Path>,
    seed: Option<u64>,
    cases: Option<usize>,
    out: Option<&Path>,
    fault: Option<String>,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => serde_json::from_str::<VerifyConfig>(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => VerifyConfig::default(),
    };
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.cases = cases.unwrap_or(cfg.cases);
    cfg.corrupt_alpha = fault.or(cfg.corrupt_alpha);

    let report = verify_all(&cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    write_json(out, &json)?;

    let v: Value = serde_json::from_str(&json)?;
    println!("{:<24} {:>6} {:>9} {:>12}", "lemma", "cases", "failures", "worst a/b");
    for s in v["suites"].as_array().into_iter().flatten() {
        println!(
            "{:<24} {:>6} {:>9} {:>12}",
            s["lemma"].as_str().unwrap_or("?"),
            s["cases"].to_string(),
            s["failures"].to_string(),
            f(&s["worst_ratio"])
        );
    }
    let circuit = v["circuit"].as_array().cloned().unwrap_or_default();
    let mut names: Vec<&str> = circuit.iter().filter_map(|c| c["primitive"].as_str()).collect();
    names.dedup();
    println!("\n{:<24} {:>6} {:>9} {:>12} {:>12}", "circuit", "cases", "failures", "unitarity", "block gap");
    for name in names {
        let rows: Vec<&Value> = circuit.iter().filter(|c| c["primitive"] == name).collect();
        let worst = |key: &str| rows.iter().filter_map(|c| c[key].as_f64()).fold(0.0, f64::max);
        let failures = rows.iter().filter(|c| c["passed"] != true).count();
        println!(
            "{:<24} {:>6} {:>9} {:>12.3e} {:>12.3e}",
            name,
            rows.len(),
            failures,
            worst("unitarity_gap"),
            worst("block_gap")
        );
    }
    println!("\npassed: {}", v["passed"]);
    match report.failure() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run_network(config: &Path, mode: Mode, seed: Option<u64>, out: Option<&Path>, shots: u64) -> Result<()> {
    let mut net = NetworkSpec::load(config)?;
    if let Some(s) = seed {
        net.seed = s;
    }
    let x = net.input_or_random()?;
    let report = quantum_forward(&net, &x, RunOptions { mode, shots })?;
    let json = serde_json::to_string_pretty(&report)?;
    write_json(out, &json)?;
    if let Some(p) = out {
        std::fs::write(p.with_extension("csv"), report.stages_csv()?)?;
    }

    let v: Value = serde_json::from_str(&json)?;
    println!("{:<22} {:>10} {:>8} {:>11} {:>11} {:>7}", "stage", "alpha", "ancillas", "bound", "actual", "ok");
    for s in v["stages"].as_array().into_iter().flatten() {
        println!(
            "{:<22} {:>10} {:>8} {:>11} {:>11} {:>7}",
            s["stage"].as_str().unwrap_or("?"),
            f(&s["alpha"]),
            s["ancillas"].to_string(),
            f(&s["eps_bound"]),
            f(&s["eps_actual"]),
            s["passed"].to_string()
        );
    }
    let c = &v["comparison"];
    println!(
        "\nl2 {} (epsilon {})  argmax {} vs {}  passed: {}",
        f(&c["l2"]),
        f(&c["epsilon"]),
        c["argmax_encoded"],
        c["argmax_reference"],
        v["passed"]
    );
    if let Some(h) = v.get("histogram").filter(|h| !h.is_null()) {
        println!("histogram: {h}");
    }
    if report.passed {
        return Ok(());
    }
    let (lemma, actual, bound) = match report.stages.iter().find(|s| !s.passed) {
        Some(s) => (format!("stage {}", s.stage), s.eps_actual.unwrap_or(f64::NAN), s.eps_bound),
        None => ("pooled output".into(), report.comparison.l2, report.comparison.epsilon),
    };
    Err(Error::BoundViolation { lemma, actual, bound })
}

fn build_qram(config: &Path, out: &Path, bits: usize, rescale: bool) -> Result<()> {
    let mut w = Tensor::load(config)?.to_matrix()?;
    let norm = w.spectral_norm();
    if norm > 1.0 {
        if !rescale {
            return Err(Error::Config(format!("‖W‖₂ = {norm} exceeds 1; pass --rescale")));
        }
        w = w.scale_re(1.0 / (norm + RESCALE_MARGIN));
    }
    let s = MatrixQramStructure::build(&w, bits)?;
    let json = s.to_json()?;
    std::fs::write(out, &json)?;

    let v: Value = serde_json::from_str(&json)?;
    let a: Vec<f64> = v["col_norms"].as_array().into_iter().flatten().filter_map(Value::as_f64).collect();
    let mean = a.iter().sum::<f64>() / a.len().max(1) as f64;
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let max = a.iter().copied().fold(0.0, f64::max);
    println!("columns {}  bits {}  ‖W‖₂ {:.6}{}", a.len(), v["d"], norm, if norm > 1.0 { " (rescaled)" } else { "" });
    println!("a_j  min {min:.6}  mean {mean:.6}  max {max:.6}");
    println!("rounding gap {:.3e}", s.rounding_error());
    Ok(())
}
