//! One skip-and-normalize residual block followed by the quadratic output layer.

use qnn_core::blocks::{output_block, skip_norm_block, ResidualBlockSpec};
use qnn_core::encodings::{BlockEncoding, Mode};
use qnn_core::linalg::{c64, CMatrix, CVector};
use qnn_core::qram::{state_prep_ve, MatrixQramStructure, StatePrepTree};

fn main() -> qnn_core::Result<()> {
    let x = CVector::from_real(&[0.1, 0.4, -0.3, 0.2, 0.5, -0.1, 0.3, 0.6])?;
    let psi = state_prep_ve(&StatePrepTree::build(&x)?, 40, Mode::Semantic)?;

    let w = CMatrix::from_fn(8, 8, |i, j| c64(((i + 2 * j) as f64).cos() / 8.0, 0.0));
    let spec = ResidualBlockSpec::new(BlockEncoding::from_matrix(&w, 1.0, 1)?, 1.0, 1e-10)?;
    let block = skip_norm_block(&psi, &spec)?;
    for s in &block.stages {
        println!("{:<16} bound {:.3e} actual {:?} floor {:?}", s.stage, s.eps_bound, s.eps_actual, s.norm_floor);
    }

    let s = MatrixQramStructure::build(&w, 52)?;
    let out = output_block(&block.value, &s, 4, 1e-2)?;
    for st in &out.stages {
        println!("{:<16} bound {:.3e} actual {:?}", st.stage, st.eps_bound, st.eps_actual);
    }
    println!("all stage bounds hold: {}", out.passed());
    Ok(())
}
