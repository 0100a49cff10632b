//! Load a vector with the Grover–Rudolph tree and a matrix into the column-norm QRAM structure.

use qnn_core::encodings::Mode;
use qnn_core::linalg::{c64, CMatrix, CVector};
use qnn_core::qram::{diagonal_be_from_qram, state_prep_ve, MatrixQramStructure, StatePrepTree};

fn main() -> qnn_core::Result<()> {
    let x = CVector::from_real(&[3.0, -1.0, 2.0, 0.5, 0.0, 1.0, -2.0, 1.5])?;
    let tree = StatePrepTree::build(&x)?;
    for d in [8, 16, 24] {
        let ve = state_prep_ve(&tree, d, Mode::Circuit)?;
        println!(
            "angle bits {d:>2}: ε bound {:.3e}, actual {:.3e}, circuit gap {:.1e}",
            ve.eps_bound,
            ve.actual_error().unwrap_or(0.0),
            ve.realization_gap().unwrap_or(0.0)
        );
    }

    let w = CMatrix::from_fn(4, 4, |i, j| c64(((i * 4 + j) as f64).sin() / 4.0, 0.0));
    let s = MatrixQramStructure::build(&w, 20)?;
    println!("column norms {:?}", s.col_norms);
    println!("rounding error {:.3e}", s.rounding_error());

    let diag = diagonal_be_from_qram(&s.col_norms, 6, Mode::Circuit)?;
    println!("diagonal BE: {:?}, circuit gap {:.1e}", diag.ledger(), diag.realization_gap().unwrap_or(0.0));
    Ok(())
}
