//! Compose vector and block encodings and watch the (α, ancillas, ε) ledger grow.

use qnn_core::encodings::{be_product, ve_matvec, ve_normalize, ve_sum, BlockEncoding, VectorEncoding};
use qnn_core::linalg::{c64, CMatrix, CVector};

fn main() -> qnn_core::Result<()> {
    let x = CVector::from_real(&[0.5, 0.5, 0.5, 0.5])?;
    let y = CVector::from_real(&[1.0, 0.0, 0.0, 0.0])?;
    let u = VectorEncoding::from_state(&x)?;
    let v = VectorEncoding::from_state(&y)?;

    let sum = ve_sum(&u, &v, 0.3)?;
    println!("ve_sum       {:?}", sum.ledger());

    let a = CMatrix::from_fn(4, 4, |i, j| c64(if i == j { 0.2 + 0.2 * i as f64 } else { 0.0 }, 0.0));
    let be = BlockEncoding::from_matrix(&a, 1.0, 1)?;
    let squared = be_product(&be, &be)?;
    println!("be_product   {:?}", squared.ledger());

    let image = ve_matvec(&squared, &sum)?;
    println!("ve_matvec    {:?}", image.ledger());

    let unit = ve_normalize(&image, image.alpha * 1.01, 1e-6)?;
    println!("ve_normalize {:?}", unit.ledger());
    println!("actual error {:.3e} <= bound {:.3e}", unit.actual_error().unwrap_or(0.0), unit.eps_bound);
    Ok(())
}
