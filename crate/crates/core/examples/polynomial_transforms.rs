//! Chebyshev approximations of erf and singular-value amplification.

use qnn_core::encodings::BlockEncoding;
use qnn_core::linalg::{c64, svd, CMatrix};
use qnn_core::polynomials::{erf_poly, uniform_sv_amplify};

fn main() -> qnn_core::Result<()> {
    for m in [0.5, 0.8, 1.6] {
        let p = erf_poly(m, 1e-8, 1.0)?;
        let worst = (0..=2000)
            .map(|i| -1.0 + i as f64 / 1000.0)
            .map(|x| (p.eval(x) - libm::erf(m * x)).abs())
            .fold(0.0, f64::max);
        println!("erf({m}x): degree {}, grid error {worst:.2e}", p.coeffs.len() - 1);
    }

    let a = CMatrix::from_fn(2, 2, |i, j| c64(if i == j { 0.1 + 0.1 * i as f64 } else { 0.05 }, 0.0));
    let be = BlockEncoding::from_matrix(&a, 1.0, 1)?;
    let amp = uniform_sv_amplify(&be, 3.0, 0.25, 1e-8)?;
    println!("singular values before {:?}", svd(&a)?.s);
    println!("after ×3 amplification {:?}", svd(&amp.block)?.s);
    println!("ledger {:?}", amp.ledger());
    Ok(())
}
