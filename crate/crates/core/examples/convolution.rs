//! Block-encode a multichannel convolution and compare it with the direct sum.

use qnn_core::convolution::{conv_block_encoding, conv_direct, conv_matrix_form, ConvKernel, FeatureMap};

fn main() -> qnn_core::Result<()> {
    let k = ConvKernel::from_fn(2, 2, |o, i, r, c| ((o * 8 + i * 4 + r * 2 + c) as f64 * 0.7).cos())?;
    let x = FeatureMap::from_fn(2, 4, |ch, r, c| ((ch * 16 + r * 4 + c) as f64).sin());

    let direct = conv_direct(&k, &x).vectorize();
    let cm = conv_matrix_form(&k, 2);
    let via_matrix = cm.c_mat.apply(&x.vectorize());
    println!("matrix form vs direct sum: {:.2e}", direct.dist(&via_matrix));

    let (be, report) = conv_block_encoding(&k, 2)?;
    println!("‖𝒞‖₂ {:.4}, ‖K‖₁ {:.4}, ratio {:.3} <= {:.3}", report.spectral_norm, report.kernel_l1, report.ratio, report.ratio_bound);
    println!("ledger {:?}", be.ledger());
    println!("block vs 𝒞/(2‖𝒞‖₂): {:.2e}", be.actual_error().unwrap_or(f64::NAN));
    Ok(())
}
