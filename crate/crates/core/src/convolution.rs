//! Multi-filter 2D convolution as a structured matrix, and its block-encoding
//! from shift operators without any memory oracle.
//!
//! Images are stored as `[channel][row][col]`. The vectorized form is
//! column-major per channel: entry `(ch, row, col)` sits at
//! `ch·M² + col·M + row`, so the middle register holds the column and the
//! last register the row.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encodings::{be_basis_projector, be_lcu, be_product, be_tensor, BlockEncoding, Mode};
use crate::error::{Error, Result};
use crate::linalg::{c64, is_pow2, permutation, CMatrix, CVector, DEGENERATE};
use crate::polynomials::{oblivious_aa_half, uniform_sv_amplify};

/// Accuracy requested from the amplification polynomial in [`conv_block_encoding`].
pub const CONV_AMPLIFY_EPS: f64 = 1e-10;

/// Real kernel `K[out][in][row offset][col offset]` with `C` channels and width `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    channels: usize,
    width: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KernelFile {
    #[serde(rename = "C")]
    c: usize,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "K")]
    k: Vec<Vec<Vec<Vec<f64>>>>,
}

impl ConvKernel {
    /// Build from a flat `[C][C][D][D]` array, zero-padding `C` and `D` up to
    /// powers of two.
    pub fn new(channels: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || width == 0 {
            return Err(Error::contract("ConvKernel", "channels and width must be positive"));
        }
        if data.len() != channels * channels * width * width {
            return Err(Error::contract("ConvKernel", format!("expected {} entries, got {}", channels * channels * width * width, data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract("ConvKernel", "kernel has non-finite entries"));
        }
        let (c2, d2) = (channels.next_power_of_two(), width.next_power_of_two());
        let mut padded = vec![0.0; c2 * c2 * d2 * d2];
        for o in 0..channels {
            for i in 0..channels {
                for k in 0..width {
                    for l in 0..width {
                        padded[((o * c2 + i) * d2 + k) * d2 + l] = data[((o * channels + i) * width + k) * width + l];
                    }
                }
            }
        }
        Ok(ConvKernel { channels: c2, width: d2, data: padded })
    }

    pub fn from_fn(channels: usize, width: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * channels * width * width);
        for o in 0..channels {
            for i in 0..channels {
                for k in 0..width {
                    for l in 0..width {
                        data.push(f(o, i, k, l));
                    }
                }
            }
        }
        Self::new(channels, width, data)
    }

    /// `K[o][i][0][0] = δ_{oi}`: the identity map.
    pub fn identity(channels: usize, width: usize) -> Result<Self> {
        Self::from_fn(channels, width, |o, i, k, l| if o == i && k == 0 && l == 0 { 1.0 } else { 0.0 })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, o: usize, i: usize, k: usize, l: usize) -> f64 {
        self.data[((o * self.channels + i) * self.width + k) * self.width + l]
    }

    /// `‖vec(K)‖₁`
    pub fn l1(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    /// `‖vec(K)‖₂`
    pub fn l2(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Kernel with both spatial offsets reversed.
    pub fn flipped(&self) -> Self {
        let d = self.width;
        let data = (0..self.data.len())
            .map(|idx| {
                let (l, k, rest) = (idx % d, (idx / d) % d, idx / (d * d));
                self.data[(rest * d + (d - 1 - k)) * d + (d - 1 - l)]
            })
            .collect();
        ConvKernel { channels: self.channels, width: d, data }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: KernelFile = serde_json::from_str(text)?;
        let shape_ok = f.k.len() == f.c
            && f.k.iter().all(|o| o.len() == f.c && o.iter().all(|i| i.len() == f.d && i.iter().all(|r| r.len() == f.d)));
        if !shape_ok {
            return Err(Error::Config(format!("kernel \"K\" must have shape [{c}][{c}][{d}][{d}]", c = f.c, d = f.d)));
        }
        let flat = f.k.into_iter().flatten().flatten().flatten().collect();
        Self::new(f.c, f.d, flat).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let (c, d) = (self.channels, self.width);
        let k = (0..c)
            .map(|o| (0..c).map(|i| (0..d).map(|r| (0..d).map(|l| self.get(o, i, r, l)).collect()).collect()).collect())
            .collect();
        Ok(serde_json::to_string(&KernelFile { c, d, k })?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Real feature map `[channel][row][col]` on an `M×M` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub side: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, side: usize) -> Self {
        FeatureMap { channels, side, data: vec![0.0; channels * side * side] }
    }

    pub fn from_fn(channels: usize, side: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut x = Self::zeros(channels, side);
        for ch in 0..channels {
            for r in 0..side {
                for c in 0..side {
                    x.data[(ch * side + r) * side + c] = f(ch, r, c);
                }
            }
        }
        x
    }

    pub fn get(&self, ch: usize, row: usize, col: usize) -> f64 {
        self.data[(ch * self.side + row) * self.side + col]
    }

    /// Column-major-per-channel vectorization.
    pub fn vectorize(&self) -> CVector {
        let m = self.side;
        let mut v = vec![0.0; self.data.len()];
        for ch in 0..self.channels {
            for r in 0..m {
                for c in 0..m {
                    v[ch * m * m + c * m + r] = self.get(ch, r, c);
                }
            }
        }
        CVector::from_real(&v).expect("power-of-two channels and side")
    }

    pub fn from_vector(v: &CVector, channels: usize, side: usize) -> Self {
        let m = side;
        FeatureMap::from_fn(channels, side, |ch, r, c| v[ch * m * m + c * m + r].re)
    }
}

/// Brute-force convolution `Y[x,r,c] = Σ K[x,j,k,l]·X̃[j, r−k, c−l]`, with
/// `X̃` zero outside the grid.
pub fn conv_direct(k: &ConvKernel, x: &FeatureMap) -> FeatureMap {
    let (m, d) = (x.side, k.width());
    FeatureMap::from_fn(k.channels(), m, |o, r, c| {
        let mut acc = 0.0;
        for j in 0..k.channels() {
            for dk in 0..d.min(r + 1) {
                for dl in 0..d.min(c + 1) {
                    acc += k.get(o, j, dk, dl) * x.get(j, r - dk, c - dl);
                }
            }
        }
        acc
    })
}

/// Brute-force cross-correlation `Y[x,r,c] = Σ K[x,j,k,l]·X̃[j, r+k, c+l]`.
pub fn correlation_direct(k: &ConvKernel, x: &FeatureMap) -> FeatureMap {
    let (m, d) = (x.side, k.width());
    FeatureMap::from_fn(k.channels(), m, |o, r, c| {
        let mut acc = 0.0;
        for j in 0..k.channels() {
            for dk in (0..d).filter(|dk| r + dk < m) {
                for dl in (0..d).filter(|dl| c + dl < m) {
                    acc += k.get(o, j, dk, dl) * x.get(j, r + dk, c + dl);
                }
            }
        }
        acc
    })
}

/// Cyclic shift `P^s = Σ_j |j+s mod N⟩⟨j|`.
pub fn cyclic_shift_matrix(dim: usize, s: usize) -> CMatrix {
    permutation(dim, |j| (j + s) % dim)
}

/// Unilateral shift `Q^s = Σ_{j<N−s} |j+s⟩⟨j|`.
pub fn unilateral_shift_matrix(dim: usize, s: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| if i >= s && i - s == j { c64(1.0, 0.0) } else { c64(0.0, 0.0) })
}

/// Dense convolution operator with its normalization constants.
#[derive(Clone, Debug)]
pub struct ConvMatrix {
    pub c_mat: CMatrix,
    pub spectral_norm: f64,
    pub kernel_l1: f64,
}

fn structured_matrix(k: &ConvKernel, m: usize, shift: impl Fn(usize) -> CMatrix) -> ConvMatrix {
    let side = 1usize << m;
    let c = k.channels();
    let dim = c * side * side;
    let shifts: Vec<CMatrix> = (0..k.width()).map(shift).collect();
    let mut acc = CMatrix::zeros(dim, dim);
    for o in 0..c {
        for i in 0..c {
            let proj = CMatrix::from_fn(c, c, |r, s| c64(if r == o && s == i { 1.0 } else { 0.0 }, 0.0));
            for dk in 0..k.width() {
                for dl in 0..k.width() {
                    let w = k.get(o, i, dk, dl);
                    if w != 0.0 {
                        acc = &acc + &proj.kron(&shifts[dl]).kron(&shifts[dk]).scale_re(w);
                    }
                }
            }
        }
    }
    let spectral_norm = acc.spectral_norm();
    ConvMatrix { c_mat: acc, spectral_norm, kernel_l1: k.l1() }
}

/// `𝒞 = Σ K[i,j,k,l]·|i⟩⟨j| ⊗ Q^l ⊗ Q^k` on images of side `2^m`.
pub fn conv_matrix_form(k: &ConvKernel, m: usize) -> ConvMatrix {
    structured_matrix(k, m, |s| unilateral_shift_matrix(1 << m, s))
}

/// Cross-correlation form: `Q` replaced by `Qᵀ`.
pub fn correlation_matrix_form(k: &ConvKernel, m: usize) -> ConvMatrix {
    structured_matrix(k, m, |s| unilateral_shift_matrix(1 << m, s).transpose())
}

/// (1, 1, 0) encoding of `P^power` on `n` qubits; the circuit is the
/// QFT-diagonalized phase construction.
pub fn permutation_be(n: usize, power: usize, mode: Mode) -> Result<BlockEncoding> {
    let dim = 1usize << n;
    let p = cyclic_shift_matrix(dim, power % dim);
    let mut be = BlockEncoding::from_matrix(&p, 1.0, 1)?;
    be.depth = "O(n²)".into();
    if mode == Mode::Circuit {
        be.realization = Some(crate::circuit::cyclic_shift(n, power % dim));
    }
    Ok(be)
}

/// (1, 4, 0) encoding of the unilateral shift `Q`: the LCU
/// `(P − |0⟩⟨N−1|)/2` boosted by oblivious amplification.
pub fn shift_q_be(n: usize, mode: Mode) -> Result<BlockEncoding> {
    if n == 0 {
        return Err(Error::contract("shift_q_be", "need at least one qubit"));
    }
    let dim = 1usize << n;
    let p = permutation_be(n, 1, mode)?.pad_ancillas(2);
    let wrap = be_basis_projector(0, dim - 1, n, mode)?.with_phase(c64(-1.0, 0.0));
    let half = be_lcu(&[p, wrap], &[1.0, 1.0], None)?;
    let mut q = oblivious_aa_half(&half)?;
    q.depth = "O(n²)".into();
    Ok(q)
}

/// (1, 4m, 0) encoding of `Q^m` as an `m`-fold product.
pub fn shift_qm_be(n: usize, m: usize, mode: Mode) -> Result<BlockEncoding> {
    if m == 0 {
        return Err(Error::contract("shift_qm_be", "power must be at least 1"));
    }
    let q = shift_q_be(n, mode)?;
    let mut acc = q.clone();
    for _ in 1..m {
        acc = be_product(&acc, &q)?;
    }
    acc.depth = format!("O({m}n²)");
    Ok(acc)
}

/// Scale and norm facts about one kernel's operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvReport {
    pub spectral_norm: f64,
    pub kernel_l1: f64,
    pub ratio: f64,
    pub ratio_bound: f64,
    pub ratio_bound_ok: bool,
    pub gamma: f64,
}

/// Encoding of `𝒞/(2‖𝒞‖₂)` with `3 + 8D + 2·log₂(CD)` ancillas.
///
/// Each term `K[i,j,k,l]·|i⟩⟨j| ⊗ Q^l ⊗ Q^k` is a tensor of shift encodings
/// padded to `2 + 8D` ancillas. Negative weights become a phase flip on
/// their term so the LCU weights are `|K|`. The LCU has scale `‖K‖₁`, and
/// uniform amplification by `γ = ‖K‖₁/(2‖𝒞‖₂)` with `δ = 1/2` brings it to
/// scale one. When `γ ≤ 1` the block is shrunk by `γ` exactly with a single
/// rotation ancilla instead, which keeps the same ledger shape.
pub fn conv_block_encoding(k: &ConvKernel, m: usize) -> Result<(BlockEncoding, ConvReport)> {
    conv_block_encoding_eps(k, m, CONV_AMPLIFY_EPS)
}

/// [`conv_block_encoding`] with an explicit amplification accuracy, which
/// becomes the encoding's ε when `γ > 1`.
pub fn conv_block_encoding_eps(k: &ConvKernel, m: usize, eps: f64) -> Result<(BlockEncoding, ConvReport)> {
    const OP: &str = "conv_block_encoding";
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::contract(OP, format!("amplification accuracy {eps} outside (0, 1)")));
    }
    if m == 0 {
        return Err(Error::contract(OP, "image side must be at least 2"));
    }
    let cm = conv_matrix_form(k, m);
    if cm.spectral_norm < DEGENERATE {
        return Err(Error::Degenerate { op: OP, norm: cm.spectral_norm });
    }
    let (c, d) = (k.channels(), k.width());
    let cq = c.trailing_zeros() as usize;
    let pad = 2 + 8 * d;

    let mut shift_cache: HashMap<usize, BlockEncoding> = HashMap::new();
    let mut shift = |s: usize| -> Result<BlockEncoding> {
        if s == 0 {
            return Ok(BlockEncoding::identity(m));
        }
        if let Some(be) = shift_cache.get(&s) {
            return Ok(be.clone());
        }
        let be = shift_qm_be(m, s, Mode::Semantic)?;
        shift_cache.insert(s, be.clone());
        Ok(be)
    };

    let mut parts = Vec::with_capacity(c * c * d * d);
    let mut weights = Vec::with_capacity(parts.capacity());
    for o in 0..c {
        for i in 0..c {
            let proj = be_basis_projector(o, i, cq, Mode::Semantic)?;
            for dk in 0..d {
                for dl in 0..d {
                    let w = k.get(o, i, dk, dl);
                    let term = be_tensor(&be_tensor(&proj, &shift(dl)?)?, &shift(dk)?)?.pad_ancillas(pad);
                    parts.push(if w < 0.0 { term.with_phase(c64(-1.0, 0.0)) } else { term });
                    weights.push(w.abs());
                }
            }
        }
    }
    let root: Vec<f64> = weights.iter().map(|w| (w / cm.kernel_l1).sqrt()).collect();
    let prep = CVector::from_real(&root)?;
    let lcu = be_lcu(&parts, &weights, Some(&prep))?;

    let gamma = cm.kernel_l1 / (2.0 * cm.spectral_norm);
    let mut be = if gamma > 1.0 {
        uniform_sv_amplify(&lcu, gamma, 0.5, eps)?
    } else {
        BlockEncoding {
            block: lcu.block.scale_re(gamma),
            alpha: 1.0,
            ancillas: lcu.ancillas + 1,
            eps_bound: 0.0,
            target: lcu.target.as_ref().map(|t| t.scale_re(gamma / lcu.alpha)),
            realization: None,
            depth: format!("2+{}", lcu.depth),
        }
    };
    be.target = Some(cm.c_mat.scale_re(0.5 / cm.spectral_norm));
    be.depth = format!("O((‖K‖₁/‖𝒞‖₂)·cd·C²D³m²) [{}]", be.depth);

    let ratio = cm.kernel_l1 / cm.spectral_norm;
    let ratio_bound = d as f64 * (c as f64).powf(1.5);
    let report = ConvReport {
        spectral_norm: cm.spectral_norm,
        kernel_l1: cm.kernel_l1,
        ratio,
        ratio_bound,
        ratio_bound_ok: ratio <= ratio_bound * (1.0 + 1e-12),
        gamma,
    };
    Ok((be, report))
}

/// Number of ancillas the convolution encoding uses: `3 + 8D + 2·log₂(CD)`.
pub fn conv_ancillas(channels: usize, width: usize) -> usize {
    debug_assert!(is_pow2(channels) && is_pow2(width));
    3 + 8 * width + 2 * (channels * width).trailing_zeros() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(rng: &mut ChaCha8Rng, c: usize, d: usize) -> ConvKernel {
        ConvKernel::from_fn(c, d, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn random_map(rng: &mut ChaCha8Rng, c: usize, side: usize) -> FeatureMap {
        let v: Vec<f64> = (0..c * side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMap { channels: c, side, data: v }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let cm = conv_matrix_form(&ConvKernel::identity(1, 2).unwrap(), 2);
        assert!(cm.c_mat.max_abs_diff(&CMatrix::identity(16)) == 0.0);
    }

    #[test]
    fn row_offset_kernel_shifts_rows() {
        let k = ConvKernel::from_fn(1, 2, |_, _, dk, dl| if dk == 1 && dl == 0 { 1.0 } else { 0.0 }).unwrap();
        let cm = conv_matrix_form(&k, 2);
        let expect = CMatrix::identity(4).kron(&unilateral_shift_matrix(4, 1));
        assert_eq!(cm.c_mat.max_abs_diff(&expect), 0.0);
    }

    #[test]
    fn matrix_form_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (c, d) in [(1, 2), (2, 2), (2, 4)] {
            let k = random_kernel(&mut rng, c, d);
            let x = random_map(&mut rng, c, 4);
            let y = conv_matrix_form(&k, 2).c_mat.apply(&x.vectorize());
            assert!(y.dist(&conv_direct(&k, &x).vectorize()) < 1e-12);
        }
    }

    #[test]
    fn correlation_matches_flipped_convolution_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(&mut rng, 2, 2);
        let x = random_map(&mut rng, 2, 4);
        let corr = correlation_matrix_form(&k, 2).c_mat.apply(&x.vectorize());
        let corr = FeatureMap::from_vector(&corr, 2, 4);
        assert!(corr.vectorize().dist(&correlation_direct(&k, &x).vectorize()) < 1e-12);
        let flip = conv_direct(&k.flipped(), &x);
        let s = k.width() - 1;
        for ch in 0..2 {
            for r in 0..4 - s {
                for c in 0..4 - s {
                    assert!((corr.get(ch, r, c) - flip.get(ch, r + s, c + s)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn padding_three_to_four() {
        let k = ConvKernel::new(1, 3, (0..9).map(|x| x as f64).collect()).unwrap();
        assert_eq!(k.width(), 4);
        assert_eq!(k.get(0, 0, 2, 2), 8.0);
        assert_eq!(k.get(0, 0, 3, 0), 0.0);
        let back = ConvKernel::from_json(&k.to_json().unwrap()).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn shift_powers() {
        assert_eq!(cyclic_shift_matrix(8, 8).max_abs_diff(&CMatrix::identity(8)), 0.0);
        let q = unilateral_shift_matrix(8, 1);
        let q8 = (0..8).fold(CMatrix::identity(8), |acc, _| &acc * &q);
        assert_eq!(q8.max_abs_diff(&CMatrix::zeros(8, 8)), 0.0);
        let p = permutation_be(3, 1, Mode::Semantic).unwrap();
        assert_eq!(p.block.column(7).dist(&CVector::basis(8, 0)), 0.0);
    }

    #[test]
    fn permutation_circuit_matches() {
        let be = permutation_be(3, 3, Mode::Circuit).unwrap();
        assert!(be.realization.as_ref().unwrap().is_unitary(1e-10));
        assert!(be.realization_gap().unwrap() < 1e-10);
        assert!(be.block.max_abs_diff(&cyclic_shift_matrix(8, 3)) == 0.0);
    }

    #[test]
    fn shift_q_ledger_and_circuit() {
        let q = shift_q_be(2, Mode::Circuit).unwrap();
        assert_eq!((q.alpha, q.ancillas, q.eps_bound), (1.0, 4, 0.0));
        assert!(q.block.max_abs_diff(&unilateral_shift_matrix(4, 1)) < 1e-12);
        assert!(q.block.column(3).norm() < 1e-12);
        let u = q.realization.as_ref().unwrap();
        assert!(u.is_unitary(1e-10));
        assert!(q.realization_gap().unwrap() < 1e-10);
        let qq = &q.block.adjoint() * &q.block;
        let expect = &CMatrix::identity(4) - &CMatrix::outer(&CVector::basis(4, 3), &CVector::basis(4, 3));
        assert!(qq.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn shift_qm_products() {
        let q2 = shift_qm_be(2, 2, Mode::Semantic).unwrap();
        assert_eq!(q2.ancillas, 8);
        assert!(q2.block.max_abs_diff(&unilateral_shift_matrix(4, 2)) < 1e-12);
        assert!(shift_qm_be(2, 0, Mode::Semantic).is_err());
    }

    #[test]
    fn identity_kernel_encoding() {
        let (be, report) = conv_block_encoding(&ConvKernel::identity(1, 2).unwrap(), 2).unwrap();
        assert_eq!(be.alpha, 1.0);
        assert_eq!(be.ancillas, conv_ancillas(1, 2));
        assert!(be.block.max_abs_diff(&CMatrix::identity(16).scale_re(0.5)) < 1e-12);
        assert!(report.ratio_bound_ok);
        be.check("conv").unwrap();
    }

    #[test]
    fn random_kernel_encoding_matches_normalized_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = random_kernel(&mut rng, 1, 2);
        let (be, report) = conv_block_encoding(&k, 2).unwrap();
        let cm = conv_matrix_form(&k, 2);
        let expect = cm.c_mat.scale_re(0.5 / cm.spectral_norm);
        assert!(be.block.dist(&expect) <= 1e-8);
        assert!(report.ratio_bound_ok);
        assert_eq!(be.ancillas, conv_ancillas(1, 2));
        be.check("conv").unwrap();
    }
}
