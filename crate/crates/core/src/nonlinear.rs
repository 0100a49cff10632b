//! Coherent nonlinearities on vector encodings: polynomial amplitude
//! transforms, the erf activation, the matrix times element-wise-square
//! product, and squared ℓ₂ pooling.

use std::f64::consts::PI;

use crate::encodings::{
    be_basis_projector, be_tensor, completion, ve_matvec, ve_traceout, BlockEncoding, Mode, VectorEncoding,
    CIRCUIT_QUBIT_LIMIT,
};
use crate::error::{Error, Result};
use crate::linalg::{c64, is_pow2, CMatrix, CVector, C64, DEGENERATE};
use crate::polynomials::{cheb_grid, erf_poly, roundoff_allowance, ChebyshevPoly, Parity, CERT_GRID};
use crate::qram::{diagonal_be_from_qram, oracle_uw, MatrixQramStructure};

/// Contiguous binning of `N` amplitudes into `C` classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PoolingSpec {
    pub bins: usize,
    pub input_dim: usize,
}

impl PoolingSpec {
    pub fn new(bins: usize, input_dim: usize) -> Result<Self> {
        if !is_pow2(bins) || !is_pow2(input_dim) || bins > input_dim {
            return Err(Error::contract(
                "PoolingSpec",
                format!("need powers of two with C | N, got C = {bins}, N = {input_dim}"),
            ));
        }
        Ok(PoolingSpec { bins, input_dim })
    }

    pub fn bin_width(&self) -> usize {
        self.input_dim / self.bins
    }

    /// Class of basis index `l`.
    pub fn bin_of(&self, l: usize) -> usize {
        l / self.bin_width()
    }
}

/// What the amplitude transform needs to know about the function it approximates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationMeta {
    pub lipschitz: f64,
    /// Upper bound on `|P(x)/x|` over `[−1, 1]`.
    pub gamma_bound: f64,
}

/// Largest `|P(x)/x|` on the certification grid.
pub fn ratio_sup(p: &ChebyshevPoly) -> f64 {
    cheb_grid(1.0, CERT_GRID).filter(|x| x.abs() > 1e-12).map(|x| (p.eval(x) / x).abs()).fold(0.0, f64::max)
}

fn unit_target(u: &VectorEncoding) -> CVector {
    u.target.clone().unwrap_or_else(|| u.vec.scale_re(u.alpha))
}

fn has_imag(v: &CVector) -> bool {
    v.max_imag() > 1e-12
}

/// Entrywise polynomial transform of an encoded real vector.
///
/// Encodes `f(ψ/α)/𝒩` with ledger `(4γ̃/𝒩, n+2a+4, L(ε₀+ε₁)/𝒩)`. The
/// polynomial must vanish at zero, stay within `L·ε₁/(2√N)` of `f` on an
/// interval covering every encoded amplitude, and satisfy `|P(x)| ≤ γ̃|x|`.
pub fn nlat_ve(
    u: &VectorEncoding,
    p: &ChebyshevPoly,
    f: impl Fn(f64) -> f64,
    meta: ActivationMeta,
    eps1: f64,
) -> Result<VectorEncoding> {
    const OP: &str = "nlat_ve";
    let psi = unit_target(u);
    if has_imag(&u.vec) || has_imag(&psi) {
        return Err(Error::contract(OP, "amplitude transforms need a real encoded vector"));
    }
    if p.parity != Parity::Odd && p.eval(0.0) != 0.0 {
        return Err(Error::contract(OP, "polynomial must vanish at zero"));
    }
    if !(meta.lipschitz > 0.0 && eps1 > 0.0 && eps1 <= meta.lipschitz) {
        return Err(Error::contract(OP, format!("need 0 < ε₁ ≤ L, got ε₁ = {eps1}, L = {}", meta.lipschitz)));
    }
    let sup = ratio_sup(p);
    if sup > meta.gamma_bound * (1.0 + 1e-12) {
        return Err(Error::contract(OP, format!("max |P(x)/x| = {sup:.6} exceeds γ̃ = {}", meta.gamma_bound)));
    }
    let dim = u.vec.dim();
    let needed = meta.lipschitz * eps1 / (2.0 * (dim as f64).sqrt());
    if p.certified_eps > needed + roundoff_allowance(p) {
        return Err(Error::contract(OP, format!("polynomial error {:.3e} above L·ε₁/(2√N) = {needed:.3e}", p.certified_eps)));
    }
    let reach = u.vec.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    let c = ((1.0 + u.eps_bound) / u.alpha).min(1.0).max(reach);
    if c > p.interval_c + 1e-12 {
        return Err(Error::contract(OP, format!("amplitudes reach {c:.4} beyond the approximation interval {}", p.interval_c)));
    }

    let ideal: Vec<f64> = psi.re().iter().map(|x| f(x / u.alpha)).collect();
    let ideal = CVector::from_real(&ideal)?;
    let norm = ideal.norm();
    if norm < DEGENERATE {
        return Err(Error::Degenerate { op: OP, norm });
    }
    let scale = 4.0 * meta.gamma_bound;
    let vec = u.vec.map(|z| c64(p.eval(z.re) / scale, 0.0));
    let ancillas = dim.trailing_zeros() as usize + 2 * u.ancillas + 4;
    let realization = match &u.realization {
        Some(_) if ancillas + u.main_qubits() <= CIRCUIT_QUBIT_LIMIT => Some(completion(&vec, ancillas)?),
        _ => None,
    };
    Ok(VectorEncoding {
        vec,
        alpha: scale / norm,
        ancillas,
        eps_bound: meta.lipschitz * (u.eps_bound + eps1) / norm,
        target: Some(ideal.scale_re(1.0 / norm)),
        realization,
        depth: format!("{}({})", p.degree, u.depth),
    })
}

/// `erf(νx)` applied to an encoded real vector.
///
/// Ledger `(16ν/(√π𝒩), 2a+n+4, 2να(ε₀+ε₁))`, and `𝒩 ≥ 1/(2α)` because
/// `|erf(νx)| ≥ |x|/2` on `[−1, 1]` once `ν ≥ 1/2`.
pub fn erf_apply_ve(u: &VectorEncoding, nu: f64, eps1: f64) -> Result<VectorEncoding> {
    const OP: &str = "erf_apply_ve";
    if !(nu >= 0.5 && nu.is_finite()) {
        return Err(Error::contract(OP, format!("ν = {nu} must be at least 1/2")));
    }
    if !(eps1 > 0.0 && eps1 <= 2.0) {
        return Err(Error::contract(OP, format!("ε₁ = {eps1} outside (0, 2]")));
    }
    let dim = u.vec.dim() as f64;
    let c = ((1.0 + u.eps_bound) / u.alpha).min(1.0);
    let reach = u.vec.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let p = erf_poly(nu, nu * eps1 / (10.0 * dim.sqrt()), c.max(reach))?;
    let meta = ActivationMeta { lipschitz: 2.0 * nu / PI.sqrt(), gamma_bound: 4.0 * nu / PI.sqrt() };
    let mut out = nlat_ve(u, &p, |x| libm::erf(nu * x), meta, eps1)?;
    out.eps_bound = 2.0 * nu * u.alpha * (u.eps_bound + eps1);
    Ok(out)
}

/// Row-flip of a vector encoding: a block-encoding of `|0⟩⟨ψ|` with the
/// input's (α, ε) and two more ancillas, built as `U₀(I₂ ⊗ V†)`.
pub fn be_row_projector(v: &VectorEncoding) -> Result<BlockEncoding> {
    let dim = v.vec.dim();
    let e0 = CVector::basis(dim, 0);
    let c = v.ancillas;
    let n = v.main_qubits();
    let realization = match &v.realization {
        Some(rv) if c + n + 2 <= CIRCUIT_QUBIT_LIMIT => {
            let u0 = be_basis_projector(0, 0, c + n, Mode::Circuit)?.realization.expect("circuit mode");
            Some(&u0 * &CMatrix::identity(4).kron(&rv.adjoint()))
        }
        _ => None,
    };
    Ok(BlockEncoding {
        block: CMatrix::outer(&e0, &v.vec),
        alpha: v.alpha,
        ancillas: c + 2,
        eps_bound: v.eps_bound,
        target: v.target.as_ref().map(|t| CMatrix::outer(&e0, t)),
        realization,
        depth: format!("{}+O(n)", v.depth),
    })
}

/// Above this many main qubits the product runs on its structured form
/// instead of forming `N² × N²` operators.
const DENSE_SQUARED_QUBITS: usize = 5;

/// `W·g(ψ)/𝒩` with `g(x) = |x|²`, without ever encoding `W` itself.
///
/// Ledger `(α²/𝒩, 2a+d+3+n, (2αε + r)/𝒩)` where `r` is the worst d-bit
/// rounding gap of the stored column norms (zero when they are exact).
/// Stages: diagonal of column norms times ψ, row flip, tensor with `I_n`,
/// times the column-entangled state `Σ_j ψ_j|j⟩|w_j⟩`, trace out `|0⟩_n`.
pub fn matvec_squared(s: &MatrixQramStructure, psi: &VectorEncoding) -> Result<VectorEncoding> {
    if s.qubits() <= DENSE_SQUARED_QUBITS || psi.realization.is_some() {
        matvec_squared_dense(s, psi)
    } else {
        matvec_squared_structured(s, psi)
    }
}

fn check_dims(s: &MatrixQramStructure, psi: &VectorEncoding) -> Result<()> {
    if psi.vec.dim() != s.dim() {
        return Err(Error::contract("matvec_squared", format!("vector dim {} vs structure dim {}", psi.vec.dim(), s.dim())));
    }
    Ok(())
}

fn matvec_squared_dense(s: &MatrixQramStructure, psi: &VectorEncoding) -> Result<VectorEncoding> {
    check_dims(s, psi)?;
    let n = s.qubits();
    let mode = if psi.realization.is_some() { Mode::Circuit } else { Mode::Semantic };
    let diag_mode = if mode == Mode::Circuit && 1 + s.d + n <= CIRCUIT_QUBIT_LIMIT { Mode::Circuit } else { Mode::Semantic };
    let ua = diagonal_be_from_qram(&s.col_norms, s.d, diag_mode)?;
    let v1 = ve_matvec(&ua, psi)?;
    let v2 = be_row_projector(&v1)?;
    let ident = if mode == Mode::Circuit { BlockEncoding::identity(n) } else { semantic_identity(n) };
    let v3 = be_tensor(&v2, &ident)?;
    let entangled = oracle_uw(s, psi)?;
    let product = ve_matvec(&v3, &entangled)?;
    let mut out = ve_traceout(&product, n)?;
    out.depth = format!("{}+O(dn+n²)", psi.depth);
    Ok(out)
}

fn semantic_identity(n: usize) -> BlockEncoding {
    let mut id = BlockEncoding::identity(n);
    id.realization = None;
    id
}

/// Same contraction as the dense chain, computed column by column.
fn matvec_squared_structured(s: &MatrixQramStructure, psi: &VectorEncoding) -> Result<VectorEncoding> {
    const OP: &str = "matvec_squared";
    check_dims(s, psi)?;
    let ua = diagonal_be_from_qram(&s.col_norms, s.d, Mode::Semantic)?;
    let v1 = ve_matvec(&ua, psi)?;
    let state = unit_target(psi);
    let v1_target = v1.target.clone().expect("ve_matvec sets a target from exact inputs");
    let dim = s.dim();
    let combine = |weights: &CVector, amps: &CVector| {
        let mut acc = CVector::zeros(dim).into_inner();
        for j in 0..dim {
            let coef: C64 = weights[j].conj() * amps[j];
            if coef != C64::default() {
                acc += s.unit_columns[j].inner() * coef;
            }
        }
        CVector::new(acc)
    };
    let image = combine(&v1_target, &state)?;
    let norm = image.norm();
    if norm < DEGENERATE {
        return Err(Error::Degenerate { op: OP, norm });
    }
    // Ledger of ve_matvec(V₃, S) with V₃ = (α₁, c+2, ε₁) and S = (α, a, ε).
    let (alpha1, eps1) = (v1.alpha, v1.eps_bound);
    Ok(VectorEncoding {
        vec: combine(&v1.vec, &psi.vec)?,
        alpha: alpha1 * psi.alpha / norm,
        ancillas: v1.ancillas + 2 + psi.ancillas + s.qubits(),
        eps_bound: (eps1 + alpha1 * psi.eps_bound) / norm,
        target: Some(image.scale_re(1.0 / norm)),
        realization: None,
        depth: format!("{}+O(dn+n²)", psi.depth),
    })
}

/// `W·g(x)` computed classically.
pub fn matvec_squared_oracle(w: &CMatrix, x: &CVector) -> CVector {
    w.apply(&x.map(|z| c64(z.norm_sqr(), 0.0)))
}

/// Bin `j` holds `Σ |x_l|²` over its contiguous block of `N/C` indices.
pub fn pool_l2sq(x: &CVector, spec: PoolingSpec) -> Result<Vec<f64>> {
    if x.dim() % spec.bins != 0 {
        return Err(Error::contract("pool_l2sq", format!("{} bins do not divide dimension {}", spec.bins, x.dim())));
    }
    let width = x.dim() / spec.bins;
    Ok((0..spec.bins).map(|j| x.iter().skip(j * width).take(width).map(|z| z.norm_sqr()).sum()).collect())
}

/// Worst-case pooled distance for inputs `ε` apart: `2Nε/√C`.
pub fn pool_error_bound(n_dim: usize, c_bins: usize, eps: f64) -> f64 {
    2.0 * n_dim as f64 * eps / (c_bins as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qram::DEFAULT_ANGLE_BITS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real_state(rng: &mut impl Rng, dim: usize) -> CVector {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        CVector::from_real(&v).unwrap().normalized("test").unwrap()
    }

    fn complex_state(rng: &mut impl Rng, dim: usize) -> CVector {
        let v: Vec<C64> = (0..dim).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        CVector::from_vec(v).unwrap().normalized("test").unwrap()
    }

    fn random_contraction(rng: &mut impl Rng, dim: usize) -> CMatrix {
        let m = CMatrix::from_fn(dim, dim, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        m.scale_re(1.0 / m.spectral_norm())
    }

    #[test]
    fn identity_polynomial_renormalizes() {
        let psi = CVector::from_real(&[0.6, 0.8, 0.0, 0.0]).unwrap();
        let u = VectorEncoding::from_state(&psi).unwrap();
        let p = ChebyshevPoly::new(vec![0.0, 1.0]);
        let meta = ActivationMeta { lipschitz: 1.0, gamma_bound: 1.0 };
        let out = nlat_ve(&u, &p, |x| x, meta, 1e-3).unwrap();
        assert!((out.alpha - 4.0).abs() < 1e-14);
        assert_eq!(out.ancillas, 2 + 4);
        assert!(out.actual_error().unwrap() < 1e-14);
        assert_eq!(out.vec[2], c64(0.0, 0.0));
    }

    #[test]
    fn erf_on_uniform_state_matches_entrywise_oracle() {
        let u = VectorEncoding::from_state(&CVector::uniform(4)).unwrap();
        let p = erf_poly(0.8, 1e-10, 1.0).unwrap();
        let meta = ActivationMeta { lipschitz: 1.6 / PI.sqrt(), gamma_bound: 3.2 / PI.sqrt() };
        let out = nlat_ve(&u, &p, |x| libm::erf(0.8 * x), meta, 1e-6).unwrap();
        let entry = libm::erf(0.4);
        let norm = 2.0 * entry;
        let got = out.vec.scale_re(out.alpha);
        for z in got.iter() {
            assert!((z.re - entry / norm).abs() < 1e-9);
        }
        assert!((out.alpha - 4.0 * 3.2 / PI.sqrt() / norm).abs() < 1e-12);
    }

    #[test]
    fn nlat_rejects_complex_targets() {
        let psi = CVector::from_vec(vec![c64(0.0, 1.0), c64(0.0, 0.0)]).unwrap();
        let u = VectorEncoding::from_state(&psi).unwrap();
        let p = ChebyshevPoly::new(vec![0.0, 1.0]);
        let meta = ActivationMeta { lipschitz: 1.0, gamma_bound: 1.0 };
        assert!(matches!(nlat_ve(&u, &p, |x| x, meta, 1e-3), Err(Error::Contract { .. })));
    }

    #[test]
    fn erf_single_entry_and_uniform() {
        let e0 = VectorEncoding::from_state(&CVector::basis(4, 0)).unwrap();
        let out = erf_apply_ve(&e0, 1.0, 1e-6).unwrap();
        assert!(out.target.as_ref().unwrap().dist(&CVector::basis(4, 0)) < 1e-15);
        assert!(out.actual_error().unwrap() <= out.eps_bound);

        let u = VectorEncoding::from_state(&CVector::uniform(8)).unwrap();
        let out = erf_apply_ve(&u, 1.0, 1e-6).unwrap();
        let norm = 8f64.sqrt() * libm::erf(1.0 / 8f64.sqrt());
        assert!((out.alpha - 16.0 / (PI.sqrt() * norm)).abs() < 1e-12);
        assert!(out.target.as_ref().unwrap().dist(&CVector::uniform(8)) < 1e-14);
        assert_eq!(out.ancillas, 3 + 4);
    }

    #[test]
    fn erf_rejects_small_nu() {
        let u = VectorEncoding::from_state(&CVector::uniform(2)).unwrap();
        assert!(erf_apply_ve(&u, 0.4, 1e-3).is_err());
    }

    #[test]
    fn erf_error_and_norm_floor_over_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let dim = 1 << rng.gen_range(1..=4);
            let psi = real_state(&mut rng, dim);
            let alpha = rng.gen_range(1.0..3.0);
            let noise = real_state(&mut rng, dim).scale_re(rng.gen_range(0.0..1e-3));
            let slice = (&psi + &noise).scale_re(1.0 / alpha);
            let slice = slice.scale_re(1.0 / slice.norm().max(1.0));
            let eps0 = psi.dist(&slice.scale_re(alpha));
            let u = VectorEncoding::from_parts(slice, alpha, 1, eps0, Some(psi.clone())).unwrap();
            let nu = rng.gen_range(0.5..1.7);
            let out = erf_apply_ve(&u, nu, 1e-4).unwrap();
            assert!(out.actual_error().unwrap() <= out.eps_bound + 1e-9);
            let floor_norm = 16.0 * nu / (PI.sqrt() * out.alpha);
            assert!(floor_norm >= 1.0 / (2.0 * alpha) - 1e-12);
        }
    }

    #[test]
    fn matvec_squared_selects_a_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_contraction(&mut rng, 8);
        let s = MatrixQramStructure::build(&w, DEFAULT_ANGLE_BITS).unwrap();
        let psi = VectorEncoding::from_state(&CVector::basis(8, 5)).unwrap();
        let out = matvec_squared(&s, &psi).unwrap();
        let col = w.column(5).normalized("test").unwrap();
        assert!(out.target.as_ref().unwrap().dist(&col) < 1e-12);
        assert_eq!(out.ancillas, DEFAULT_ANGLE_BITS + 3 + 3);
    }

    #[test]
    fn matvec_squared_identity_on_uniform() {
        let s = MatrixQramStructure::build(&CMatrix::identity(16), 8).unwrap();
        let psi = VectorEncoding::from_state(&CVector::uniform(16)).unwrap();
        let out = matvec_squared(&s, &psi).unwrap();
        assert!((out.alpha - 4.0).abs() < 1e-12);
        assert!(out.target.as_ref().unwrap().dist(&CVector::uniform(16)) < 1e-12);
        assert!(out.actual_error().unwrap() < 1e-12);
    }

    #[test]
    fn matvec_squared_full_rank_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let w = random_contraction(&mut rng, 16);
            let s = MatrixQramStructure::build(&w, 20).unwrap();
            let psi = complex_state(&mut rng, 16);
            let noise = complex_state(&mut rng, 16).scale_re(1e-4);
            let slice = (&psi + &noise).scale_re(0.5);
            let eps = psi.dist(&slice.scale_re(2.0));
            let u = VectorEncoding::from_parts(slice, 2.0, 1, eps, Some(psi.clone())).unwrap();
            let out = matvec_squared(&s, &u).unwrap();
            let oracle = matvec_squared_oracle(&w, &psi);
            let nrm = oracle.norm();
            assert!(out.target.as_ref().unwrap().dist(&oracle.scale_re(1.0 / nrm)) < 1e-10);
            assert!((out.alpha - 4.0 / nrm).abs() < 1e-9 * out.alpha);
            let r = s.rounding_error();
            assert!(out.eps_bound <= (2.0 * 2.0 * eps + r) / nrm * (1.0 + 1e-12));
            assert!(out.actual_error().unwrap() <= out.eps_bound + 1e-9);
        }
    }

    #[test]
    fn structured_and_dense_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_contraction(&mut rng, 16);
        let s = MatrixQramStructure::build(&w, 12).unwrap();
        let psi = complex_state(&mut rng, 16);
        let u = VectorEncoding::from_parts(psi.scale_re(0.9), 1.0 / 0.9, 1, 0.0, Some(psi)).unwrap();
        let a = matvec_squared_dense(&s, &u).unwrap();
        let b = matvec_squared_structured(&s, &u).unwrap();
        assert!(a.vec.dist(&b.vec) < 1e-12);
        assert!((a.alpha - b.alpha).abs() < 1e-12 * a.alpha);
        assert!((a.eps_bound - b.eps_bound).abs() < 1e-12);
        assert_eq!(a.ancillas, b.ancillas);
    }

    #[test]
    fn matvec_squared_circuit_matches_semantic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_contraction(&mut rng, 4);
        let s = MatrixQramStructure::build(&w, 2).unwrap();
        let psi = complex_state(&mut rng, 4);
        let u = VectorEncoding::from_state(&psi).unwrap().materialize().unwrap();
        let out = matvec_squared(&s, &u).unwrap();
        let gap = out.realization_gap().expect("circuit realization propagates");
        assert!(gap < 1e-10, "gap {gap}");
        assert!(out.realization.as_ref().unwrap().is_unitary(1e-10));
    }

    #[test]
    fn pooling_examples() {
        let h = 1.0 / 2f64.sqrt();
        let x = CVector::from_real(&[h, 0.0, h, 0.0]).unwrap();
        let halves = pool_l2sq(&x, PoolingSpec::new(2, 4).unwrap()).unwrap();
        assert!(halves.iter().all(|b| (b - 0.5).abs() < 1e-15));
        let sq = pool_l2sq(&x, PoolingSpec::new(4, 4).unwrap()).unwrap();
        assert!((sq[0] - 0.5).abs() < 1e-15 && sq[1] == 0.0);
        assert_eq!(pool_error_bound(16, 4, 0.0), 0.0);
        assert!((pool_error_bound(16, 4, 0.01) - 0.16).abs() < 1e-15);
    }

    #[test]
    fn pooling_bound_holds_under_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec = PoolingSpec::new(4, 16).unwrap();
        for _ in 0..1000 {
            let x = complex_state(&mut rng, 16);
            let eps = rng.gen_range(1e-6..1e-1);
            let y = &x + &complex_state(&mut rng, 16).scale_re(eps);
            let a = pool_l2sq(&x, spec).unwrap();
            let b = pool_l2sq(&y, spec).unwrap();
            let dist = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(dist <= pool_error_bound(16, 4, eps));
        }
    }
}
