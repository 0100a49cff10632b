//! Block-encodings and vector-encodings with ledger arithmetic.
//!
//! A [`BlockEncoding`] stores the top-left block `Ã` of its unitary; the
//! encoded operator is `A ≈ alpha·Ã` with `‖A − alpha·Ã‖₂ ≤ eps_bound`.
//! A [`VectorEncoding`] stores the ancilla-zero slice `φ` of `U|0⟩`; the
//! encoded unit vector is `ψ ≈ alpha·φ`.
//!
//! Operations always compute the block or slice directly. When every input
//! carries a materialized unitary and the register stays within
//! [`CIRCUIT_QUBIT_LIMIT`] qubits, the output carries one too.

use serde::{Deserialize, Serialize};

use crate::circuit;
use crate::error::{Error, Result};
use crate::linalg::{c64, embed_on_qubits, is_pow2, log2_exact, CMatrix, CVector, C64, DEGENERATE, TOL};
use crate::polynomials::sign_poly;

/// Largest register (ancillas plus main) that circuit mode will materialize.
pub const CIRCUIT_QUBIT_LIMIT: usize = 14;

/// Absolute slack allowed on top of a propagated error bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Semantic,
    Circuit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ledger {
    pub alpha: f64,
    pub ancillas: usize,
    pub eps_bound: f64,
    pub depth: String,
}

#[derive(Clone, Debug)]
pub struct BlockEncoding {
    pub block: CMatrix,
    pub alpha: f64,
    pub ancillas: usize,
    pub eps_bound: f64,
    /// The operator this encoding is meant to represent, when known.
    pub target: Option<CMatrix>,
    pub realization: Option<CMatrix>,
    pub depth: String,
}

impl BlockEncoding {
    /// Error-free encoding of `a` with block `a/alpha`.
    pub fn from_matrix(a: &CMatrix, alpha: f64, ancillas: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::contract("BlockEncoding", "operator must be square"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::contract("BlockEncoding", format!("invalid alpha {alpha}")));
        }
        let block = a.scale_re(1.0 / alpha);
        let norm = block.spectral_norm();
        if norm > 1.0 + TOL {
            return Err(Error::contract("BlockEncoding", format!("‖A‖/α = {norm} exceeds 1")));
        }
        Ok(BlockEncoding {
            block,
            alpha,
            ancillas,
            eps_bound: 0.0,
            target: Some(a.clone()),
            realization: None,
            depth: "U".into(),
        })
    }

    /// A unitary seen as a (1, 0, 0) encoding of itself.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        if !u.is_unitary(TOL) {
            return Err(Error::contract("BlockEncoding", "matrix is not unitary"));
        }
        Ok(BlockEncoding {
            block: u.clone(),
            alpha: 1.0,
            ancillas: 0,
            eps_bound: 0.0,
            target: Some(u.clone()),
            realization: Some(u.clone()),
            depth: "U".into(),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_unitary(&CMatrix::identity(1 << n)).expect("identity is unitary")
    }

    pub fn main_qubits(&self) -> usize {
        self.block.qubits()
    }

    pub fn total_qubits(&self) -> usize {
        self.ancillas + self.main_qubits()
    }

    pub fn ledger(&self) -> Ledger {
        Ledger { alpha: self.alpha, ancillas: self.ancillas, eps_bound: self.eps_bound, depth: self.depth.clone() }
    }

    pub fn with_target(mut self, target: CMatrix) -> Self {
        self.target = Some(target);
        self
    }

    /// `‖target − alpha·block‖₂`, when a target is known.
    pub fn actual_error(&self) -> Option<f64> {
        self.target.as_ref().map(|t| t.dist(&self.block.scale_re(self.alpha)))
    }

    pub fn check(&self, lemma: &str) -> Result<()> {
        if let Some(actual) = self.actual_error() {
            if actual > self.eps_bound + BOUND_SLACK {
                return Err(Error::BoundViolation { lemma: lemma.into(), actual, bound: self.eps_bound });
            }
        }
        Ok(())
    }

    /// Largest entrywise gap between the materialized block and the semantic one.
    pub fn realization_gap(&self) -> Option<f64> {
        let u = self.realization.as_ref()?;
        let dim = self.block.dim();
        Some(u.top_left(dim, dim).max_abs_diff(&self.block))
    }

    /// Append idle ancillas (placed ahead of the existing ones) up to `total`.
    pub fn pad_ancillas(&self, total: usize) -> Self {
        assert!(total >= self.ancillas, "cannot remove ancillas");
        let extra = total - self.ancillas;
        let mut out = self.clone();
        out.ancillas = total;
        out.realization = self.realization.as_ref().map(|u| CMatrix::identity(1 << extra).kron(u));
        out
    }

    /// Encoding of `phase·A`, obtained by a global phase on the unitary.
    pub fn with_phase(&self, phase: C64) -> Self {
        let mut out = self.clone();
        out.block = self.block.scale(phase);
        out.target = self.target.as_ref().map(|t| t.scale(phase));
        out.realization = self.realization.as_ref().map(|u| u.scale(phase));
        out
    }

    /// Attach a unitary built by dilating the block (idle ancillas fill the rest).
    pub fn materialize(mut self) -> Result<Self> {
        if self.realization.is_some() {
            return Ok(self);
        }
        if self.total_qubits() > CIRCUIT_QUBIT_LIMIT {
            return Err(Error::contract("materialize", format!("{} qubits exceed the circuit limit", self.total_qubits())));
        }
        let u = if self.ancillas == 0 {
            if !self.block.is_unitary(TOL) {
                return Err(Error::contract("materialize", "non-unitary block needs an ancilla"));
            }
            self.block.clone()
        } else {
            let w = crate::linalg::unitary_dilation(&self.block)?;
            CMatrix::identity(1 << (self.ancillas - 1)).kron(&w)
        };
        self.realization = Some(u);
        Ok(self)
    }
}

#[derive(Clone, Debug)]
pub struct VectorEncoding {
    pub vec: CVector,
    pub alpha: f64,
    pub ancillas: usize,
    pub eps_bound: f64,
    /// The unit vector this encoding is meant to represent, when known.
    pub target: Option<CVector>,
    pub realization: Option<CMatrix>,
    pub depth: String,
}

impl VectorEncoding {
    /// Exact (1, 0, 0) encoding of a unit vector.
    pub fn from_state(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::contract("VectorEncoding", format!("state has norm {n}")));
        }
        Ok(VectorEncoding {
            vec: psi.clone(),
            alpha: 1.0,
            ancillas: 0,
            eps_bound: 0.0,
            target: Some(psi.clone()),
            realization: None,
            depth: "U".into(),
        })
    }

    /// Encoding with an explicit slice; `vec` must have norm at most one.
    pub fn from_parts(vec: CVector, alpha: f64, ancillas: usize, eps_bound: f64, target: Option<CVector>) -> Result<Self> {
        if vec.norm() > 1.0 + TOL {
            return Err(Error::contract("VectorEncoding", format!("slice norm {} exceeds 1", vec.norm())));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::contract("VectorEncoding", format!("invalid alpha {alpha}")));
        }
        if ancillas == 0 && (vec.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::contract("VectorEncoding", "sub-normalized slice needs an ancilla"));
        }
        Ok(VectorEncoding { vec, alpha, ancillas, eps_bound, target, realization: None, depth: "U".into() })
    }

    pub fn main_qubits(&self) -> usize {
        self.vec.qubits()
    }

    pub fn total_qubits(&self) -> usize {
        self.ancillas + self.main_qubits()
    }

    pub fn ledger(&self) -> Ledger {
        Ledger { alpha: self.alpha, ancillas: self.ancillas, eps_bound: self.eps_bound, depth: self.depth.clone() }
    }

    pub fn with_target(mut self, target: CVector) -> Self {
        self.target = Some(target);
        self
    }

    /// `‖target − alpha·vec‖₂`, when a target is known.
    pub fn actual_error(&self) -> Option<f64> {
        self.target.as_ref().map(|t| t.dist(&self.vec.scale_re(self.alpha)))
    }

    pub fn check(&self, lemma: &str) -> Result<()> {
        if let Some(actual) = self.actual_error() {
            if actual > self.eps_bound + BOUND_SLACK {
                return Err(Error::BoundViolation { lemma: lemma.into(), actual, bound: self.eps_bound });
            }
        }
        Ok(())
    }

    pub fn realization_gap(&self) -> Option<f64> {
        let u = self.realization.as_ref()?;
        let col = u.column(0).head(self.vec.dim());
        Some(col.iter().zip(self.vec.iter()).fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    pub fn pad_ancillas(&self, total: usize) -> Self {
        assert!(total >= self.ancillas, "cannot remove ancillas");
        let extra = total - self.ancillas;
        let mut out = self.clone();
        out.ancillas = total;
        out.realization = self.realization.as_ref().map(|u| CMatrix::identity(1 << extra).kron(u));
        out
    }

    /// Attach a unitary whose first column carries the slice (Householder completion).
    pub fn materialize(mut self) -> Result<Self> {
        if self.realization.is_some() {
            return Ok(self);
        }
        if self.total_qubits() > CIRCUIT_QUBIT_LIMIT {
            return Err(Error::contract("materialize", format!("{} qubits exceed the circuit limit", self.total_qubits())));
        }
        self.realization = Some(completion(&self.vec, self.ancillas)?);
        Ok(self)
    }
}

/// Unitary on `ancillas + n` qubits with `U|0⟩ = |0⟩|vec⟩ + |1…⟩|rest⟩`.
pub(crate) fn completion(vec: &CVector, ancillas: usize) -> Result<CMatrix> {
    let dim = vec.dim() << ancillas;
    let mut col = vec.pad_to(dim).into_inner();
    let deficit = (1.0 - vec.norm_squared()).max(0.0);
    let rest = deficit.sqrt();
    // A deficit of a few ulps is rounding in the slice, not sub-normalization.
    if deficit > 1e-12 || (ancillas > 0 && rest > 1e-15) {
        if ancillas == 0 {
            return Err(Error::contract("materialize", "sub-normalized slice needs an ancilla"));
        }
        col[vec.dim()] = c64(rest, 0.0);
    }
    let col = CVector::new(col)?.normalized("materialize")?;
    crate::linalg::unitary_with_first_column(&col)
}

fn fits(qubits: usize) -> bool {
    qubits <= CIRCUIT_QUBIT_LIMIT
}

/// Top-left block `(⟨0|_a ⊗ I) U (|0⟩_a ⊗ I)` of a unitary.
pub fn extract_block(realization: &CMatrix, ancillas: usize) -> Result<CMatrix> {
    if !realization.is_unitary(1e-8) {
        return Err(Error::contract("extract_block", "realization is not unitary"));
    }
    let dim = realization.dim() >> ancillas;
    if dim == 0 {
        return Err(Error::contract("extract_block", "more ancillas than qubits"));
    }
    Ok(realization.top_left(dim, dim))
}

/// Ancilla-zero slice of `U|0⟩`.
pub fn extract_vec(realization: &CMatrix, ancillas: usize) -> Result<CVector> {
    let b = extract_block(realization, ancillas)?;
    Ok(realization.column(0).head(b.dim()))
}

fn mismatch(op: &'static str, a: usize, b: usize) -> Error {
    Error::contract(op, format!("main registers differ: {a} vs {b} qubits"))
}

/// Product `A·B`: ledger (αβ, a+b, α·ε_B + β·ε_A).
pub fn be_product(u: &BlockEncoding, v: &BlockEncoding) -> Result<BlockEncoding> {
    if u.block.dim() != v.block.dim() {
        return Err(mismatch("be_product", u.main_qubits(), v.main_qubits()));
    }
    let (a, b, n) = (u.ancillas, v.ancillas, u.main_qubits());
    let realization = match (&u.realization, &v.realization) {
        (Some(ru), Some(rv)) if fits(a + b + n) => {
            let total = a + b + n;
            let first = CMatrix::identity(1 << a).kron(rv);
            let qubits: Vec<usize> = (0..a).chain(a + b..total).collect();
            let second = embed_on_qubits(ru, &qubits, total);
            Some(&second * &first)
        }
        _ => None,
    };
    Ok(BlockEncoding {
        block: &u.block * &v.block,
        alpha: u.alpha * v.alpha,
        ancillas: a + b,
        eps_bound: u.alpha * v.eps_bound + v.alpha * u.eps_bound,
        target: match (&u.target, &v.target) {
            (Some(x), Some(y)) => Some(x * y),
            _ => None,
        },
        realization,
        depth: format!("{}+{}", u.depth, v.depth),
    })
}

/// Tensor product `A ⊗ B`: ledger (αβ, a+b, ε_A·β + ε_B·α + ε_A·ε_B).
pub fn be_tensor(u: &BlockEncoding, v: &BlockEncoding) -> Result<BlockEncoding> {
    let (a, b, n, m) = (u.ancillas, v.ancillas, u.main_qubits(), v.main_qubits());
    let realization = match (&u.realization, &v.realization) {
        (Some(ru), Some(rv)) if fits(a + b + n + m) => {
            let pi = circuit::register_swap(a, b, n, m);
            Some(&(&pi.adjoint() * &ru.kron(rv)) * &pi)
        }
        _ => None,
    };
    Ok(BlockEncoding {
        block: u.block.kron(&v.block),
        alpha: u.alpha * v.alpha,
        ancillas: a + b,
        eps_bound: u.eps_bound * v.alpha + v.eps_bound * u.alpha + u.eps_bound * v.eps_bound,
        target: match (&u.target, &v.target) {
            (Some(x), Some(y)) => Some(x.kron(y)),
            _ => None,
        },
        realization,
        depth: format!("max({},{})", u.depth, v.depth),
    })
}

/// Weighted sum `Σ b_j A_j` of encodings sharing one (α, a, ε) signature.
///
/// Ledger (αβ, a+d, αβε) with `β = ‖b‖₁` and `2^d` the padded part count.
/// `prep`, when given, must equal `√b/√β` (the state loaded by `U_b`).
pub fn be_lcu(parts: &[BlockEncoding], weights: &[f64], prep: Option<&CVector>) -> Result<BlockEncoding> {
    const OP: &str = "be_lcu";
    if parts.is_empty() || parts.len() != weights.len() {
        return Err(Error::contract(OP, "need one weight per part"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::contract(OP, format!("negative or invalid weight {w}")));
    }
    let p0 = &parts[0];
    for p in parts {
        let same_alpha = (p.alpha - p0.alpha).abs() <= 1e-12 * p0.alpha.max(1.0);
        let same_eps = (p.eps_bound - p0.eps_bound).abs() <= 1e-15;
        if !same_alpha || p.ancillas != p0.ancillas || !same_eps || p.block.dim() != p0.block.dim() {
            return Err(Error::contract(OP, "parts do not share one (α, a, ε) signature"));
        }
    }
    let beta: f64 = weights.iter().sum();
    if beta <= 0.0 {
        return Err(Error::contract(OP, "weights sum to zero"));
    }
    let count = parts.len().next_power_of_two();
    let d = log2_exact(count).expect("power of two");
    let mut padded_w = weights.to_vec();
    padded_w.resize(count, 0.0);
    let amps: Vec<f64> = padded_w.iter().map(|w| (w / beta).sqrt()).collect();
    let prep_state = CVector::from_real(&amps)?;
    if let Some(p) = prep {
        if p.dim() != count || p.dist(&prep_state) > 1e-9 {
            return Err(Error::contract(OP, "prep state does not match √b/√β"));
        }
    }

    let dim = p0.block.dim();
    let mut block = CMatrix::zeros(dim, dim);
    for (p, &w) in parts.iter().zip(weights) {
        if w != 0.0 {
            block = &block + &p.block.scale_re(w / beta);
        }
    }
    let target = parts
        .iter()
        .zip(weights)
        .map(|(p, &w)| p.target.as_ref().map(|t| t.scale_re(w)))
        .try_fold(CMatrix::zeros(dim, dim), |acc, t| t.map(|t| &acc + &t));

    let (a, n) = (p0.ancillas, p0.main_qubits());
    let realization = if fits(d + a + n) && parts.iter().all(|p| p.realization.is_some()) {
        let mut unitaries: Vec<CMatrix> = parts.iter().map(|p| p.realization.clone().unwrap()).collect();
        unitaries.resize(count, CMatrix::identity(1 << (a + n)));
        Some(circuit::lcu(&prep_state, &unitaries)?)
    } else {
        None
    };
    Ok(BlockEncoding {
        block,
        alpha: p0.alpha * beta,
        ancillas: a + d,
        eps_bound: p0.alpha * beta * p0.eps_bound,
        target,
        realization,
        depth: format!("2T_prep+{count}({})", p0.depth),
    })
}

/// (1, 2, 0) encoding of the rank-one operator `|i⟩⟨j|` on `n` qubits.
pub fn be_basis_projector(i: usize, j: usize, n: usize, mode: Mode) -> Result<BlockEncoding> {
    let dim = 1usize << n;
    if i >= dim || j >= dim {
        return Err(Error::contract("be_basis_projector", format!("index out of range for {n} qubits")));
    }
    let block = CMatrix::outer(&CVector::basis(dim, i), &CVector::basis(dim, j));
    Ok(BlockEncoding {
        target: Some(block.clone()),
        block,
        alpha: 1.0,
        ancillas: 2,
        eps_bound: 0.0,
        realization: (mode == Mode::Circuit).then(|| circuit::basis_projector(i, j, n)),
        depth: "O(n)".into(),
    })
}

/// Weighted sum `τ·ψ/α + (1−τ)·φ/β`, renormalized.
///
/// Ledger (1/𝒩, 1+max(a,b), (ε₀/α + ε₁/β)/𝒩).
pub fn ve_sum(u: &VectorEncoding, v: &VectorEncoding, tau: f64) -> Result<VectorEncoding> {
    const OP: &str = "ve_sum";
    if u.vec.dim() != v.vec.dim() {
        return Err(mismatch(OP, u.main_qubits(), v.main_qubits()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::contract(OP, format!("tau = {tau} outside [0, 1]")));
    }
    let ideal = |e: &VectorEncoding| e.target.clone().unwrap_or_else(|| e.vec.scale_re(e.alpha));
    let gamma = &ideal(u).scale_re(tau / u.alpha) + &ideal(v).scale_re((1.0 - tau) / v.alpha);
    let norm = gamma.norm();
    if norm < DEGENERATE {
        return Err(Error::Degenerate { op: OP, norm });
    }
    let c = u.ancillas.max(v.ancillas);
    let n = u.main_qubits();
    let realization = match (&u.realization, &v.realization) {
        (Some(_), Some(_)) if fits(c + 1 + n) => {
            let ru = u.pad_ancillas(c).realization.unwrap();
            let rv = v.pad_ancillas(c).realization.unwrap();
            Some(circuit::weighted_sum(tau, &ru, &rv))
        }
        _ => None,
    };
    Ok(VectorEncoding {
        vec: &u.vec.scale_re(tau) + &v.vec.scale_re(1.0 - tau),
        alpha: 1.0 / norm,
        ancillas: c + 1,
        eps_bound: (u.eps_bound / u.alpha + v.eps_bound / v.alpha) / norm,
        target: (u.target.is_some() && v.target.is_some()).then(|| gamma.scale_re(1.0 / norm)),
        realization,
        depth: format!("{}+{}+2", u.depth, v.depth),
    })
}

/// Matrix-vector product `Aψ/‖Aψ‖`: ledger (αβ/𝒩, a+b, (ε_A + α·ε_ψ)/𝒩).
pub fn ve_matvec(a: &BlockEncoding, psi: &VectorEncoding) -> Result<VectorEncoding> {
    const OP: &str = "ve_matvec";
    if a.block.dim() != psi.vec.dim() {
        return Err(mismatch(OP, a.main_qubits(), psi.main_qubits()));
    }
    let op = a.target.clone().unwrap_or_else(|| a.block.scale_re(a.alpha));
    let state = psi.target.clone().unwrap_or_else(|| psi.vec.scale_re(psi.alpha));
    let image = op.apply(&state);
    let norm = image.norm();
    if norm < DEGENERATE {
        return Err(Error::Degenerate { op: OP, norm });
    }
    let (aa, bb, n) = (a.ancillas, psi.ancillas, psi.main_qubits());
    let realization = match (&a.realization, &psi.realization) {
        (Some(ra), Some(rp)) if fits(aa + bb + n) => {
            let total = aa + bb + n;
            let first = CMatrix::identity(1 << aa).kron(rp);
            let qubits: Vec<usize> = (0..aa).chain(aa + bb..total).collect();
            Some(&embed_on_qubits(ra, &qubits, total) * &first)
        }
        _ => None,
    };
    Ok(VectorEncoding {
        vec: a.block.apply(&psi.vec),
        alpha: a.alpha * psi.alpha / norm,
        ancillas: aa + bb,
        eps_bound: (a.eps_bound + a.alpha * psi.eps_bound) / norm,
        target: (a.target.is_some() && psi.target.is_some()).then(|| image.scale_re(1.0 / norm)),
        realization,
        depth: format!("{}+{}", a.depth, psi.depth),
    })
}

/// Tensor product `ψ ⊗ φ`: ledger (αβ, a+b, ε+δ+εδ).
pub fn ve_tensor(u: &VectorEncoding, v: &VectorEncoding) -> Result<VectorEncoding> {
    let (a, b, n, m) = (u.ancillas, v.ancillas, u.main_qubits(), v.main_qubits());
    let realization = match (&u.realization, &v.realization) {
        (Some(ru), Some(rv)) if fits(a + b + n + m) => {
            let pi = circuit::register_swap(a, b, n, m);
            Some(&(&pi.adjoint() * &ru.kron(rv)) * &pi)
        }
        _ => None,
    };
    Ok(VectorEncoding {
        vec: u.vec.kron(&v.vec),
        alpha: u.alpha * v.alpha,
        ancillas: a + b,
        eps_bound: u.eps_bound + v.eps_bound + u.eps_bound * v.eps_bound,
        target: match (&u.target, &v.target) {
            (Some(x), Some(y)) => Some(x.kron(y)),
            _ => None,
        },
        realization,
        depth: format!("max({},{})", u.depth, v.depth),
    })
}

/// Stack `Σ_j |j⟩|ψ_j⟩/α_j`, renormalized: ledger (D/𝒩, d+a, ε) with 𝒩 = √Σ α_j⁻².
///
/// The index register `|j⟩` becomes the leading part of the main register.
pub fn ve_concat(parts: &[VectorEncoding]) -> Result<VectorEncoding> {
    const OP: &str = "ve_concat";
    if parts.is_empty() {
        return Err(Error::contract(OP, "empty part list"));
    }
    let count = parts.len();
    if !is_pow2(count) {
        return Err(Error::contract(OP, format!("{count} parts is not a power of two")));
    }
    let p0 = &parts[0];
    for p in parts {
        if p.vec.dim() != p0.vec.dim() || p.ancillas != p0.ancillas {
            return Err(Error::contract(OP, "parts must share register sizes"));
        }
        if (p.eps_bound - p0.eps_bound).abs() > 1e-15 {
            return Err(Error::contract(OP, "parts must share one error bound"));
        }
    }
    let d = log2_exact(count).unwrap();
    let norm = parts.iter().map(|p| p.alpha.powi(-2)).sum::<f64>().sqrt();
    let scale = 1.0 / count as f64;
    let dim = p0.vec.dim();
    let mut vec = CVector::zeros(count * dim).into_inner();
    let mut target = CVector::zeros(count * dim).into_inner();
    let known = parts.iter().all(|p| p.target.is_some());
    for (j, p) in parts.iter().enumerate() {
        vec.rows_mut(j * dim, dim).copy_from(&(p.vec.inner() * c64(scale, 0.0)));
        if let Some(t) = &p.target {
            target.rows_mut(j * dim, dim).copy_from(&(t.inner() * c64(1.0 / (p.alpha * norm), 0.0)));
        }
    }
    let (a, n) = (p0.ancillas, p0.main_qubits());
    let realization = if fits(2 * d + a + n) && parts.iter().all(|p| p.realization.is_some()) {
        let us: Vec<CMatrix> = parts.iter().map(|p| p.realization.clone().unwrap()).collect();
        Some(circuit::concat(&us, a, n))
    } else {
        None
    };
    Ok(VectorEncoding {
        vec: CVector::new(vec)?,
        alpha: count as f64 / norm,
        ancillas: d + a,
        eps_bound: p0.eps_bound,
        target: if known { Some(CVector::new(target)?) } else { None },
        realization,
        depth: format!("{count}({})+{d}", p0.depth),
    })
}

/// Amplify to unit scale with the sign polynomial: ledger (1, a+4, 2(ε₀+ε₁)).
///
/// The new slice is `P(‖φ‖)·φ/‖φ‖` where `P` approximates `sign` outside
/// `(−g/2, g/2)` with gap `g = 1/(2·alpha_hint)`.
pub fn ve_normalize(u: &VectorEncoding, alpha_hint: f64, eps1: f64) -> Result<VectorEncoding> {
    const OP: &str = "ve_normalize";
    if u.eps_bound > 0.5 {
        return Err(Error::contract(OP, format!("input error {} exceeds 1/2", u.eps_bound)));
    }
    if alpha_hint < u.alpha * (1.0 - 1e-12) {
        return Err(Error::contract(OP, format!("alpha hint {alpha_hint} below alpha {}", u.alpha)));
    }
    if !(eps1 > 0.0) {
        return Err(Error::contract(OP, "eps1 must be positive"));
    }
    let norm = u.vec.norm();
    let gap = 1.0 / (2.0 * alpha_hint);
    if norm < gap {
        return Err(Error::contract(OP, format!("encoded norm {norm:.3e} below 1/(2α') = {gap:.3e}")));
    }
    let p = sign_poly(gap, eps1)?;
    let vec = u.vec.scale_re(p.eval(norm) / norm);
    let ancillas = u.ancillas + 4;
    let realization = match &u.realization {
        Some(_) if fits(ancillas + u.main_qubits()) => Some(completion(&vec, ancillas)?),
        _ => None,
    };
    Ok(VectorEncoding {
        vec,
        alpha: 1.0,
        ancillas,
        eps_bound: 2.0 * (u.eps_bound + eps1),
        target: u.target.clone(),
        realization,
        depth: format!("{}({})", p.degree, u.depth),
    })
}

/// Shrink the slice by `τ ≥ 1`: ledger (ατ, a+2, ε).
pub fn ve_deamplify(u: &VectorEncoding, tau: f64) -> Result<VectorEncoding> {
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(Error::contract("ve_deamplify", format!("tau = {tau} must be at least 1")));
    }
    let ancillas = u.ancillas + 2;
    let realization = match &u.realization {
        Some(ru) if fits(ancillas + u.main_qubits()) => {
            let shrink = circuit::deamplify_pair(tau);
            Some(&embed_on_qubits(&shrink, &[0, 1], ancillas + u.main_qubits()) * &CMatrix::identity(4).kron(ru))
        }
        _ => None,
    };
    Ok(VectorEncoding {
        vec: u.vec.scale_re(1.0 / tau),
        alpha: u.alpha * tau,
        ancillas,
        eps_bound: u.eps_bound,
        target: u.target.clone(),
        realization,
        depth: format!("{}+1", u.depth),
    })
}

/// Reinterpret `u` as an encoding of an inner vector held in its leading slice.
///
/// The inner state loader has `inner_ancillas` leading qubits, scale `β`
/// and error `δ`; `drift` bounds how far `u`'s target is from that loader's
/// output. Ledger (αβ, a+m−n, δ + β(ε+γ)). The inner target is not
/// recoverable from `u` alone and is left unset.
pub fn ve_subencode(
    u: &VectorEncoding,
    inner_ancillas: usize,
    inner_alpha: f64,
    inner_eps: f64,
    drift: f64,
) -> Result<VectorEncoding> {
    if inner_ancillas == 0 || inner_ancillas >= u.main_qubits() {
        return Err(Error::contract("ve_subencode", "inner register must be strictly smaller"));
    }
    let dim = u.vec.dim() >> inner_ancillas;
    Ok(VectorEncoding {
        vec: u.vec.head(dim),
        alpha: u.alpha * inner_alpha,
        ancillas: u.ancillas + inner_ancillas,
        eps_bound: inner_eps + inner_alpha * (u.eps_bound + drift),
        target: None,
        realization: u.realization.clone(),
        depth: u.depth.clone(),
    })
}

/// Move `b` leading main qubits (in state `|0⟩`) into the ancilla register.
pub fn ve_traceout(u: &VectorEncoding, b: usize) -> Result<VectorEncoding> {
    const OP: &str = "ve_traceout";
    if b > u.main_qubits() {
        return Err(Error::contract(OP, "cannot trace out more qubits than the main register holds"));
    }
    let dim = u.vec.dim() >> b;
    let target = match &u.target {
        Some(t) => {
            let tail = t.norm_squared() - t.head(dim).norm_squared();
            if tail.max(0.0).sqrt() > 1e-9 {
                return Err(Error::contract(OP, "target is not of the form |0⟩|ψ⟩"));
            }
            Some(t.head(dim))
        }
        None => {
            let head = u.vec.head(dim).norm();
            if head * head < 0.5 * u.vec.norm_squared() {
                return Err(Error::contract(OP, "leading block is not dominant"));
            }
            None
        }
    };
    Ok(VectorEncoding {
        vec: u.vec.head(dim),
        alpha: u.alpha,
        ancillas: u.ancillas + b,
        eps_bound: u.eps_bound,
        target,
        realization: u.realization.clone(),
        depth: u.depth.clone(),
    })
}

/// Uniform superposition on `d` qubits as an exact (1, 0, 0) encoding.
pub fn uniform_ve(d: usize, mode: Mode) -> VectorEncoding {
    let psi = CVector::uniform(1 << d);
    let mut ve = VectorEncoding::from_state(&psi).expect("uniform state is normalized");
    if mode == Mode::Circuit {
        ve.realization = Some(circuit::hadamards(d));
    }
    ve.depth = "1".into();
    ve
}

/// `2^d` equal copies of one encoding, stacked as `|+⟩^d ⊗ ψ`.
///
/// Unlike [`ve_concat`], which charges scale `D/𝒩 = √D` for equal copies,
/// the uniform-state tensor keeps the input's scale and error.
pub fn ve_equal_copies(u: &VectorEncoding, d: usize) -> Result<VectorEncoding> {
    let mode = if u.realization.is_some() { Mode::Circuit } else { Mode::Semantic };
    ve_tensor(&uniform_ve(d, mode), u)
}
