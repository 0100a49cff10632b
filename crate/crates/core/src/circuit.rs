//! Explicit unitaries for circuit-mode spot checks.
//!
//! Registers are laid out ancillas first; every builder returns a dense
//! matrix on the full register.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::{c64, embed_on_qubits, permutation, qft, unitary_with_first_column, CMatrix, CVector, C64};

pub fn hadamard() -> CMatrix {
    let h = 1.0 / 2f64.sqrt();
    CMatrix::from_fn(2, 2, |i, j| c64(if i == 1 && j == 1 { -h } else { h }, 0.0))
}

pub fn hadamards(d: usize) -> CMatrix {
    (0..d).fold(CMatrix::identity(1), |acc, _| acc.kron(&hadamard()))
}

/// `e^{−iθY} = [[cos θ, −sin θ], [sin θ, cos θ]]`
pub fn ry(theta: f64) -> CMatrix {
    let (s, c) = theta.sin_cos();
    CMatrix::from_fn(2, 2, |i, j| c64([[c, -s], [s, c]][i][j], 0.0))
}

/// X on every qubit where `bits` has a one; maps `|0⟩` to `|bits⟩`.
pub fn x_string(bits: usize, n: usize) -> CMatrix {
    permutation(1 << n, |j| j ^ bits)
}

/// Block-diagonal `Σ_j |j⟩⟨j| ⊗ U_j`.
pub fn select(unitaries: &[CMatrix]) -> CMatrix {
    let k = unitaries[0].dim();
    let dim = k * unitaries.len();
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for (j, u) in unitaries.iter().enumerate() {
        m.view_mut((j * k, j * k), (k, k)).copy_from(u.inner());
    }
    CMatrix::new(m).expect("power-of-two blocks")
}

/// Permutation Π taking layout `[a][b][n][m]` to `[a][n][b][m]`.
pub fn register_swap(a: usize, b: usize, n: usize, m: usize) -> CMatrix {
    let dim = 1usize << (a + b + n + m);
    permutation(dim, |j| {
        let xm = j & ((1 << m) - 1);
        let xn = (j >> m) & ((1 << n) - 1);
        let xb = (j >> (m + n)) & ((1 << b) - 1);
        let xa = j >> (m + n + b);
        (((((xa << n) | xn) << b) | xb) << m) | xm
    })
}

/// `(U_b† ⊗ I) · SELECT · (U_b ⊗ I)` with `U_b|0⟩ = prep`.
pub fn lcu(prep: &CVector, unitaries: &[CMatrix]) -> Result<CMatrix> {
    let ub = unitary_with_first_column(prep)?;
    let id = CMatrix::identity(unitaries[0].dim());
    let load = ub.kron(&id);
    Ok(&(&load.adjoint() * &select(unitaries)) * &load)
}

/// `|i⟩⟨j|` from the LCU `(I − R)/2` of the reflection `R = I − 2|0⟩⟨0|`,
/// conjugated by X-strings, with one idle ancilla on top.
pub fn basis_projector(i: usize, j: usize, n: usize) -> CMatrix {
    let dim = 1usize << n;
    let mut reflection = CMatrix::identity(dim);
    let flipped = CMatrix::outer(&CVector::basis(dim, 0), &CVector::basis(dim, 0)).scale_re(2.0);
    reflection = &reflection - &flipped;
    let half = CVector::uniform(2);
    let core = lcu(&half, &[CMatrix::identity(dim), reflection.scale_re(-1.0)]).expect("uniform prep");
    let full = CMatrix::identity(2).kron(&core);
    let xi = CMatrix::identity(4).kron(&x_string(i, n));
    let xj = CMatrix::identity(4).kron(&x_string(j, n));
    &(&xi * &full) * &xj
}

/// `R_τ = [[√τ, −√(1−τ)], [√(1−τ), √τ]]`
pub fn r_tau(tau: f64) -> CMatrix {
    let (a, b) = (tau.sqrt(), (1.0 - tau).sqrt());
    CMatrix::from_fn(2, 2, |i, j| c64([[a, -b], [b, a]][i][j], 0.0))
}

/// `(R_τ† ⊗ I)(|0⟩⟨0| ⊗ U + |1⟩⟨1| ⊗ V)(R_τ ⊗ I)`
pub fn weighted_sum(tau: f64, u: &CMatrix, v: &CMatrix) -> CMatrix {
    let r = r_tau(tau).kron(&CMatrix::identity(u.dim()));
    &(&r.adjoint() * &select(&[u.clone(), v.clone()])) * &r
}

/// Index-stacking circuit: layout `[d control][a ancilla][d index][n main]`.
pub fn concat(unitaries: &[CMatrix], a: usize, n: usize) -> CMatrix {
    let count = unitaries.len();
    let d = count.trailing_zeros() as usize;
    let inner = a + d + n;
    let branches: Vec<CMatrix> = unitaries
        .iter()
        .enumerate()
        .map(|(j, u)| {
            let targets: Vec<usize> = (0..a).chain(a + d..inner).collect();
            let load = embed_on_qubits(u, &targets, inner);
            let mark = embed_on_qubits(&x_string(j, d), &(a..a + d).collect::<Vec<_>>(), inner);
            &mark * &load
        })
        .collect();
    let h = hadamards(d).kron(&CMatrix::identity(1 << inner));
    &(&h * &select(&branches)) * &h
}

/// Two-qubit shrink with `⟨00|G|00⟩ = 1/τ`; the second qubit stays idle.
pub fn deamplify_pair(tau: f64) -> CMatrix {
    ry((1.0 / tau).acos()).kron(&CMatrix::identity(2))
}

/// `F · V_m · F†` on `[ancilla][n]`, where `V_m` applies phase `ω^{−mj}`
/// through controlled `R_Z` rotations on the ancilla.
pub fn cyclic_shift(n: usize, m: usize) -> CMatrix {
    let dim = 1usize << n;
    let angles: Vec<f64> = (0..n).map(|l| -2.0 * PI * (m as f64) * (1u64 << l) as f64 / dim as f64).collect();
    let phases: Vec<C64> = (0..2 * dim)
        .map(|idx| {
            let (anc, j) = (idx / dim, idx % dim);
            let sign = if anc == 0 { 1.0 } else { -1.0 };
            let theta: f64 = (0..n).filter(|l| (j >> l) & 1 == 1).map(|l| angles[l]).sum();
            C64::from_polar(1.0, sign * theta)
        })
        .collect();
    let f = CMatrix::identity(2).kron(&qft(n));
    let v = CMatrix::diagonal(&phases).expect("power-of-two diagonal");
    &(&f * &v) * &f.adjoint()
}

/// `U R U† R U` with `R = 2Π − I` on the ancilla-zero subspace, negated:
/// its block is `−T₃` applied to the singular values of `U`'s block.
pub fn t3_sequence(u: &CMatrix, ancillas: usize) -> CMatrix {
    let total = u.qubits();
    let main = 1usize << (total - ancillas);
    let refl: Vec<C64> = (0..u.dim()).map(|i| c64(if i < main { 1.0 } else { -1.0 }, 0.0)).collect();
    let r = CMatrix::diagonal(&refl).expect("power-of-two diagonal");
    let seq = &(&(&(u * &r) * &u.adjoint()) * &r) * u;
    seq.scale_re(-1.0)
}

/// Controlled rotation `Σ_a |a⟩⟨a| ⊗ e^{−i·a·t·Y}` on `[d word][1 target]`,
/// built as a cascade of `d` singly-controlled `e^{−i·2^j·t·Y}`.
pub fn cr_y(t: f64, d: usize) -> CMatrix {
    let total = d + 1;
    let mut acc = CMatrix::identity(1 << total);
    for j in 0..d {
        let rot = ry((1u64 << j) as f64 * t);
        let controlled = select(&[CMatrix::identity(2), rot]);
        let control_qubit = d - 1 - j;
        acc = &embed_on_qubits(&controlled, &[control_qubit, d], total) * &acc;
    }
    acc
}

/// XOR query `|k⟩|j⟩ ↦ |k ⊕ word_j⟩|j⟩` on `[d word][n index]`.
pub fn xor_query(words: &[u64], d: usize) -> CMatrix {
    let n_dim = words.len();
    permutation(n_dim << d, |idx| {
        let (k, j) = (idx / n_dim, idx % n_dim);
        ((k ^ words[j] as usize) * n_dim) + j
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_swap_moves_registers() {
        let a = CVector::basis(2, 1);
        let b = CVector::basis(2, 0);
        let n = CVector::basis(4, 3);
        let pi = register_swap(1, 1, 2, 0);
        let abn = a.kron(&b).kron(&n);
        let anb = a.kron(&n).kron(&b);
        assert!(pi.apply(&abn).dist(&anb) < 1e-15);
    }

    #[test]
    fn cyclic_shift_block_is_power_of_p() {
        for n in 1..=3 {
            let dim = 1 << n;
            for m in 0..dim {
                let u = cyclic_shift(n, m);
                assert!(u.is_unitary(1e-12));
                let p = permutation(dim, |j| (j + m) % dim);
                assert!(u.top_left(dim, dim).max_abs_diff(&p) < 1e-12);
            }
        }
    }

    #[test]
    fn cr_y_cascade_matches_direct_rotation() {
        let d = 3;
        let t = PI / 8.0;
        let g = cr_y(t, d);
        for a in 0..(1usize << d) {
            let input = CVector::basis(1 << d, a).kron(&CVector::basis(2, 0));
            let out = g.apply(&input);
            let expect = CVector::basis(1 << d, a).kron(&ry(a as f64 * t).column(0));
            assert!(out.dist(&expect) < 1e-13);
        }
    }

    #[test]
    fn concat_circuit_stacks_slices() {
        let u0 = unitary_with_first_column(&CVector::from_real(&[0.6, 0.8]).unwrap()).unwrap();
        let u1 = unitary_with_first_column(&CVector::from_real(&[0.0, 1.0]).unwrap()).unwrap();
        let v = concat(&[u0, u1], 0, 1);
        assert!(v.is_unitary(1e-12));
        let slice = v.column(0).head(4);
        let expect = CVector::from_real(&[0.3, 0.4, 0.0, 0.5]).unwrap();
        assert!(slice.dist(&expect) < 1e-14);
    }
}
