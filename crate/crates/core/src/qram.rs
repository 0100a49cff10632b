//! Classical emulation of the memory oracles: word QRAM, state-preparation
//! trees, the preprocessed matrix structure and QRAM-fed diagonal encodings.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit;
use crate::encodings::{be_lcu, BlockEncoding, Mode, VectorEncoding, CIRCUIT_QUBIT_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{c64, embed_on_qubits, is_pow2, unitary_with_first_column, CMatrix, CVector, C64, DEGENERATE, TOL};
use crate::tensor::Tensor;

/// Default bit width for stored rotation angles.
pub const DEFAULT_ANGLE_BITS: usize = 16;

/// Word table answering `|i⟩|0⟩ ↦ |i⟩|x_i⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalQram {
    words: Vec<u64>,
    word_bits: usize,
}

impl ClassicalQram {
    pub fn new(size: usize, word_bits: usize) -> Result<Self> {
        if !is_pow2(size) {
            return Err(Error::contract("ClassicalQram", format!("size {size} is not a power of two")));
        }
        if word_bits == 0 || word_bits > 63 {
            return Err(Error::contract("ClassicalQram", format!("word width {word_bits} outside 1..=63")));
        }
        Ok(ClassicalQram { words: vec![0; size], word_bits })
    }

    pub fn from_words(words: Vec<u64>, word_bits: usize) -> Result<Self> {
        let mut q = Self::new(words.len(), word_bits)?;
        for (i, w) in words.into_iter().enumerate() {
            q.write(i, w)?;
        }
        Ok(q)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word_bits(&self) -> usize {
        self.word_bits
    }

    pub fn read(&self, addr: usize) -> Result<u64> {
        self.words
            .get(addr)
            .copied()
            .ok_or_else(|| Error::contract("qram_read", format!("address {addr} out of range {}", self.words.len())))
    }

    pub fn write(&mut self, addr: usize, word: u64) -> Result<()> {
        if word >> self.word_bits != 0 {
            return Err(Error::contract("qram_write", format!("word {word} needs more than {} bits", self.word_bits)));
        }
        let len = self.words.len();
        let slot = self
            .words
            .get_mut(addr)
            .ok_or_else(|| Error::contract("qram_write", format!("address {addr} out of range {len}")))?;
        *slot = word;
        Ok(())
    }

    /// A query on the uniform superposition of addresses, read out classically.
    pub fn read_all(&self) -> &[u64] {
        &self.words
    }

    /// Query unitary on `[d word][n address]`.
    pub fn unitary(&self) -> CMatrix {
        circuit::xor_query(&self.words, self.word_bits)
    }

    pub fn depth(&self) -> String {
        "O(d log N)".into()
    }
}

/// Binary tree of partial squared norms over the amplitudes of `x`.
///
/// Heap layout: node 1 is the root, node `k` has children `2k` and `2k+1`,
/// and leaf `i` sits at `N + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePrepTree {
    nodes: Vec<f64>,
    leaves: Vec<C64>,
}

impl StatePrepTree {
    pub fn build(x: &CVector) -> Result<Self> {
        let n = x.dim();
        let mut nodes = vec![0.0; 2 * n];
        for (i, z) in x.iter().enumerate() {
            nodes[n + i] = z.norm_sqr();
        }
        for k in (1..n).rev() {
            nodes[k] = nodes[2 * k] + nodes[2 * k + 1];
        }
        if nodes[1].sqrt() < DEGENERATE {
            return Err(Error::Degenerate { op: "build_state_tree", norm: x.norm() });
        }
        Ok(StatePrepTree { nodes, leaves: x.iter().copied().collect() })
    }

    pub fn dim(&self) -> usize {
        self.leaves.len()
    }

    pub fn squared_norm(&self) -> f64 {
        self.node(1)
    }

    /// Partial squared norm at heap index `k` (leaves at `N..2N`).
    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// A new tree with entry `i` replaced, plus the number of nodes rewritten.
    pub fn with_update(&self, i: usize, value: C64) -> Result<(Self, usize)> {
        let n = self.dim();
        if i >= n {
            return Err(Error::contract("state_tree_update", format!("index {i} out of range {n}")));
        }
        let mut next = self.clone();
        next.leaves[i] = value;
        let mut k = n + i;
        next.nodes[k] = value.norm_sqr();
        let mut touched = 1;
        while k > 1 {
            k /= 2;
            next.nodes[k] = next.nodes[2 * k] + next.nodes[2 * k + 1];
            touched += 1;
        }
        if next.nodes[1].sqrt() < DEGENERATE {
            return Err(Error::Degenerate { op: "state_tree_update", norm: 0.0 });
        }
        Ok((next, touched))
    }

    pub fn leaves(&self) -> &[C64] {
        &self.leaves
    }
}

fn quantize_angle(theta: f64, d: usize) -> f64 {
    let steps = (1u64 << d) as f64;
    (theta * steps / PI).round() * PI / steps
}

/// Grover–Rudolph loader: (1, 0, ε) encoding of `x/‖x‖` with `d`-bit angles.
///
/// Each level is a multiplexed `R_Y` whose angles are rounded to multiples of
/// `π/2^d`; a level whose angles move by at most `Δ` moves the state by at
/// most `Δ`, so ε is the sum of the per-level worst shifts. Leaf phases are
/// applied exactly.
pub fn state_prep_ve(tree: &StatePrepTree, d: usize, mode: Mode) -> Result<VectorEncoding> {
    const OP: &str = "state_prep_ve";
    if d == 0 || d > 52 {
        return Err(Error::contract(OP, format!("angle bits {d} outside 1..=52")));
    }
    let n = tree.dim();
    let mut amp = vec![1.0f64; 2 * n];
    let mut eps = 0.0f64;
    let mut level_start = 1usize;
    while level_start < n {
        let mut worst = 0.0f64;
        for k in level_start..2 * level_start {
            let total = tree.node(k);
            let theta = if total > 0.0 { (tree.node(2 * k) / total).clamp(0.0, 1.0).sqrt().acos() } else { 0.0 };
            let q = quantize_angle(theta, d);
            worst = worst.max((q - theta).abs());
            amp[2 * k] = amp[k] * q.cos();
            amp[2 * k + 1] = amp[k] * q.sin();
        }
        eps += worst;
        level_start *= 2;
    }
    let phases = tree.leaves().iter().map(|z| if z.norm() > 0.0 { z / z.norm() } else { c64(1.0, 0.0) });
    let vec = CVector::from_vec(phases.enumerate().map(|(i, ph)| ph * amp[n + i]).collect())?;
    let target = CVector::from_vec(tree.leaves().to_vec())?.scale_re(1.0 / tree.squared_norm().sqrt());
    let mut ve = VectorEncoding::from_parts(vec, 1.0, 0, eps, Some(target))?;
    ve.depth = "O(log² N)".into();
    if mode == Mode::Circuit {
        ve = ve.materialize()?;
    }
    Ok(ve)
}

/// Column decomposition `W = Σ_j a_j |w_j⟩⟨j|` with `d`-bit arccos words for `a_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixQramStructure {
    pub d: usize,
    pub unit_columns: Vec<CVector>,
    pub col_norms: Vec<f64>,
    pub angle_words: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct StructureFile {
    d: usize,
    col_norms: Vec<f64>,
    angle_words: Vec<u64>,
    unit_columns: Tensor,
}

/// `b = round(arccos(a)·D/π)`, kept inside `d` bits.
pub fn angle_word(a: f64, d: usize) -> u64 {
    let steps = (1u64 << d) as f64;
    let b = (a.clamp(-1.0, 1.0).acos() * steps / PI).round();
    (b as u64).min((1u64 << d) - 1)
}

pub fn word_cos(b: u64, d: usize) -> f64 {
    (b as f64 * PI / (1u64 << d) as f64).cos()
}

impl MatrixQramStructure {
    pub fn build(w: &CMatrix, d: usize) -> Result<Self> {
        const OP: &str = "build_matrix_structure";
        if !w.is_square() {
            return Err(Error::contract(OP, "matrix must be square"));
        }
        if d == 0 || d > 52 {
            return Err(Error::contract(OP, format!("precision bits {d} outside 1..=52")));
        }
        let norm = w.spectral_norm();
        if norm > 1.0 + TOL {
            return Err(Error::contract(OP, format!("‖W‖₂ = {norm} exceeds 1; rescale first")));
        }
        let dim = w.dim();
        let mut unit_columns = Vec::with_capacity(dim);
        let mut col_norms = Vec::with_capacity(dim);
        for j in 0..dim {
            let col = w.column(j);
            let a = col.norm().min(1.0);
            // A zero column can point anywhere; e_j keeps the oracle well defined.
            let unit = if col.norm() > DEGENERATE { col.scale_re(1.0 / col.norm()) } else { CVector::basis(dim, j) };
            unit_columns.push(unit);
            col_norms.push(a);
        }
        let angle_words = col_norms.iter().map(|&a| angle_word(a, d)).collect();
        Ok(MatrixQramStructure { d, unit_columns, col_norms, angle_words })
    }

    pub fn dim(&self) -> usize {
        self.col_norms.len()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// `Σ_j a_j |w_j⟩⟨j|`.
    pub fn reconstruct(&self) -> CMatrix {
        let dim = self.dim();
        CMatrix::from_fn(dim, dim, |i, j| self.unit_columns[j][i] * self.col_norms[j])
    }

    /// Worst `|a_j − cos(b_j π/D)|`.
    pub fn rounding_error(&self) -> f64 {
        self.col_norms
            .iter()
            .zip(&self.angle_words)
            .map(|(&a, &b)| (a - word_cos(b, self.d)).abs())
            .fold(0.0, f64::max)
    }

    /// `U_W|j⟩|0⟩ = |j⟩|w_j⟩` on `[n index][n data]`.
    pub fn oracle_unitary(&self) -> Result<CMatrix> {
        let loaders = self.unit_columns.iter().map(unitary_with_first_column).collect::<Result<Vec<_>>>()?;
        Ok(circuit::select(&loaders))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = StructureFile {
            d: self.d,
            col_norms: self.col_norms.clone(),
            angle_words: self.angle_words.clone(),
            unit_columns: Tensor::from_rows(&self.unit_columns),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StructureFile = serde_json::from_str(text)?;
        let unit_columns = file.unit_columns.to_rows()?;
        let dim = unit_columns.len();
        if file.col_norms.len() != dim || file.angle_words.len() != dim || unit_columns.iter().any(|c| c.dim() != dim) {
            return Err(Error::Config("structure arrays disagree on dimension".into()));
        }
        if let Some(c) = unit_columns.iter().find(|c| (c.norm() - 1.0).abs() > 1e-10) {
            return Err(Error::Config(format!("unit column has norm {}", c.norm())));
        }
        if file.col_norms.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("column norms must lie in [0, 1]".into()));
        }
        if file.d == 0 || file.d > 52 || file.angle_words.iter().any(|&b| b >> file.d != 0) {
            return Err(Error::Config(format!("angle words must fit in d = {} bits", file.d)));
        }
        Ok(MatrixQramStructure { d: file.d, unit_columns, col_norms: file.col_norms, angle_words: file.angle_words })
    }
}

/// Entangle each index with its column: encodes `Σ_j ψ_j |j⟩|w_j⟩` with the
/// input's (α, a, ε), since `U_W` is an isometry on the data register.
pub fn oracle_uw(s: &MatrixQramStructure, psi: &VectorEncoding) -> Result<VectorEncoding> {
    if psi.vec.dim() != s.dim() {
        return Err(Error::contract("oracle_uw", format!("vector dim {} vs structure dim {}", psi.vec.dim(), s.dim())));
    }
    let spread = |v: &CVector| {
        let parts: Vec<C64> =
            (0..s.dim()).flat_map(|j| s.unit_columns[j].iter().map(move |w| v[j] * w).collect::<Vec<_>>()).collect();
        CVector::from_vec(parts).expect("square of a power of two")
    };
    let n = s.qubits();
    let realization = match &psi.realization {
        Some(rp) if psi.total_qubits() + n <= CIRCUIT_QUBIT_LIMIT => {
            let total = psi.total_qubits() + n;
            let load = rp.kron(&CMatrix::identity(1 << n));
            let data: Vec<usize> = (psi.ancillas..total).collect();
            Some(&embed_on_qubits(&s.oracle_unitary()?, &data, total) * &load)
        }
        _ => None,
    };
    Ok(VectorEncoding {
        vec: spread(&psi.vec),
        alpha: psi.alpha,
        ancillas: psi.ancillas,
        eps_bound: psi.eps_bound,
        target: psi.target.as_ref().map(spread),
        realization,
        depth: format!("{}+O(log² N)", psi.depth),
    })
}

/// `(1, d+1, ε)` encoding of `diag(a)` whose block holds `cos(b_j π/D)`.
///
/// ε is the worst rounding gap `|a_j − cos(b_j π/D)|`, at most `π/2^{d+1}`.
/// Circuit layout is `[rotation][d word][n main]`:
/// `(I ⊗ U†)(CR_Y(π/D) ⊗ I)(I ⊗ U)` with `U` the XOR word query.
pub fn diagonal_be_from_qram(a: &[f64], d: usize, mode: Mode) -> Result<BlockEncoding> {
    const OP: &str = "diagonal_be_from_qram";
    if !is_pow2(a.len()) {
        return Err(Error::contract(OP, format!("{} entries is not a power of two", a.len())));
    }
    if let Some(x) = a.iter().find(|x| !(x.abs() <= 1.0)) {
        return Err(Error::contract(OP, format!("entry {x} has magnitude above 1")));
    }
    if d == 0 || d > 52 {
        return Err(Error::contract(OP, format!("precision bits {d} outside 1..=52")));
    }
    let words: Vec<u64> = a.iter().map(|&x| angle_word(x, d)).collect();
    let stored: Vec<C64> = words.iter().map(|&b| c64(word_cos(b, d), 0.0)).collect();
    let eps = a.iter().zip(&stored).map(|(x, s)| (x - s.re).abs()).fold(0.0, f64::max);
    let block = CMatrix::diagonal(&stored)?;
    let target = CMatrix::diagonal(&a.iter().map(|&x| c64(x, 0.0)).collect::<Vec<_>>())?;
    let n = block.qubits();
    let total = 1 + d + n;
    let realization = (mode == Mode::Circuit && total <= CIRCUIT_QUBIT_LIMIT).then(|| {
        let query = CMatrix::identity(2).kron(&circuit::xor_query(&words, d));
        let rot_targets: Vec<usize> = (1..=d).chain([0]).collect();
        let rot = embed_on_qubits(&circuit::cr_y(PI / (1u64 << d) as f64, d), &rot_targets, total);
        &(&query.adjoint() * &rot) * &query
    });
    if mode == Mode::Circuit && realization.is_none() {
        return Err(Error::contract(OP, format!("{total} qubits exceed the circuit limit")));
    }
    Ok(BlockEncoding {
        block,
        alpha: 1.0,
        ancillas: d + 1,
        eps_bound: eps,
        target: Some(target),
        realization,
        depth: "O(dn)".into(),
    })
}

/// `(2, d+2, ·)` encoding of a complex diagonal: real and imaginary parts
/// summed with one extra ancilla.
pub fn diagonal_be_complex(a: &[C64], d: usize, mode: Mode) -> Result<BlockEncoding> {
    let re: Vec<f64> = a.iter().map(|z| z.re).collect();
    let im: Vec<f64> = a.iter().map(|z| z.im).collect();
    let mut parts = [diagonal_be_from_qram(&re, d, mode)?, diagonal_be_from_qram(&im, d, mode)?.with_phase(c64(0.0, 1.0))];
    // The LCU needs one shared error bound; the larger one covers both parts.
    let eps = parts[0].eps_bound.max(parts[1].eps_bound);
    for p in &mut parts {
        p.eps_bound = eps;
    }
    be_lcu(&parts, &[1.0, 1.0], None)
}

/// State of the rotation qubit after `CR_Y(π/D)` acts on `|word⟩|0⟩`.
pub fn cr_y_load(word: u64, d: usize) -> Result<CVector> {
    if d == 0 || d > CIRCUIT_QUBIT_LIMIT - 1 {
        return Err(Error::contract("cr_y_load", format!("word width {d} outside 1..={}", CIRCUIT_QUBIT_LIMIT - 1)));
    }
    if word >> d != 0 {
        return Err(Error::contract("cr_y_load", format!("word {word} needs more than {d} bits")));
    }
    let gate = circuit::cr_y(PI / (1u64 << d) as f64, d);
    let input = CVector::basis(1 << d, word as usize).kron(&CVector::basis(2, 0));
    let out = gate.apply(&input);
    let base = 2 * word as usize;
    CVector::from_vec(vec![out[base], out[base + 1]])
}
