//! Dense complex linear algebra on power-of-two registers.
//!
//! Qubit 0 is the most significant bit of a basis index, so `kron(a, b)`
//! places `a` on the leading qubits. Every encoding in this crate keeps its
//! ancilla register ahead of the main register.

use std::f64::consts::PI;
use std::ops::{Add, Deref, Mul, Sub};

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Working tolerance for unitarity and reconstruction checks.
pub const TOL: f64 = 1e-10;
/// Norms below this are treated as zero when normalizing.
pub const DEGENERATE: f64 = 1e-12;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Exact base-2 logarithm of a power of two.
pub fn log2_exact(n: usize) -> Option<usize> {
    is_pow2(n).then(|| n.trailing_zeros() as usize)
}

fn check_entries<'a>(op: &'static str, it: impl Iterator<Item = &'a C64>) -> Result<()> {
    for z in it {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::contract(op, "non-finite entry"));
        }
    }
    Ok(())
}

/// Complex column vector whose length is a power of two.
#[derive(Clone, Debug, PartialEq)]
pub struct CVector(DVector<C64>);

impl CVector {
    pub fn new(v: DVector<C64>) -> Result<Self> {
        if !is_pow2(v.len()) {
            return Err(Error::contract("CVector", format!("length {} is not a power of two", v.len())));
        }
        check_entries("CVector", v.iter())?;
        Ok(CVector(v))
    }

    pub fn from_vec(v: Vec<C64>) -> Result<Self> {
        Self::new(DVector::from_vec(v))
    }

    pub fn from_real(v: &[f64]) -> Result<Self> {
        Self::new(DVector::from_iterator(v.len(), v.iter().map(|&x| c64(x, 0.0))))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(is_pow2(dim), "dimension {dim} is not a power of two");
        CVector(DVector::zeros(dim))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = c64(1.0, 0.0);
        v
    }

    /// Uniform superposition over `dim` basis states.
    pub fn uniform(dim: usize) -> Self {
        let mut v = Self::zeros(dim);
        let a = 1.0 / (dim as f64).sqrt();
        v.0.fill(c64(a, 0.0));
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn normalized(&self, op: &'static str) -> Result<Self> {
        let n = self.norm();
        if n < DEGENERATE {
            return Err(Error::Degenerate { op, norm: n });
        }
        Ok(self.scale_re(1.0 / n))
    }

    pub fn scale(&self, s: C64) -> Self {
        CVector(&self.0 * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c64(s, 0.0))
    }

    pub fn kron(&self, other: &CVector) -> Self {
        CVector(self.0.kronecker(&other.0))
    }

    pub fn dist(&self, other: &CVector) -> f64 {
        (&self.0 - &other.0).norm()
    }

    /// Leading `len` entries, i.e. the block where the high qubits are zero.
    pub fn head(&self, len: usize) -> Self {
        CVector(self.0.rows(0, len).into_owned())
    }

    /// Zero-extend to `dim` entries.
    pub fn pad_to(&self, dim: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0.rows_mut(0, self.dim()).copy_from(&self.0);
        v
    }

    pub fn max_imag(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn re(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).collect()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        CVector(self.0.map(f))
    }

    pub fn inner(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<C64> {
        self.0
    }
}

impl Deref for CVector {
    type Target = DVector<C64>;
    fn deref(&self) -> &DVector<C64> {
        &self.0
    }
}

impl Add for &CVector {
    type Output = CVector;
    fn add(self, rhs: &CVector) -> CVector {
        CVector(&self.0 + &rhs.0)
    }
}

impl Sub for &CVector {
    type Output = CVector;
    fn sub(self, rhs: &CVector) -> CVector {
        CVector(&self.0 - &rhs.0)
    }
}

/// Complex matrix with power-of-two row and column counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !is_pow2(m.nrows()) || !is_pow2(m.ncols()) {
            return Err(Error::contract(
                "CMatrix",
                format!("shape {}x{} is not power-of-two", m.nrows(), m.ncols()),
            ));
        }
        check_entries("CMatrix", m.iter())?;
        Ok(CMatrix(m))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(is_pow2(rows) && is_pow2(cols), "shape {rows}x{cols} is not power-of-two");
        CMatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_real(rows: usize, cols: usize, data_row_major: &[f64]) -> Result<Self> {
        if data_row_major.len() != rows * cols {
            return Err(Error::contract("CMatrix", "data length does not match shape"));
        }
        Self::new(DMatrix::from_fn(rows, cols, |i, j| c64(data_row_major[i * cols + j], 0.0)))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(is_pow2(dim), "dimension {dim} is not a power of two");
        CMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| C64::default())
    }

    pub fn diagonal(d: &[C64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `|v⟩⟨w|`
    pub fn outer(v: &CVector, w: &CVector) -> Self {
        CMatrix(v.inner() * w.inner().adjoint())
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.0.is_square());
        self.0.nrows()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        CMatrix(self.0.transpose())
    }

    pub fn kron(&self, other: &CMatrix) -> Self {
        CMatrix(self.0.kronecker(&other.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix(&self.0 * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c64(s, 0.0))
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        CVector(&self.0 * v.inner())
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector(self.0.column(j).into_owned())
    }

    /// Top-left `rows x cols` block.
    pub fn top_left(&self, rows: usize, cols: usize) -> Self {
        CMatrix(self.0.view((0, 0), (rows, cols)).into_owned())
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.0.iter().all(|z| z.norm_sqr() == 0.0) {
            return 0.0;
        }
        match to_faer(&self.0).singular_values() {
            Ok(s) => s.into_iter().fold(0.0, f64::max),
            Err(_) => f64::NAN,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Spectral distance `‖self − other‖₂`.
    pub fn dist(&self, other: &CMatrix) -> f64 {
        CMatrix(&self.0 - &other.0).spectral_norm()
    }

    /// Largest entrywise modulus of `self − other`; cheap comparison for large matrices.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.0.iter().zip(other.0.iter()).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        if !self.0.is_square() {
            return false;
        }
        let prod = self.0.adjoint() * &self.0;
        let id = DMatrix::<C64>::identity(self.0.nrows(), self.0.ncols());
        (prod - id).iter().all(|z| z.norm() <= tol)
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }
}

impl Deref for CMatrix {
    type Target = DMatrix<C64>;
    fn deref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kron(b)
}

/// Singular value decomposition `m = U · diag(s) · V†` with `s` descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    /// Rebuild `U · diag(f(s)) · V†`.
    pub fn compose(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let mut us = self.u.0.clone();
        for (j, &s) in self.s.iter().enumerate() {
            let fs = f(s);
            us.column_mut(j).scale_mut(fs);
        }
        CMatrix(us * self.v.0.adjoint())
    }
}

fn to_faer(m: &DMatrix<C64>) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

// faer rather than nalgebra: nalgebra's SVD loses accuracy (errors near 1e-2)
// on matrices with repeated singular values, which projectors hit constantly.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    let raw = to_faer(&m.0).thin_svd().map_err(|e| Error::numeric("svd", format!("{e:?}")))?;
    let sv = raw.S().column_vector();
    let k = sv.nrows();
    let s = (0..k).map(|i| sv[i].re).collect();
    Ok(Svd { u: CMatrix(from_faer(raw.U())), s, v: CMatrix(from_faer(raw.V())) })
}

/// Halmos dilation `[[b, √(I−bb†)], [√(I−b†b), −b†]]` of a contraction.
///
/// Both square roots come from one SVD of `b`, which keeps the four blocks
/// mutually consistent when singular values approach one.
pub fn unitary_dilation(b: &CMatrix) -> Result<CMatrix> {
    if !b.is_square() {
        return Err(Error::contract("unitary_dilation", "block must be square"));
    }
    let d = svd(b)?;
    if d.s[0] > 1.0 + 1e-12 {
        return Err(Error::contract("unitary_dilation", format!("‖b‖₂ = {} exceeds 1", d.s[0])));
    }
    let root = |s: f64| (1.0 - s.min(1.0) * s.min(1.0)).max(0.0).sqrt();
    let left = Svd { u: d.u.clone(), s: d.s.clone(), v: d.u.clone() }.compose(root);
    let right = Svd { u: d.v.clone(), s: d.s.clone(), v: d.v.clone() }.compose(root);
    let n = b.dim();
    let mut w = DMatrix::<C64>::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (n, n)).copy_from(&b.0);
    w.view_mut((0, n), (n, n)).copy_from(&left.0);
    w.view_mut((n, 0), (n, n)).copy_from(&right.0);
    w.view_mut((n, n), (n, n)).copy_from(&(-b.0.adjoint()));
    Ok(CMatrix(w))
}

/// Quantum Fourier transform `F[i,j] = ω^{ij}/√N`, `ω = e^{2πi/N}`.
pub fn qft(n: usize) -> CMatrix {
    let dim = 1usize << n;
    let s = 1.0 / (dim as f64).sqrt();
    CMatrix::from_fn(dim, dim, |i, j| {
        let k = (i * j) % dim;
        C64::from_polar(s, 2.0 * PI * k as f64 / dim as f64)
    })
}

/// A unitary whose first column is the unit vector `v` (complex Householder).
pub fn unitary_with_first_column(v: &CVector) -> Result<CMatrix> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::contract("unitary_with_first_column", format!("‖v‖ = {n}")));
    }
    let dim = v.dim();
    let v0 = v[0];
    let phase = if v0.norm() > 1e-300 { v0 / v0.norm() } else { c64(1.0, 0.0) };
    let mut w = -v.inner().clone();
    w[0] += phase;
    let wn = w.norm_squared();
    let id = DMatrix::<C64>::identity(dim, dim);
    let h = if wn < 1e-30 { id } else { id - (&w * w.adjoint()) * c64(2.0 / wn, 0.0) };
    Ok(CMatrix(h * phase))
}

/// Embed `op` acting on `targets` (qubit 0 = most significant) into a
/// `total`-qubit register. `targets[0]` carries the most significant bit of `op`.
pub fn embed_on_qubits(op: &CMatrix, targets: &[usize], total: usize) -> CMatrix {
    let k = targets.len();
    assert_eq!(op.nrows(), 1 << k, "operator size does not match target count");
    let dim = 1usize << total;
    let shifts: Vec<usize> = targets.iter().map(|&q| total - 1 - q).collect();
    let mask: usize = shifts.iter().map(|&s| 1usize << s).sum();
    let local = |idx: usize| shifts.iter().fold(0usize, |acc, &s| (acc << 1) | ((idx >> s) & 1));
    let scatter = |bits: usize| {
        shifts.iter().enumerate().fold(0usize, |acc, (pos, &s)| acc | (((bits >> (k - 1 - pos)) & 1) << s))
    };
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for col in 0..dim {
        let lc = local(col);
        let rest = col & !mask;
        for lr in 0..(1 << k) {
            let z = op[(lr, lc)];
            if z != C64::default() {
                m[(rest | scatter(lr), col)] = z;
            }
        }
    }
    CMatrix(m)
}

/// Permutation matrix sending basis state `j` to `f(j)`.
pub fn permutation(dim: usize, f: impl Fn(usize) -> usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        m.0[(f(j), j)] = c64(1.0, 0.0);
    }
    m
}
