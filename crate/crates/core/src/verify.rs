//! Randomized ledger suites for every encoding operation, plus circuit
//! cross-checks for the primitives that have explicit unitaries.
//!
//! Each case builds inputs whose true targets are known, runs one operation,
//! and compares the result against an independently computed target and the
//! closed-form `(α, a, ε)` the operation promises.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{output_block, output_budget, skip_norm_block, ResidualBlockSpec, OUTPUT_TAU, SKIP_NORM_GROWTH};
use crate::convolution::{
    conv_block_encoding, conv_direct, permutation_be, shift_q_be, shift_qm_be, ConvKernel, FeatureMap, CONV_AMPLIFY_EPS,
};
use crate::encodings::{
    be_basis_projector, be_lcu, be_product, be_tensor, ve_concat, ve_deamplify, ve_equal_copies, ve_matvec, ve_normalize,
    ve_sum, ve_tensor, ve_traceout, BlockEncoding, Mode, VectorEncoding, BOUND_SLACK, CIRCUIT_QUBIT_LIMIT,
};
use crate::error::{Error, Result};
use crate::linalg::{c64, svd, unitary_with_first_column, CMatrix, CVector, C64};
use crate::nonlinear::{be_row_projector, erf_apply_ve, matvec_squared};
use crate::polynomials::{oblivious_aa_half, sv_transform, t3, uniform_sv_amplify};
use crate::qram::{diagonal_be_complex, diagonal_be_from_qram, oracle_uw, state_prep_ve, MatrixQramStructure, StatePrepTree};

pub const VERIFY_SCHEMA: &str = "qnn.verify.v1";
/// Agreement required between a circuit's block and the semantic block.
pub const CIRCUIT_TOL: f64 = 1e-10;
const LEDGER_TOL: f64 = 1e-9;

/// What to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Randomized cases per operation.
    pub cases: usize,
    /// Test hook: scale the recorded α of this lemma so its ledger check fails.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_alpha: Option<String>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { seed: 0, cases: 200, corrupt_alpha: None }
    }
}

/// How the recorded ε must relate to the closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsRule {
    Equal,
    AtMost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub lemma: String,
    pub case: usize,
    pub alpha: f64,
    pub alpha_expected: f64,
    pub ancillas: usize,
    pub ancillas_expected: usize,
    pub eps_bound: f64,
    pub eps_expected: f64,
    pub eps_rule: EpsRule,
    pub eps_actual: f64,
    pub ledger_ok: bool,
    pub bound_ok: bool,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitRecord {
    pub primitive: String,
    pub case: usize,
    pub qubits: usize,
    pub unitarity_gap: f64,
    pub block_gap: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub lemma: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest `eps_actual / eps_bound` over cases with a nonzero bound.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub config: VerifyConfig,
    pub suites: Vec<SuiteSummary>,
    pub records: Vec<CaseRecord>,
    pub circuit: Vec<CircuitRecord>,
    pub passed: bool,
}

impl VerifyReport {
    /// First failing lemma or primitive, if any.
    pub fn first_failure(&self) -> Option<&str> {
        self.records
            .iter()
            .find(|r| !r.passed)
            .map(|r| r.lemma.as_str())
            .or_else(|| self.circuit.iter().find(|c| !c.passed).map(|c| c.primitive.as_str()))
    }

    /// The error the command line reports for a failed run.
    pub fn failure(&self) -> Option<Error> {
        if let Some(r) = self.records.iter().find(|r| !r.passed) {
            let (actual, bound) = if r.ledger_ok { (r.eps_actual, r.eps_bound) } else { (r.alpha, r.alpha_expected) };
            let what = if r.ledger_ok { "error bound" } else { "ledger" };
            return Some(Error::BoundViolation { lemma: format!("{} ({what}, case {})", r.lemma, r.case), actual, bound });
        }
        self.circuit.iter().find(|c| !c.passed).map(|c| Error::BoundViolation {
            lemma: format!("{} (circuit, case {})", c.primitive, c.case),
            actual: c.block_gap.max(c.unitarity_gap),
            bound: CIRCUIT_TOL,
        })
    }
}

/// Closed-form ledger an operation promises.
struct Expect {
    alpha: f64,
    ancillas: usize,
    eps: f64,
    rule: EpsRule,
}

impl Expect {
    fn exact(alpha: f64, ancillas: usize, eps: f64) -> Self {
        Expect { alpha, ancillas, eps, rule: EpsRule::Equal }
    }

    fn at_most(alpha: f64, ancillas: usize, eps: f64) -> Self {
        Expect { alpha, ancillas, eps, rule: EpsRule::AtMost }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEDGER_TOL * b.abs().max(1.0)
}

struct Observed {
    alpha: f64,
    ancillas: usize,
    eps_bound: f64,
    eps_actual: f64,
}

fn of_ve(v: &VectorEncoding, oracle: &CVector) -> Observed {
    Observed { alpha: v.alpha, ancillas: v.ancillas, eps_bound: v.eps_bound, eps_actual: oracle.dist(&v.vec.scale_re(v.alpha)) }
}

fn of_be(b: &BlockEncoding, oracle: &CMatrix) -> Observed {
    Observed { alpha: b.alpha, ancillas: b.ancillas, eps_bound: b.eps_bound, eps_actual: oracle.dist(&b.block.scale_re(b.alpha)) }
}

fn record(lemma: &str, case: usize, mut obs: Observed, exp: Expect, cfg: &VerifyConfig) -> CaseRecord {
    if cfg.corrupt_alpha.as_deref() == Some(lemma) {
        obs.alpha *= 1.5;
    }
    let eps_ok = match exp.rule {
        EpsRule::Equal => close(obs.eps_bound, exp.eps),
        EpsRule::AtMost => obs.eps_bound <= exp.eps * (1.0 + LEDGER_TOL) + f64::MIN_POSITIVE,
    };
    let ledger_ok = close(obs.alpha, exp.alpha) && obs.ancillas == exp.ancillas && eps_ok;
    let bound_ok = obs.eps_actual <= obs.eps_bound + BOUND_SLACK;
    CaseRecord {
        lemma: lemma.into(),
        case,
        alpha: obs.alpha,
        alpha_expected: exp.alpha,
        ancillas: obs.ancillas,
        ancillas_expected: exp.ancillas,
        eps_bound: obs.eps_bound,
        eps_expected: exp.eps,
        eps_rule: exp.rule,
        eps_actual: obs.eps_actual,
        ledger_ok,
        bound_ok,
        passed: ledger_ok && bound_ok,
        error: None,
    }
}

fn errored(lemma: &str, case: usize, e: Error) -> CaseRecord {
    CaseRecord {
        lemma: lemma.into(),
        case,
        alpha: f64::NAN,
        alpha_expected: f64::NAN,
        ancillas: 0,
        ancillas_expected: 0,
        eps_bound: f64::NAN,
        eps_expected: f64::NAN,
        eps_rule: EpsRule::Equal,
        eps_actual: f64::NAN,
        ledger_ok: false,
        bound_ok: false,
        passed: false,
        error: Some(e.to_string()),
    }
}

type R = ChaCha8Rng;

fn rand_state(rng: &mut R, dim: usize, real: bool) -> CVector {
    loop {
        let v: Vec<C64> =
            (0..dim).map(|_| c64(rng.gen_range(-1.0..1.0), if real { 0.0 } else { rng.gen_range(-1.0..1.0) })).collect();
        let v = CVector::from_vec(v).expect("power-of-two length");
        if v.norm() > 0.1 {
            return v.normalized("verify").expect("nonzero");
        }
    }
}

fn rand_matrix(rng: &mut R, dim: usize, norm: f64, real: bool) -> CMatrix {
    let m = CMatrix::from_fn(dim, dim, |_, _| c64(rng.gen_range(-1.0..1.0), if real { 0.0 } else { rng.gen_range(-1.0..1.0) }));
    m.scale_re(norm / m.spectral_norm())
}

fn rand_unitary(rng: &mut R, dim: usize) -> CMatrix {
    let v = rand_state(rng, dim, false);
    let h = unitary_with_first_column(&v).expect("unit column");
    let phases: Vec<C64> = (0..dim).map(|_| C64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))).collect();
    &h * &CMatrix::diagonal(&phases).expect("nonempty")
}

/// `vec = (t + δ)/α` with `‖δ‖ ≤ ε`; needs at least one ancilla.
fn noisy_ve_with(rng: &mut R, target: &CVector, alpha: f64, eps: f64, ancillas: usize) -> VectorEncoding {
    let real = target.max_imag() == 0.0;
    let delta = rand_state(rng, target.dim(), real).scale_re(eps * rng.gen_range(0.0..1.0));
    let vec = (target + &delta).scale_re(1.0 / alpha);
    VectorEncoding::from_parts(vec, alpha, ancillas, eps, Some(target.clone())).expect("slice inside the unit ball")
}

fn noisy_ve(rng: &mut R, n: usize, real: bool) -> VectorEncoding {
    let t = rand_state(rng, 1 << n, real);
    let alpha = rng.gen_range(1.1..2.0);
    let eps = rng.gen_range(0.0..0.05);
    let a = rng.gen_range(1..=3);
    noisy_ve_with(rng, &t, alpha, eps, a)
}

/// `block = (T + E)/α` with `‖T‖ ≤ 1`, `‖E‖ ≤ ε`.
fn noisy_be_with(rng: &mut R, target: &CMatrix, alpha: f64, eps: f64, ancillas: usize) -> BlockEncoding {
    let dim = target.dim();
    let scale = eps * rng.gen_range(0.0..1.0);
    let e = rand_matrix(rng, dim, scale, false);
    BlockEncoding {
        block: (target + &e).scale_re(1.0 / alpha),
        alpha,
        ancillas,
        eps_bound: eps,
        target: Some(target.clone()),
        realization: None,
        depth: "U".into(),
    }
}

fn noisy_be(rng: &mut R, n: usize) -> BlockEncoding {
    let dim = 1 << n;
    let norm = rng.gen_range(0.3..1.0);
    let t = rand_matrix(rng, dim, norm, false);
    let alpha = rng.gen_range(1.1..2.0);
    let eps = rng.gen_range(0.0..0.05);
    let a = rng.gen_range(0..=3);
    noisy_be_with(rng, &t, alpha, eps, a)
}

fn rounding_gap(a: f64, d: usize) -> f64 {
    let steps = (1u64 << d) as f64;
    let b = ((a.clamp(-1.0, 1.0).acos() * steps / PI).round()).min(steps - 1.0);
    (a - (b * PI / steps).cos()).abs()
}

type Case = fn(&mut R, usize, &VerifyConfig) -> Result<CaseRecord>;

fn suite_be_product(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=4);
    let (u, v) = (noisy_be(rng, n), noisy_be(rng, n));
    let out = be_product(&u, &v)?;
    let oracle = u.target.as_ref().unwrap() * v.target.as_ref().unwrap();
    let exp = Expect::exact(u.alpha * v.alpha, u.ancillas + v.ancillas, u.alpha * v.eps_bound + v.alpha * u.eps_bound);
    Ok(record("be_product", case, of_be(&out, &oracle), exp, cfg))
}

fn suite_be_tensor(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let (n, m) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (u, v) = (noisy_be(rng, n), noisy_be(rng, m));
    let out = be_tensor(&u, &v)?;
    let oracle = u.target.as_ref().unwrap().kron(v.target.as_ref().unwrap());
    let (ea, eb) = (u.eps_bound, v.eps_bound);
    let exp = Expect::exact(u.alpha * v.alpha, u.ancillas + v.ancillas, ea * v.alpha + eb * u.alpha + ea * eb);
    Ok(record("be_tensor", case, of_be(&out, &oracle), exp, cfg))
}

fn suite_be_lcu(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=4);
    let count: usize = rng.gen_range(2..=5);
    let (alpha, eps, a) = (rng.gen_range(1.1..2.0), rng.gen_range(0.0..0.05), rng.gen_range(0..=2));
    let parts: Vec<BlockEncoding> = (0..count)
        .map(|_| {
            let norm = rng.gen_range(0.3..1.0);
            let t = rand_matrix(rng, 1 << n, norm, false);
            noisy_be_with(rng, &t, alpha, eps, a)
        })
        .collect();
    let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.05..1.0)).collect();
    let out = be_lcu(&parts, &weights, None)?;
    let dim = 1 << n;
    let oracle =
        parts.iter().zip(&weights).fold(CMatrix::zeros(dim, dim), |acc, (p, &w)| &acc + &p.target.as_ref().unwrap().scale_re(w));
    let beta: f64 = weights.iter().sum();
    let d = count.next_power_of_two().trailing_zeros() as usize;
    let exp = Expect::exact(alpha * beta, a + d, alpha * beta * eps);
    Ok(record("be_lcu", case, of_be(&out, &oracle), exp, cfg))
}

fn suite_be_basis_projector(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=6);
    let dim = 1usize << n;
    let (i, j) = (rng.gen_range(0..dim), rng.gen_range(0..dim));
    let out = be_basis_projector(i, j, n, Mode::Semantic)?;
    let oracle = CMatrix::from_fn(dim, dim, |r, c| c64(if r == i && c == j { 1.0 } else { 0.0 }, 0.0));
    Ok(record("be_basis_projector", case, of_be(&out, &oracle), Expect::exact(1.0, 2, 0.0), cfg))
}

fn suite_ve_sum(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=6);
    let (u, v) = (noisy_ve(rng, n, false), noisy_ve(rng, n, false));
    let tau = rng.gen_range(0.05..0.95);
    let out = ve_sum(&u, &v, tau)?;
    let gamma = &u.target.as_ref().unwrap().scale_re(tau / u.alpha) + &v.target.as_ref().unwrap().scale_re((1.0 - tau) / v.alpha);
    let norm = gamma.norm();
    let exp = Expect::exact(1.0 / norm, 1 + u.ancillas.max(v.ancillas), (u.eps_bound / u.alpha + v.eps_bound / v.alpha) / norm);
    Ok(record("ve_sum", case, of_ve(&out, &gamma.scale_re(1.0 / norm)), exp, cfg))
}

fn suite_ve_matvec(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=5);
    let (a, psi) = (noisy_be(rng, n), noisy_ve(rng, n, false));
    let out = ve_matvec(&a, &psi)?;
    let image = a.target.as_ref().unwrap().apply(psi.target.as_ref().unwrap());
    let norm = image.norm();
    let exp = Expect::exact(a.alpha * psi.alpha / norm, a.ancillas + psi.ancillas, (a.eps_bound + a.alpha * psi.eps_bound) / norm);
    Ok(record("ve_matvec", case, of_ve(&out, &image.scale_re(1.0 / norm)), exp, cfg))
}

fn suite_ve_tensor(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let (n, m) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (u, v) = (noisy_ve(rng, n, false), noisy_ve(rng, m, false));
    let out = ve_tensor(&u, &v)?;
    let oracle = u.target.as_ref().unwrap().kron(v.target.as_ref().unwrap());
    let (e, d) = (u.eps_bound, v.eps_bound);
    let exp = Expect::exact(u.alpha * v.alpha, u.ancillas + v.ancillas, e + d + e * d);
    Ok(record("ve_tensor", case, of_ve(&out, &oracle), exp, cfg))
}

fn suite_ve_concat(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=4);
    let count = 1usize << rng.gen_range(1..=2);
    let (eps, a) = (rng.gen_range(0.0..0.05), rng.gen_range(1..=2));
    let parts: Vec<VectorEncoding> = (0..count)
        .map(|_| {
            let t = rand_state(rng, 1 << n, false);
            let alpha = rng.gen_range(1.1..2.0);
            noisy_ve_with(rng, &t, alpha, eps, a)
        })
        .collect();
    let out = ve_concat(&parts)?;
    let norm = parts.iter().map(|p| p.alpha.powi(-2)).sum::<f64>().sqrt();
    let pieces: Vec<CVector> = parts.iter().map(|p| p.target.as_ref().unwrap().scale_re(1.0 / (p.alpha * norm))).collect();
    let oracle = CVector::from_vec(pieces.iter().flat_map(|p| p.iter().copied()).collect())?;
    let exp = Expect::exact(count as f64 / norm, count.trailing_zeros() as usize + a, eps);
    Ok(record("ve_concat", case, of_ve(&out, &oracle), exp, cfg))
}

fn suite_ve_normalize(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=6);
    let u = noisy_ve(rng, n, false);
    let hint = u.alpha * rng.gen_range(1.0..1.5);
    let eps1 = [1e-3, 1e-5, 1e-8][rng.gen_range(0..3)];
    let out = ve_normalize(&u, hint, eps1)?;
    let exp = Expect::exact(1.0, u.ancillas + 4, 2.0 * (u.eps_bound + eps1));
    Ok(record("ve_normalize", case, of_ve(&out, u.target.as_ref().unwrap()), exp, cfg))
}

fn suite_ve_deamplify(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=6);
    let u = noisy_ve(rng, n, false);
    let tau = rng.gen_range(1.0..20.0);
    let out = ve_deamplify(&u, tau)?;
    let exp = Expect::exact(u.alpha * tau, u.ancillas + 2, u.eps_bound);
    Ok(record("ve_deamplify", case, of_ve(&out, u.target.as_ref().unwrap()), exp, cfg))
}

fn suite_ve_traceout(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let (m, b) = (rng.gen_range(1..=4), rng.gen_range(1..=2));
    let s = rand_state(rng, 1 << m, false);
    let t = CVector::basis(1 << b, 0).kron(&s);
    let (alpha, eps) = (rng.gen_range(1.1..2.0), rng.gen_range(0.0..0.05));
    let u = noisy_ve_with(rng, &t, alpha, eps, 1);
    let out = ve_traceout(&u, b)?;
    let exp = Expect::exact(alpha, 1 + b, eps);
    Ok(record("ve_traceout", case, of_ve(&out, &s), exp, cfg))
}

fn suite_ve_equal_copies(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let (n, d) = (rng.gen_range(1..=4), rng.gen_range(1..=2));
    let u = noisy_ve(rng, n, false);
    let out = ve_equal_copies(&u, d)?;
    let oracle = CVector::uniform(1 << d).kron(u.target.as_ref().unwrap());
    let exp = Expect::exact(u.alpha, u.ancillas, u.eps_bound);
    Ok(record("ve_equal_copies", case, of_ve(&out, &oracle), exp, cfg))
}

fn suite_state_prep(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=6);
    let x = rand_state(rng, 1 << n, false).scale_re(rng.gen_range(0.5..3.0));
    let d = rng.gen_range(4..=30);
    let out = state_prep_ve(&StatePrepTree::build(&x)?, d, Mode::Semantic)?;
    let cap = n as f64 * PI / (1u64 << (d + 1)) as f64;
    Ok(record("state_prep_ve", case, of_ve(&out, &x.scale_re(1.0 / x.norm())), Expect::at_most(1.0, 0, cap), cfg))
}

fn suite_diagonal(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=6);
    let d = rng.gen_range(3..=20);
    let a: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out = diagonal_be_from_qram(&a, d, Mode::Semantic)?;
    let oracle = CMatrix::diagonal(&a.iter().map(|&x| c64(x, 0.0)).collect::<Vec<_>>())?;
    let eps = a.iter().map(|&x| rounding_gap(x, d)).fold(0.0, f64::max);
    Ok(record("diagonal_be_from_qram", case, of_be(&out, &oracle), Expect::exact(1.0, d + 1, eps), cfg))
}

fn suite_diagonal_complex(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=5);
    let d = rng.gen_range(3..=20);
    let a: Vec<C64> = (0..1 << n).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let out = diagonal_be_complex(&a, d, Mode::Semantic)?;
    let oracle = CMatrix::diagonal(&a)?;
    let eps = a.iter().map(|z| rounding_gap(z.re, d).max(rounding_gap(z.im, d))).fold(0.0, f64::max);
    Ok(record("diagonal_be_complex", case, of_be(&out, &oracle), Expect::exact(2.0, d + 2, 2.0 * eps), cfg))
}

fn suite_oracle_uw(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=3);
    let w = rand_matrix(rng, 1 << n, 1.0, false);
    let s = MatrixQramStructure::build(&w, 16)?;
    let psi = noisy_ve(rng, n, false);
    let out = oracle_uw(&s, &psi)?;
    let t = psi.target.as_ref().unwrap();
    let parts: Vec<CVector> = (0..1 << n).map(|j| {
        let col = w.column(j);
        col.scale(t[j] / c64(col.norm(), 0.0))
    }).collect();
    let oracle = CVector::from_vec(parts.iter().flat_map(|p| p.iter().copied()).collect())?;
    let exp = Expect::exact(psi.alpha, psi.ancillas, psi.eps_bound);
    Ok(record("oracle_uw", case, of_ve(&out, &oracle), exp, cfg))
}

fn suite_permutation(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=6);
    let dim = 1usize << n;
    let power = rng.gen_range(0..2 * dim);
    let out = permutation_be(n, power, Mode::Semantic)?;
    let oracle = CMatrix::from_fn(dim, dim, |i, j| c64(if i == (j + power) % dim { 1.0 } else { 0.0 }, 0.0));
    Ok(record("permutation_be", case, of_be(&out, &oracle), Expect::exact(1.0, 1, 0.0), cfg))
}

fn suite_shift(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=3);
    let dim = 1usize << n;
    let out = shift_qm_be(n, m, Mode::Semantic)?;
    let oracle = CMatrix::from_fn(dim, dim, |i, j| c64(if i == j + m { 1.0 } else { 0.0 }, 0.0));
    Ok(record("shift_qm_be", case, of_be(&out, &oracle), Expect::exact(1.0, 4 * m, 0.0), cfg))
}

fn suite_oblivious_aa(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=4);
    let dim = 1usize << n;
    let (u, v) = (rand_unitary(rng, dim), rand_unitary(rng, dim));
    let keep: Vec<C64> = (0..dim).map(|i| c64(if i == 0 || rng.gen_bool(0.6) { 1.0 } else { 0.0 }, 0.0)).collect();
    let t = &(&u * &CMatrix::diagonal(&keep)?) * &v.adjoint();
    let a = rng.gen_range(1..=3);
    let input = BlockEncoding::from_matrix(&t, 2.0, a)?;
    let out = oblivious_aa_half(&input)?;
    Ok(record("oblivious_aa_half", case, of_be(&out, &t), Expect::exact(1.0, a + 1, 0.0), cfg))
}

fn suite_amplify(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=4);
    let gamma = [1.5, 2.0, 3.0][rng.gen_range(0..3)];
    let delta = [0.25, 0.5][rng.gen_range(0..2)];
    let eps = [1e-6, 1e-9][rng.gen_range(0..2)];
    let alpha = rng.gen_range(1.0..2.0);
    let limit = alpha * (1.0 - delta) / gamma;
    let scale = limit * rng.gen_range(0.2..0.9);
    let t = rand_matrix(rng, 1 << n, scale, false);
    let e_in = if rng.gen_bool(0.5) { 0.0 } else { limit * rng.gen_range(0.0..0.05) };
    let a = rng.gen_range(0..=2);
    let input = noisy_be_with(rng, &t, alpha, e_in, a);
    let out = uniform_sv_amplify(&input, gamma, delta, eps)?;
    let exp = Expect::exact(1.0, input.ancillas + 1, eps + gamma * e_in / alpha);
    Ok(record("uniform_sv_amplify", case, of_be(&out, &t.scale_re(gamma / alpha)), exp, cfg))
}

fn suite_sv_transform(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=4);
    let input = if rng.gen_bool(0.5) {
        let norm = rng.gen_range(0.3..1.0);
        let t = rand_matrix(rng, 1 << n, norm, false);
        BlockEncoding::from_matrix(&t, rng.gen_range(1.0..2.0), rng.gen_range(0..=2))?
    } else {
        noisy_be(rng, n)
    };
    let p = t3();
    let out = sv_transform(&input, &p)?;
    let d = svd(&input.target.as_ref().unwrap().scale_re(1.0 / input.alpha))?;
    let oracle = d.compose(|s| 4.0 * s * s * s - 3.0 * s);
    let eps = if input.eps_bound == 0.0 { 0.0 } else { 4.0 * 3.0 * (input.eps_bound / input.alpha).sqrt() };
    Ok(record("sv_transform", case, of_be(&out, &oracle), Expect::exact(1.0, input.ancillas + 2, eps), cfg))
}

fn suite_erf(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=5);
    let t = rand_state(rng, 1 << n, true);
    let (alpha, eps0) = (rng.gen_range(1.0..2.0), [0.0, 1e-6, 1e-3][rng.gen_range(0..3)]);
    let a = rng.gen_range(1..=2);
    let u = noisy_ve_with(rng, &t, alpha, eps0, a);
    let nu = [0.5, 0.8, 1.6][rng.gen_range(0..3)];
    let eps1 = [1e-3, 1e-5][rng.gen_range(0..2)];
    let out = erf_apply_ve(&u, nu, eps1)?;
    let ideal = CVector::from_real(&t.re().iter().map(|x| libm::erf(nu * x / alpha)).collect::<Vec<_>>())?;
    let norm = ideal.norm();
    let exp = Expect::exact(16.0 * nu / (PI.sqrt() * norm), n + 2 * u.ancillas + 4, 2.0 * nu * alpha * (eps0 + eps1));
    Ok(record("erf_apply_ve", case, of_ve(&out, &ideal.scale_re(1.0 / norm)), exp, cfg))
}

fn suite_row_projector(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=5);
    let v = noisy_ve(rng, n, false);
    let out = be_row_projector(&v)?;
    let oracle = CMatrix::outer(&CVector::basis(1 << n, 0), v.target.as_ref().unwrap());
    Ok(record("be_row_projector", case, of_be(&out, &oracle), Expect::exact(v.alpha, v.ancillas + 2, v.eps_bound), cfg))
}

fn suite_matvec_squared(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(1..=3);
    let real = rng.gen_bool(0.5);
    let w = rand_matrix(rng, 1 << n, 1.0, real);
    let d = rng.gen_range(8..=30);
    let s = MatrixQramStructure::build(&w, d)?;
    let psi = noisy_ve(rng, n, false);
    let out = matvec_squared(&s, &psi)?;
    let t = psi.target.as_ref().unwrap();
    let image = w.apply(&t.map(|z| c64(z.norm_sqr(), 0.0)));
    let norm = image.norm();
    let r = (0..1 << n).map(|j| rounding_gap(w.column(j).norm().min(1.0), d)).fold(0.0, f64::max);
    let (alpha, a, eps) = (psi.alpha, psi.ancillas, psi.eps_bound);
    // The composed chain certifies at most the closed form.
    let exp = Expect::at_most(alpha * alpha / norm, 2 * a + d + 3 + n, (2.0 * alpha * eps + r) / norm);
    Ok(record("matvec_squared", case, of_ve(&out, &image.scale_re(1.0 / norm)), exp, cfg))
}

fn conv_oracle(k: &ConvKernel, side: usize) -> CMatrix {
    let c = k.channels();
    let dim = c * side * side;
    let cols: Vec<CVector> =
        (0..dim).map(|j| conv_direct(k, &FeatureMap::from_vector(&CVector::basis(dim, j), c, side)).vectorize()).collect();
    CMatrix::from_fn(dim, dim, |i, j| cols[j][i])
}

fn suite_conv(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let (c, d) = ([1, 2][rng.gen_range(0..2)], [1, 2][rng.gen_range(0..2)]);
    let k = ConvKernel::from_fn(c, d, |_, _, _, _| rng.gen_range(-1.0..1.0))?;
    let (out, report) = conv_block_encoding(&k, 1)?;
    let full = conv_oracle(&k, 2);
    let norm = full.spectral_norm();
    let gamma = k.l1() / (2.0 * norm);
    let eps = if gamma > 1.0 { CONV_AMPLIFY_EPS } else { 0.0 };
    let ancillas = 3 + 8 * d + 2 * (c * d).trailing_zeros() as usize;
    let mut rec = record("conv_block_encoding", case, of_be(&out, &full.scale_re(0.5 / norm)), Expect::exact(1.0, ancillas, eps), cfg);
    if !report.ratio_bound_ok {
        rec.passed = false;
        rec.error = Some(format!("‖K‖₁/‖𝒞‖₂ = {} above D·C^1.5", report.ratio));
    }
    Ok(rec)
}

fn suite_skip_block(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(2..=4);
    let dim = 1usize << n;
    let t = rand_state(rng, dim, true);
    let psi = state_prep_ve(&StatePrepTree::build(&t)?, rng.gen_range(20..=40), Mode::Semantic)?;
    let kappa = [1.0, 2.0][rng.gen_range(0..2)];
    let w_norm = rng.gen_range(0.2..1.0);
    let w = rand_matrix(rng, dim, w_norm, true);
    let b = rng.gen_range(1..=3);
    let wbe = BlockEncoding::from_matrix(&w.scale_re(1.0 / kappa), 1.0, b)?;
    let eps1 = [1e-4, 1e-6][rng.gen_range(0..2)];
    let spec = ResidualBlockSpec::new(wbe, kappa, eps1)?;
    let out = skip_norm_block(&psi, &spec)?.value;
    let wx = w.apply(&t);
    let oracle = (&t + &wx.map(|z| c64(libm::erf(0.8 * z.re), 0.0))).normalized("verify")?;
    let exp = Expect::exact(1.0, 2 * (psi.ancillas + b) + n + 9, SKIP_NORM_GROWTH * (psi.eps_bound + eps1));
    Ok(record("skip_norm_block", case, of_ve(&out, &oracle), exp, cfg))
}

fn suite_output_block(rng: &mut R, case: usize, cfg: &VerifyConfig) -> Result<CaseRecord> {
    let n = rng.gen_range(2..=4);
    let dim = 1usize << n;
    let t = rand_state(rng, dim, true);
    let psi = state_prep_ve(&StatePrepTree::build(&t)?, rng.gen_range(40..=52), Mode::Semantic)?;
    let w_norm = rng.gen_range(0.5..1.0);
    let w = rand_matrix(rng, dim, w_norm, true);
    let s = MatrixQramStructure::build(&w, 52)?;
    let (c_bins, eps) = (1usize << rng.gen_range(1..=2), [1e-1, 1e-2][rng.gen_range(0..2)]);
    let out = output_block(&psi, &s, c_bins, eps)?.value.0;
    let gamma = &t.scale_re(OUTPUT_TAU) + &w.apply(&t.map(|z| c64(z.norm_sqr(), 0.0))).scale_re(1.0 - OUTPUT_TAU);
    let norm = gamma.norm();
    let r = (0..dim).map(|j| rounding_gap(w.column(j).norm().min(1.0), 52)).fold(0.0, f64::max);
    let eps1 = output_budget(dim, c_bins, eps).eps1;
    let exp = Expect::exact(1.0, 2 * psi.ancillas + 52 + 8 + n, 2.0 * ((3.0 * psi.eps_bound + r) / norm + eps1));
    Ok(record("output_block", case, of_ve(&out, &gamma.scale_re(1.0 / norm)), exp, cfg))
}

/// Every ledger suite, by the name its records carry.
pub const SUITES: &[(&str, Case)] = &[
    ("be_product", suite_be_product),
    ("be_tensor", suite_be_tensor),
    ("be_lcu", suite_be_lcu),
    ("be_basis_projector", suite_be_basis_projector),
    ("ve_sum", suite_ve_sum),
    ("ve_matvec", suite_ve_matvec),
    ("ve_tensor", suite_ve_tensor),
    ("ve_concat", suite_ve_concat),
    ("ve_normalize", suite_ve_normalize),
    ("ve_deamplify", suite_ve_deamplify),
    ("ve_traceout", suite_ve_traceout),
    ("ve_equal_copies", suite_ve_equal_copies),
    ("state_prep_ve", suite_state_prep),
    ("diagonal_be_from_qram", suite_diagonal),
    ("diagonal_be_complex", suite_diagonal_complex),
    ("oracle_uw", suite_oracle_uw),
    ("permutation_be", suite_permutation),
    ("shift_qm_be", suite_shift),
    ("oblivious_aa_half", suite_oblivious_aa),
    ("uniform_sv_amplify", suite_amplify),
    ("sv_transform", suite_sv_transform),
    ("erf_apply_ve", suite_erf),
    ("be_row_projector", suite_row_projector),
    ("matvec_squared", suite_matvec_squared),
    ("conv_block_encoding", suite_conv),
    ("skip_norm_block", suite_skip_block),
    ("output_block", suite_output_block),
];

fn suite_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64 + 1)
}

/// Run `cases` randomized cases of one suite.
pub fn run_suite(name: &str, cfg: &VerifyConfig) -> Result<Vec<CaseRecord>> {
    let (index, (lemma, case_fn)) = SUITES
        .iter()
        .enumerate()
        .find(|(_, (n, _))| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown suite {name:?}")))?;
    let mut rng = R::seed_from_u64(suite_seed(cfg.seed, index));
    Ok((0..cfg.cases).map(|case| case_fn(&mut rng, case, cfg).unwrap_or_else(|e| errored(lemma, case, e))).collect())
}

fn gaps(u: &CMatrix) -> f64 {
    (&u.adjoint() * u).max_abs_diff(&CMatrix::identity(u.dim()))
}

fn circuit_record(primitive: &str, case: usize, u: &CMatrix, block_gap: f64) -> CircuitRecord {
    let unitarity_gap = gaps(u);
    CircuitRecord {
        primitive: primitive.into(),
        case,
        qubits: u.qubits(),
        unitarity_gap,
        block_gap,
        passed: unitarity_gap <= CIRCUIT_TOL && block_gap <= CIRCUIT_TOL && u.qubits() <= CIRCUIT_QUBIT_LIMIT,
    }
}

fn be_circuit(primitive: &str, case: usize, be: &BlockEncoding) -> Result<CircuitRecord> {
    let u = be.realization.as_ref().ok_or_else(|| Error::contract("verify", format!("{primitive} has no circuit")))?;
    Ok(circuit_record(primitive, case, u, be.realization_gap().unwrap_or(f64::INFINITY)))
}

fn ve_circuit(primitive: &str, case: usize, ve: &VectorEncoding) -> Result<CircuitRecord> {
    let u = ve.realization.as_ref().ok_or_else(|| Error::contract("verify", format!("{primitive} has no circuit")))?;
    Ok(circuit_record(primitive, case, u, ve.realization_gap().unwrap_or(f64::INFINITY)))
}

fn circuit_case(index: usize, rng: &mut R, case: usize) -> Result<CircuitRecord> {
    match index {
        0 => {
            let n = rng.gen_range(1..=3);
            let load = |rng: &mut R| -> Result<VectorEncoding> {
                state_prep_ve(&StatePrepTree::build(&rand_state(rng, 1 << n, false))?, 20, Mode::Circuit)
            };
            let (u, v) = (load(rng)?, load(rng)?);
            ve_circuit("sum_r_tau", case, &ve_sum(&u, &v, rng.gen_range(0.1..0.9))?)
        }
        1 => {
            let n = rng.gen_range(1..=3);
            let count = rng.gen_range(2..=4);
            let parts: Vec<BlockEncoding> =
                (0..count).map(|_| permutation_be(n, rng.gen_range(0..1 << n), Mode::Circuit)).collect::<Result<_>>()?;
            let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.1..1.0)).collect();
            be_circuit("lcu_select", case, &be_lcu(&parts, &weights, None)?)
        }
        2 => {
            let n = rng.gen_range(1..=5);
            be_circuit("qft_permutation", case, &permutation_be(n, rng.gen_range(0..1 << n), Mode::Circuit)?)
        }
        3 => {
            let (n, d) = (rng.gen_range(1..=3), rng.gen_range(2..=5));
            let a: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            be_circuit("cr_y_diagonal", case, &diagonal_be_from_qram(&a, d, Mode::Circuit)?)
        }
        4 => {
            let n = rng.gen_range(1..=5);
            let dim = 1 << n;
            be_circuit("basis_projector", case, &be_basis_projector(rng.gen_range(0..dim), rng.gen_range(0..dim), n, Mode::Circuit)?)
        }
        _ => {
            let n = rng.gen_range(1..=3);
            be_circuit("shift_q_lcu_t3", case, &shift_q_be(n, Mode::Circuit)?)
        }
    }
}

const CIRCUIT_PRIMITIVES: [&str; 6] =
    ["sum_r_tau", "lcu_select", "qft_permutation", "cr_y_diagonal", "basis_projector", "shift_q_lcu_t3"];

/// Circuit-mode realizations of the primitives against their semantic blocks.
pub fn circuit_cross_checks(cfg: &VerifyConfig) -> Vec<CircuitRecord> {
    let cases = (cfg.cases / 10).max(20);
    let mut out = Vec::new();
    for (i, name) in CIRCUIT_PRIMITIVES.iter().enumerate() {
        let mut rng = R::seed_from_u64(suite_seed(cfg.seed, 1000 + i));
        for case in 0..cases {
            out.push(circuit_case(i, &mut rng, case).unwrap_or_else(|e| {
                log::warn!("{name} case {case}: {e}");
                CircuitRecord {
                primitive: (*name).into(),
                case,
                qubits: 0,
                unitarity_gap: f64::INFINITY,
                block_gap: f64::INFINITY,
                passed: false,
            }}));
        }
    }
    out
}

/// All suites, run on worker threads and merged in suite order.
pub fn verify_all(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.cases == 0 {
        return Err(Error::Config("cases must be positive".into()));
    }
    if let Some(name) = &cfg.corrupt_alpha {
        if !SUITES.iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!("unknown lemma {name:?} for fault injection")));
        }
    }
    let (per_suite, circuit) = std::thread::scope(|scope| {
        let handles: Vec<_> = SUITES.iter().map(|(name, _)| scope.spawn(move || run_suite(name, cfg))).collect();
        let circuit = scope.spawn(|| circuit_cross_checks(cfg));
        let suites: Vec<Result<Vec<CaseRecord>>> = handles.into_iter().map(|h| h.join().expect("suite thread")).collect();
        (suites, circuit.join().expect("circuit thread"))
    });
    let mut records = Vec::new();
    let mut suites = Vec::new();
    for (recs, (name, _)) in per_suite.into_iter().zip(SUITES) {
        let recs = recs?;
        let worst_ratio = recs
            .iter()
            .filter(|r| r.eps_bound > 0.0)
            .map(|r| r.eps_actual / r.eps_bound)
            .fold(0.0, f64::max);
        suites.push(SuiteSummary {
            lemma: (*name).into(),
            cases: recs.len(),
            failures: recs.iter().filter(|r| !r.passed).count(),
            worst_ratio,
        });
        records.extend(recs);
    }
    let passed = records.iter().all(|r| r.passed) && circuit.iter().all(|c| c.passed);
    Ok(VerifyReport { schema: VERIFY_SCHEMA.into(), config: cfg.clone(), suites, records, circuit, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_a_few_cases() {
        let cfg = VerifyConfig { seed: 1, cases: 12, corrupt_alpha: None };
        let failed: Vec<CaseRecord> =
            SUITES.iter().flat_map(|(name, _)| run_suite(name, &cfg).unwrap()).filter(|r| !r.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }

    #[test]
    fn circuits_agree_with_semantics() {
        let cfg = VerifyConfig { seed: 2, cases: 10, corrupt_alpha: None };
        for (i, _) in CIRCUIT_PRIMITIVES.iter().enumerate() {
            let mut rng = R::seed_from_u64(suite_seed(cfg.seed, 1000 + i));
            for case in 0..20 {
                let c = circuit_case(i, &mut rng, case).unwrap();
                assert!(c.passed, "{c:?}");
            }
        }
    }

    #[test]
    fn alpha_corruption_names_the_lemma() {
        let cfg = VerifyConfig { seed: 3, cases: 3, corrupt_alpha: Some("ve_sum".into()) };
        let recs = run_suite("ve_sum", &cfg).unwrap();
        assert!(recs.iter().all(|r| !r.ledger_ok));
        let report = VerifyReport {
            schema: VERIFY_SCHEMA.into(),
            config: cfg,
            suites: vec![],
            records: recs,
            circuit: vec![],
            passed: false,
        };
        let err = report.failure().unwrap();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("ve_sum"));
    }
}
