//! Chebyshev-basis polynomials and singular-value transformations.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::circuit;
use crate::encodings::{BlockEncoding, CIRCUIT_QUBIT_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{svd, CMatrix};

/// Number of Chebyshev-spaced points used to certify a polynomial.
pub const CERT_GRID: usize = 10_000;

/// Hard cap on polynomial degree.
pub const MAX_DEGREE: usize = 400_001;

const MAX_INTERP_NODES: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
    Indefinite,
}

/// `P(x) = Σ_k coeffs[k]·T_k(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevPoly {
    pub coeffs: Vec<f64>,
    pub degree: usize,
    pub parity: Parity,
    /// Largest `|P|` seen on the certification grid over `[−1, 1]`.
    pub sup_bound: f64,
    /// Certified approximation error for the function the polynomial targets.
    pub certified_eps: f64,
    /// Half-width of the interval on which `certified_eps` holds.
    pub interval_c: f64,
}

/// On-disk form of a polynomial.
#[derive(Serialize, Deserialize)]
struct PolyFile {
    basis: String,
    coeffs: Vec<f64>,
    parity: Parity,
    certified_eps: f64,
    interval_c: f64,
}

impl ChebyshevPoly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        let degree = coeffs.len().saturating_sub(1);
        let parity = parity_of(&coeffs);
        let mut p = ChebyshevPoly { coeffs, degree, parity, sup_bound: 0.0, certified_eps: 0.0, interval_c: 1.0 };
        p.sup_bound = cheb_grid(1.0, CERT_GRID).map(|x| p.eval(x).abs()).fold(0.0, f64::max);
        p
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs[0]
    }

    pub fn derivative(&self) -> ChebyshevPoly {
        let n = self.coeffs.len();
        if n <= 1 {
            return ChebyshevPoly::new(vec![0.0]);
        }
        let mut d = vec![0.0; n + 1];
        for k in (1..n).rev() {
            d[k - 1] = d[k + 1] + 2.0 * k as f64 * self.coeffs[k];
        }
        d[0] /= 2.0;
        d.truncate(n - 1);
        ChebyshevPoly::new(d)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PolyFile {
            basis: "chebyshev-T".into(),
            coeffs: self.coeffs.clone(),
            parity: self.parity,
            certified_eps: self.certified_eps,
            interval_c: self.interval_c,
        })
        .expect("plain data serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let f: PolyFile = serde_json::from_value(v.clone())?;
        if f.basis != "chebyshev-T" {
            return Err(Error::Config(format!("unsupported basis {}", f.basis)));
        }
        let mut p = ChebyshevPoly::new(f.coeffs);
        p.certified_eps = f.certified_eps;
        p.interval_c = f.interval_c;
        Ok(p)
    }
}

fn parity_of(coeffs: &[f64]) -> Parity {
    let odd = coeffs.iter().step_by(2).all(|&c| c == 0.0);
    let even = coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0);
    match (odd, even) {
        (true, _) => Parity::Odd,
        (false, true) => Parity::Even,
        _ => Parity::Indefinite,
    }
}

/// `count` Chebyshev nodes scaled to `[−c, c]`.
pub fn cheb_grid(c: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| c * (PI * (i as f64 + 0.5) / count as f64).cos())
}

/// `T₃(x) = 4x³ − 3x`.
pub fn t3() -> ChebyshevPoly {
    ChebyshevPoly::new(vec![0.0, 0.0, 0.0, 1.0])
}

/// Smallest `x ≥ 0` with `erfc(x) ≤ p`.
pub fn erfc_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 30.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `e^{−y}·I_j(y)` for `j = 0..=jmax`.
///
/// Small arguments sum the power series term by term in log space; large
/// arguments run Miller's backward recurrence normalized by
/// `I₀(y) + 2Σ_{j≥1} I_j(y) = e^y`.
pub fn scaled_bessel_i(y: f64, jmax: usize) -> Vec<f64> {
    if y <= 50.0 {
        (0..=jmax).map(|j| scaled_bessel_series(y, j)).collect()
    } else {
        scaled_bessel_miller(y, jmax)
    }
}

/// Power series `Σ_k (y/2)^{2k+j}/(k!(k+j)!)` scaled by `e^{−y}`, cut off
/// once a term drops below `1e-16` of the running sum past the peak.
pub fn scaled_bessel_series(y: f64, j: usize) -> f64 {
    if y == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    let ln_half = (0.5 * y).ln();
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        let ln_term = -y + (2 * k + j) as f64 * ln_half - libm::lgamma(k as f64 + 1.0) - libm::lgamma((k + j) as f64 + 1.0);
        let term = ln_term.exp();
        sum += term;
        let past_peak = (k as f64) > 0.5 * y;
        if past_peak && term <= 1e-16 * sum {
            break;
        }
        k += 1;
        if k > 100_000 {
            break;
        }
    }
    sum
}

fn scaled_bessel_miller(y: f64, jmax: usize) -> Vec<f64> {
    let spread = (80.0 * y).sqrt().ceil() as usize;
    let start = jmax.max(spread) + 64;
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for j in (1..=start).rev() {
        vals[j - 1] = (2.0 * j as f64 / y) * vals[j] + vals[j + 1];
        if vals[j - 1] > 1e250 {
            for v in vals.iter_mut().skip(j - 1) {
                *v *= 1e-250;
            }
        }
    }
    let total: f64 = vals[0] + 2.0 * vals[1..=start].iter().sum::<f64>();
    vals.truncate(jmax + 1);
    vals.iter().map(|v| v / total).collect()
}

type Cache = Mutex<HashMap<(u8, [u64; 3]), ChebyshevPoly>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(kind: u8, key: [f64; 3], build: impl FnOnce() -> Result<ChebyshevPoly>) -> Result<ChebyshevPoly> {
    let k = (kind, key.map(f64::to_bits));
    if let Some(p) = cache().lock().expect("cache lock").get(&k) {
        return Ok(p.clone());
    }
    let p = build()?;
    cache().lock().expect("cache lock").insert(k, p.clone());
    Ok(p)
}

/// Largest power of two not above `eps`; a tighter target keeps cache keys few.
fn snap_eps(eps: f64) -> f64 {
    2f64.powi(eps.log2().floor() as i32)
}

/// Smallest multiple of 1/16 not below `c`, capped at one.
fn snap_interval(c: f64) -> f64 {
    ((c * 16.0).ceil() / 16.0).min(1.0)
}

/// Floating-point slack for grid checks: Clenshaw roundoff grows like
/// `√deg · u · Σ|c_k|` on average.
pub(crate) fn roundoff_allowance(p: &ChebyshevPoly) -> f64 {
    let mass: f64 = p.coeffs.iter().map(|c| c.abs()).sum();
    8.0 * ((p.degree + 1) as f64).sqrt() * f64::EPSILON * mass.max(1.0)
}

/// Odd polynomial approximating `erf(m·x)` within `eps` on `[−c, c]`.
///
/// Coefficients come from the Jacobi–Anger expansion of the Gaussian. The
/// degree is the smallest whose coefficient tail bound
/// `(4cm/√π)·Σ_{j>h} e^{−y}I_j(y)` (with `y = m²/2`) meets `eps/2`; a
/// Chebyshev grid then confirms `eps`.
pub fn erf_poly(m: f64, eps: f64, interval_c: f64) -> Result<ChebyshevPoly> {
    const OP: &str = "erf_poly";
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::contract(OP, format!("invalid m = {m}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::contract(OP, format!("eps = {eps} outside (0, 1)")));
    }
    if !(interval_c > 0.0 && interval_c <= 1.0) {
        return Err(Error::contract(OP, format!("interval half-width {interval_c} outside (0, 1]")));
    }
    let (eps, c) = (snap_eps(eps), snap_interval(interval_c));
    cached(0, [m, eps, c], || build_erf_poly(m, eps, c))
}

fn build_erf_poly(m: f64, eps: f64, c: f64) -> Result<ChebyshevPoly> {
    let y = 0.5 * m * m;
    let pref = 2.0 * m / PI.sqrt();
    let scale = 4.0 * c * m / PI.sqrt();
    let reach = (2.0 * y.max(1.0) * (scale / eps).max(2.0).ln()).sqrt();
    let jmax = (2.0 * reach + 40.0) as usize;
    let bessel = scaled_bessel_i(y, jmax);
    let mut tail = vec![0.0; jmax + 2];
    for j in (0..=jmax).rev() {
        tail[j] = tail[j + 1] + bessel[j];
    }
    let h = (1..=jmax).find(|&h| scale * tail[h + 1] <= 0.5 * eps).unwrap_or(jmax);
    let degree = 2 * h + 1;
    if degree > MAX_DEGREE {
        return Err(Error::numeric("erf_poly", format!("degree exceeds {MAX_DEGREE}")));
    }
    let mut coeffs = vec![0.0; degree + 1];
    coeffs[1] += pref * bessel[0];
    for j in 1..=h {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let b = pref * sign * bessel[j];
        coeffs[2 * j + 1] += b / (2 * j + 1) as f64;
        coeffs[2 * j - 1] -= b / (2 * j - 1) as f64;
    }
    let mut p = ChebyshevPoly::new(coeffs);
    let grid_err = cheb_grid(c, CERT_GRID)
        .chain([c, -c])
        .map(|x| (p.eval(x) - libm::erf(m * x)).abs())
        .fold(0.0, f64::max);
    if grid_err > eps + roundoff_allowance(&p) {
        return Err(Error::numeric("erf_poly", format!("grid error {grid_err:.3e} above {eps:.3e}")));
    }
    p.certified_eps = grid_err.max(scale * tail[h + 1]);
    p.interval_c = c;
    Ok(p)
}

/// Odd polynomial with `|P − sign| ≤ eps` on `[−1, −gap/2] ∪ [gap/2, 1]` and `|P| ≤ 1`.
///
/// Built from [`erf_poly`] at `m` large enough that `erfc(m·gap/2) ≤ eps/4`,
/// then shrunk by `1 + eps/2` so the polynomial stays bounded.
pub fn sign_poly(gap: f64, eps: f64) -> Result<ChebyshevPoly> {
    const OP: &str = "sign_poly";
    if !(gap > 0.0 && gap <= 2.0) {
        return Err(Error::contract(OP, format!("gap {gap} outside (0, 2]")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::contract(OP, format!("eps = {eps} outside (0, 1)")));
    }
    let eps = snap_eps(eps);
    let gap = 2f64.powi(gap.log2().floor() as i32);
    cached(1, [gap, eps, 0.0], || {
        let m = (2.0 * erfc_inv(eps / 4.0) / gap).max(0.5);
        let base = erf_poly(m, eps / 4.0, 1.0)?;
        let shrink = 1.0 / (1.0 + eps / 2.0);
        let mut p = ChebyshevPoly::new(base.coeffs.iter().map(|c| c * shrink).collect());
        let slack = roundoff_allowance(&p);
        let err = cheb_grid(1.0, CERT_GRID)
            .chain([1.0, 0.5 * gap])
            .filter(|x| x.abs() >= 0.5 * gap)
            .map(|x| (p.eval(x.abs()) - 1.0).abs())
            .fold(0.0, f64::max);
        if err > eps + slack || p.sup_bound > 1.0 + slack {
            return Err(Error::numeric(OP, format!("certification failed: err {err:.3e}, sup {}", p.sup_bound)));
        }
        p.certified_eps = err;
        p.interval_c = 1.0;
        Ok(p)
    })
}

/// Odd polynomial with `|P(x) − γx| ≤ eps` for `|x| ≤ (1−δ)/γ` and `|P| ≤ 1` on `[−1, 1]`.
///
/// Chebyshev interpolant of `γx·w(x)`, where the window
/// `w = ½[erf(m(x+t)) − erf(m(x−t))]` is centred at `t = (1−δ/2)/γ`.
pub fn amplification_poly(gamma: f64, delta: f64, eps: f64) -> Result<ChebyshevPoly> {
    const OP: &str = "amplification_poly";
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::contract(OP, format!("gamma = {gamma} must exceed 1")));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::contract(OP, format!("delta = {delta} outside (0, 1/2]")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::contract(OP, format!("eps = {eps} outside (0, 1/2)")));
    }
    let eps = snap_eps(eps);
    cached(2, [gamma, delta, eps], || {
        let m = 2.0 * gamma * erfc_inv(eps / 4.0) / delta;
        let t = (1.0 - 0.5 * delta) / gamma;
        let f = |x: f64| gamma * x * 0.5 * (libm::erf(m * (x + t)) - libm::erf(m * (x - t)));
        let shrink = 1.0 / (1.0 + eps / 8.0);
        let reach = (1.0 - delta) / gamma;
        let mut nodes = 64usize;
        loop {
            if nodes > MAX_INTERP_NODES {
                return Err(Error::numeric(OP, format!("interpolation did not reach {eps:.1e}")));
            }
            let coeffs = chebyshev_interpolate(&f, nodes);
            let odd: Vec<f64> = coeffs.iter().enumerate().map(|(k, &c)| if k % 2 == 1 { c * shrink } else { 0.0 }).collect();
            let mut p = ChebyshevPoly::new(odd);
            let slack = roundoff_allowance(&p);
            let fit = cheb_grid(1.0, CERT_GRID).map(|x| (p.eval(x) - shrink * f(x)).abs()).fold(0.0, f64::max);
            if fit <= eps / 16.0 + slack {
                let err = cheb_grid(reach, CERT_GRID)
                    .chain([reach, -reach])
                    .map(|x| (p.eval(x) - gamma * x).abs())
                    .fold(0.0, f64::max);
                if err > eps + slack || p.sup_bound > 1.0 + slack {
                    return Err(Error::numeric(OP, format!("certification failed: err {err:.3e}, sup {}", p.sup_bound)));
                }
                p.certified_eps = err;
                p.interval_c = reach;
                return Ok(p);
            }
            nodes *= 2;
        }
    })
}

/// Chebyshev coefficients of the degree `n−1` interpolant at first-kind nodes.
pub fn chebyshev_interpolate(f: &impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let table: Vec<f64> = (0..4 * n).map(|i| (PI * i as f64 / (2 * n) as f64).cos()).collect();
    let values: Vec<f64> = (0..n).map(|k| f(table[2 * k + 1])).collect();
    (0..n)
        .map(|j| {
            let s: f64 = values.iter().enumerate().map(|(k, v)| v * table[(j * (2 * k + 1)) % (4 * n)]).sum();
            let c = 2.0 * s / n as f64;
            if j == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

/// Apply `p` to the singular values of `m`: `U p(Σ) V†` (odd) or `V p(Σ) V†` (even).
pub fn apply_to_singular_values(m: &CMatrix, p: &ChebyshevPoly) -> Result<CMatrix> {
    let d = svd(m)?;
    Ok(match p.parity {
        Parity::Odd => d.compose(|s| p.eval(s)),
        Parity::Even => crate::linalg::Svd { u: d.v.clone(), s: d.s, v: d.v }.compose(|s| p.eval(s)),
        Parity::Indefinite => return Err(Error::contract("sv_transform", "polynomial has no definite parity")),
    })
}

/// Singular-value transformation of an encoding's block: ledger (1, a+2, ·).
///
/// With an exact input the output is exact. Otherwise the error follows the
/// robustness bound `‖P(A) − P(B)‖ ≤ 4·deg·√‖A − B‖`.
pub fn sv_transform(be: &BlockEncoding, p: &ChebyshevPoly) -> Result<BlockEncoding> {
    const OP: &str = "sv_transform";
    if p.parity == Parity::Indefinite {
        return Err(Error::contract(OP, "polynomial has no definite parity"));
    }
    if p.sup_bound > 1.0 + 1e-12 {
        return Err(Error::contract(OP, format!("polynomial exceeds 1 on [−1, 1] (sup {})", p.sup_bound)));
    }
    let block = apply_to_singular_values(&be.block, p)?;
    let scaled_target = be.target.as_ref().map(|t| t.scale_re(1.0 / be.alpha));
    let target = match scaled_target {
        Some(t) if t.spectral_norm() <= 1.0 + 1e-12 => Some(apply_to_singular_values(&t, p)?),
        _ => None,
    };
    let eps_bound = if be.eps_bound == 0.0 { 0.0 } else { 4.0 * p.degree as f64 * (be.eps_bound / be.alpha).sqrt() };
    let ancillas = be.ancillas + 2;
    let mut out = BlockEncoding {
        block,
        alpha: 1.0,
        ancillas,
        eps_bound,
        target,
        realization: None,
        depth: format!("{}({})", p.degree, be.depth),
    };
    if be.realization.is_some() && out.total_qubits() <= CIRCUIT_QUBIT_LIMIT {
        out = out.materialize()?;
    }
    Ok(out)
}

/// Uniform amplification `A ↦ γA` for `‖A‖ ≤ (1−δ)/γ`: ledger (1, a+1, ε + γε_in/α).
///
/// `A` is the input's block; the target, when known, becomes `γ·target/α`.
pub fn uniform_sv_amplify(be: &BlockEncoding, gamma: f64, delta: f64, eps: f64) -> Result<BlockEncoding> {
    const OP: &str = "uniform_sv_amplify";
    let norm = be.block.spectral_norm();
    let limit = (1.0 - delta) / gamma;
    if norm > limit + 1e-12 {
        return Err(Error::contract(OP, format!("‖A‖ = {norm:.6} exceeds (1−δ)/γ = {limit:.6}")));
    }
    let p = amplification_poly(gamma, delta, eps)?;
    let block = apply_to_singular_values(&be.block, &p)?;
    let ancillas = be.ancillas + 1;
    let mut out = BlockEncoding {
        block,
        alpha: 1.0,
        ancillas,
        eps_bound: eps + gamma * be.eps_bound / be.alpha,
        target: be.target.as_ref().map(|t| t.scale_re(gamma / be.alpha)),
        realization: None,
        depth: format!("{}({})", p.degree, be.depth),
    };
    if be.realization.is_some() && out.total_qubits() <= CIRCUIT_QUBIT_LIMIT {
        out = out.materialize()?;
    }
    Ok(out)
}

/// Oblivious amplitude amplification by `−T₃`: a (2, a, 0) encoding whose
/// block has singular values in `{0, 1/2}` becomes a (1, a+1, 0) encoding.
pub fn oblivious_aa_half(be: &BlockEncoding) -> Result<BlockEncoding> {
    const OP: &str = "oblivious_aa_half";
    let d = svd(&be.block)?;
    if let Some(s) = d.s.iter().find(|&&s| s.abs() > 1e-8 && (s - 0.5).abs() > 1e-8) {
        return Err(Error::contract(OP, format!("singular value {s} is neither 0 nor 1/2")));
    }
    let minus_t3 = |s: f64| -(4.0 * s * s * s - 3.0 * s);
    let block = d.compose(minus_t3);
    let ancillas = be.ancillas + 1;
    let realization = match &be.realization {
        Some(u) if be.ancillas + 1 + be.main_qubits() <= CIRCUIT_QUBIT_LIMIT => {
            Some(CMatrix::identity(2).kron(&circuit::t3_sequence(u, be.ancillas)))
        }
        _ => None,
    };
    Ok(BlockEncoding {
        block,
        alpha: be.alpha / 2.0,
        ancillas,
        eps_bound: if be.eps_bound == 0.0 { 0.0 } else { 12.0 * (be.eps_bound / be.alpha).sqrt() },
        target: be.target.clone(),
        realization,
        depth: format!("3({})", be.depth),
    })
}
