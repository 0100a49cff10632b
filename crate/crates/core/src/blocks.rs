//! Architectural blocks: the skip-norm residual block, stacks of them, and
//! the full-rank linear pooling output block.

use std::f64::consts::PI;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encodings::{ve_deamplify, ve_matvec, ve_normalize, ve_sum, BlockEncoding, VectorEncoding, BOUND_SLACK};
use crate::error::{Error, Result};
use crate::nonlinear::{erf_apply_ve, matvec_squared, pool_l2sq, PoolingSpec};
use crate::qram::MatrixQramStructure;

/// Error growth of one skip-norm block: `δ_out = 712(ε₀ + ε₁)`.
pub const SKIP_NORM_GROWTH: f64 = 712.0;
/// Guaranteed norm of the skip sum before normalization.
pub const SKIP_NORM_FLOOR: f64 = 1.0 / 400.0;
/// Skip-path weight of the output block.
pub const OUTPUT_TAU: f64 = 0.51;
/// Norm floor of the output block's sum, `2τ − 1`.
pub const OUTPUT_FLOOR: f64 = 0.02;

/// One line of a block report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub alpha: f64,
    pub ancillas: usize,
    pub eps_bound: f64,
    pub eps_actual: Option<f64>,
    pub norm_floor: Option<f64>,
    pub passed: bool,
}

impl StageRecord {
    pub fn of(stage: impl Into<String>, v: &VectorEncoding) -> Self {
        let eps_actual = v.actual_error();
        StageRecord {
            stage: stage.into(),
            alpha: v.alpha,
            ancillas: v.ancillas,
            eps_bound: v.eps_bound,
            eps_actual,
            norm_floor: None,
            passed: eps_actual.is_none_or(|e| e <= v.eps_bound + BOUND_SLACK),
        }
    }

    /// Also require the encoded norm `1/α` to clear `floor`.
    pub fn with_floor(mut self, floor: f64) -> Self {
        self.norm_floor = Some(floor);
        self.passed &= 1.0 / self.alpha >= floor * (1.0 - 1e-12);
        self
    }
}

/// A result together with the per-stage records that produced it.
#[derive(Clone, Debug)]
pub struct Traced<T> {
    pub value: T,
    pub stages: Vec<StageRecord>,
}

impl<T> Traced<T> {
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.passed)
    }
}

/// Weight layer of a residual block: an encoding of `W/κ` with `‖W‖₂ ≤ 1`.
#[derive(Clone, Debug)]
pub struct ResidualBlockSpec {
    pub weight_be: BlockEncoding,
    pub kappa: f64,
    pub eps1: f64,
}

impl ResidualBlockSpec {
    pub fn new(weight_be: BlockEncoding, kappa: f64, eps1: f64) -> Result<Self> {
        const OP: &str = "ResidualBlockSpec";
        if !(1.0..=2.0).contains(&kappa) {
            return Err(Error::contract(OP, format!("κ = {kappa} outside [1, 2]")));
        }
        if !(eps1 > 0.0 && eps1 <= 1.0) {
            return Err(Error::contract(OP, format!("ε₁ = {eps1} outside (0, 1]")));
        }
        let op = weight_be.target.clone().unwrap_or_else(|| weight_be.block.scale_re(weight_be.alpha));
        let norm = kappa * op.spectral_norm();
        if norm > 1.0 + 1e-9 {
            return Err(Error::contract(OP, format!("‖W‖₂ = {norm} exceeds 1")));
        }
        Ok(ResidualBlockSpec { weight_be, kappa, eps1 })
    }
}

/// `(ψ + erf(4Wψ/5))` normalized, from a unit-scale encoding of ψ.
///
/// Chain: `W/κ` times ψ, `erf(νx)` with `ν = 4κ/5` (which undoes the κ),
/// the skip path shrunk to the same `16ν/√π` scale, an even sum, and
/// normalization with `ε₂ = ε₁`. Ledger `(1, 2(a+b)+n+9, 712(ε₀+ε₁))`,
/// where ε₀ also absorbs the weight encoding's own error.
pub fn skip_norm_block(psi: &VectorEncoding, spec: &ResidualBlockSpec) -> Result<Traced<VectorEncoding>> {
    const OP: &str = "skip_norm_block";
    if (psi.alpha - 1.0).abs() > 1e-9 {
        return Err(Error::contract(OP, format!("input scale {} is not 1", psi.alpha)));
    }
    let w = &spec.weight_be;
    if (w.alpha - 1.0).abs() > 1e-12 {
        return Err(Error::contract(OP, format!("weight encoding scale {} is not 1", w.alpha)));
    }
    let nu = 0.8 * spec.kappa;
    let eps0 = psi.eps_bound + w.eps_bound;
    let eps1 = spec.eps1;
    let mut stages = Vec::with_capacity(5);

    let u1 = ve_matvec(w, psi)?;
    stages.push(StageRecord::of("matvec", &u1));
    let norm1 = 1.0 / u1.alpha;

    let mut u2 = erf_apply_ve(&u1, nu, eps1)?;
    // Relative to the unnormalized Wψ/κ the input error is ε₀, not ε₀/𝒩₁.
    u2.eps_bound = 2.0 * nu * (eps0 + eps1) / norm1;
    stages.push(StageRecord::of("erf", &u2));

    let skip = ve_deamplify(psi, 16.0 * nu / PI.sqrt())?;
    stages.push(StageRecord::of("skip_deamplify", &skip));

    let sum = ve_sum(&skip, &u2, 0.5)?;
    stages.push(StageRecord::of("skip_sum", &sum).with_floor(SKIP_NORM_FLOOR));

    let hint = sum.alpha.max(1.0).log2().ceil().exp2();
    let mut out = ve_normalize(&sum, hint, eps1)?;
    let stated = SKIP_NORM_GROWTH * (eps0 + eps1);
    if out.eps_bound > stated * (1.0 + 1e-12) {
        return Err(Error::BoundViolation { lemma: "skip-norm error composition".into(), actual: out.eps_bound, bound: stated });
    }
    out.eps_bound = stated;
    stages.push(StageRecord::of("normalize", &out));
    Ok(Traced { value: out, stages })
}

/// `k` residual blocks with weights `W_i/2` and a final error budget.
#[derive(Clone, Debug)]
pub struct StackSpec {
    pub blocks: Vec<ResidualBlockSpec>,
    pub eps: f64,
}

/// Per-block ε₁ for a `k`-block stack with final error `eps`.
///
/// `ε₁ = 2ε/1424^k` and `ε_i = δ_{i−1} = ε/1424^{k−i+1}` afterwards, so
/// `δ_i = 712(δ_{i−1} + ε_i)` lands exactly on `δ_k = ε` from an exact input.
pub fn stack_schedule(k: usize, eps: f64) -> Vec<f64> {
    let growth = 2.0 * SKIP_NORM_GROWTH;
    (1..=k)
        .map(|i| if i == 1 { 2.0 * eps / growth.powi(k as i32) } else { eps / growth.powi((k - i + 1) as i32) })
        .collect()
}

impl StackSpec {
    /// Blocks with `κ = 2` (the weight encodings carry `W_i/2`) and the standard schedule.
    pub fn new(weights: Vec<BlockEncoding>, eps: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::contract("StackSpec", "need at least one block"));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::contract("StackSpec", format!("ε = {eps} outside (0, 1]")));
        }
        let schedule = stack_schedule(weights.len(), eps);
        let blocks = weights
            .into_iter()
            .zip(schedule)
            .map(|(w, e)| ResidualBlockSpec::new(w, 2.0, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(StackSpec { blocks, eps })
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }
}

/// Ancilla bound `2^k(a + 2b + n + 9)` for a stack.
pub fn stack_ancillas(k: usize, a: usize, b: usize, n: usize) -> usize {
    (a + 2 * b + n + 9) << k
}

/// Blocks applied in sequence; the output is padded to the `2^k(a+2b+n+9)` ancilla bound.
pub fn residual_stack(psi: &VectorEncoding, spec: &StackSpec) -> Result<Traced<VectorEncoding>> {
    let mut stages = Vec::new();
    let mut cur = psi.clone();
    for (i, block) in spec.blocks.iter().enumerate() {
        let run = skip_norm_block(&cur, block).map_err(|e| tag_layer(e, i + 1))?;
        stages.extend(run.stages.into_iter().map(|mut s| {
            s.stage = format!("block{}.{}", i + 1, s.stage);
            s
        }));
        cur = run.value;
    }
    let b = spec.blocks.iter().map(|s| s.weight_be.ancillas).max().unwrap_or(0);
    let bound = stack_ancillas(spec.k(), psi.ancillas, b, psi.main_qubits());
    let out = cur.pad_ancillas(bound);
    stages.push(StageRecord::of("stack", &out));
    Ok(Traced { value: out, stages })
}

fn tag_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::Contract { op, msg } => Error::Contract { op, msg: format!("layer {layer}: {msg}") },
        Error::Numeric { op, msg } => Error::Numeric { op, msg: format!("layer {layer}: {msg}") },
        Error::BoundViolation { lemma, actual, bound } => {
            Error::BoundViolation { lemma: format!("layer {layer}: {lemma}"), actual, bound }
        }
        other => other,
    }
}

/// Error allocation of the output block for a pooled error `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputBudget {
    /// Normalization accuracy `√C·ε/(8N)`.
    pub eps1: f64,
    /// Largest admissible input error `ε√C·δ/(24N)`.
    pub eps0: f64,
}

pub fn output_budget(n_dim: usize, c_bins: usize, eps: f64) -> OutputBudget {
    let (n, c) = (n_dim as f64, (c_bins as f64).sqrt());
    OutputBudget { eps1: c * eps / (8.0 * n), eps0: eps * c * OUTPUT_FLOOR / (24.0 * n) }
}

/// `γ = τψ + (1−τ)W·g(ψ)` normalized, ready to be sampled and pooled into `C` bins.
///
/// Ledger `(1, 2a+d+8+n, 2(3ε₀/𝒩_γ + ε₁))` with `𝒩_γ ≥ 0.02`. The input
/// error and the structure's rounding gap must both fit the ε₀ budget;
/// otherwise the caller has to rebuild upstream at a tighter tolerance.
pub fn output_block(
    psi: &VectorEncoding,
    w: &MatrixQramStructure,
    c_bins: usize,
    eps: f64,
) -> Result<Traced<(VectorEncoding, PoolingSpec)>> {
    const OP: &str = "output_block";
    if (psi.alpha - 1.0).abs() > 1e-9 {
        return Err(Error::contract(OP, format!("input scale {} is not 1", psi.alpha)));
    }
    let n_dim = psi.vec.dim();
    let pool = PoolingSpec::new(c_bins, n_dim)?;
    let budget = output_budget(n_dim, c_bins, eps);
    if psi.eps_bound > budget.eps0 {
        return Err(Error::contract(
            OP,
            format!("input error {:.3e} exceeds the required {:.3e}; rerun upstream tighter", psi.eps_bound, budget.eps0),
        ));
    }
    let r = w.rounding_error();
    if r > budget.eps0 {
        return Err(Error::contract(OP, format!("column-norm rounding {r:.3e} exceeds {:.3e}; use more angle bits", budget.eps0)));
    }
    let mut stages = Vec::with_capacity(3);
    let v1 = matvec_squared(w, psi)?;
    stages.push(StageRecord::of("matvec_squared", &v1));
    let v2 = ve_sum(psi, &v1, OUTPUT_TAU)?;
    stages.push(StageRecord::of("output_sum", &v2).with_floor(OUTPUT_FLOOR));
    let hint = v2.alpha.max(1.0).log2().ceil().exp2();
    let v3 = ve_normalize(&v2, hint, budget.eps1)?;
    stages.push(StageRecord::of("output_normalize", &v3));
    Ok(Traced { value: (v3, pool), stages })
}

/// Class distribution read off an encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    /// Zero means the distribution was computed exactly.
    pub shots: u64,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
}

/// Measure the encoded register (post-selected on the ancillas) and bin the outcomes.
///
/// `shots = 0` returns the exact binned distribution.
pub fn sample_class(v: &VectorEncoding, spec: PoolingSpec, shots: u64, seed: u64) -> Result<ClassHistogram> {
    const OP: &str = "sample_class";
    let state = v.vec.normalized(OP)?;
    let exact = pool_l2sq(&state, spec)?;
    if shots == 0 {
        return Ok(ClassHistogram { shots, counts: vec![0; spec.bins], probabilities: exact });
    }
    let weights: Vec<f64> = state.iter().map(|z| z.norm_sqr()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::numeric(OP, e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; spec.bins];
    for _ in 0..shots {
        counts[spec.bin_of(dist.sample(&mut rng))] += 1;
    }
    let probabilities = counts.iter().map(|&c| c as f64 / shots as f64).collect();
    Ok(ClassHistogram { shots, counts, probabilities })
}
