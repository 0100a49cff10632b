//! End-to-end inference: a network description, the exact classical
//! reference forward pass, and the encoded forward pass with its report.
//!
//! The classical pass is the oracle: the same channel layout, the same
//! `x ↦ normalize(x + erf(4Wx/5))` blocks and the same pooling, evaluated
//! with dense matrices.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    output_block, output_budget, residual_stack, sample_class, stack_ancillas, ClassHistogram, OutputBudget,
    StackSpec, StageRecord, OUTPUT_TAU, SKIP_NORM_GROWTH,
};
use crate::convolution::{conv_block_encoding_eps, conv_matrix_form, ConvKernel, ConvReport, FeatureMap, CONV_AMPLIFY_EPS};
use crate::encodings::{ve_equal_copies, ve_tensor, BlockEncoding, Mode, VectorEncoding, BOUND_SLACK, CIRCUIT_QUBIT_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{c64, is_pow2, CMatrix, CVector};
use crate::nonlinear::{matvec_squared_oracle, pool_error_bound, pool_l2sq, PoolingSpec};
use crate::qram::{angle_word, state_prep_ve, word_cos, MatrixQramStructure, StatePrepTree};
use crate::tensor::Tensor;

/// Report format identifier; bump when fields change.
pub const REPORT_SCHEMA: &str = "qnn.inference.v1";

/// Smallest amplification accuracy the convolution encodings are asked for.
const MIN_CONV_EPS: f64 = 1e-14;
/// Fewest angle bits used for loaders and column norms.
const MIN_ANGLE_BITS: usize = 16;
const MAX_ANGLE_BITS: usize = 52;

/// A tensor given inline or as a path relative to the spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorRef {
    File { file: PathBuf },
    Inline(Tensor),
}

/// A kernel given inline as `{"C","D","K"}` or as a path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelRef {
    File { file: PathBuf },
    Inline(serde_json::Value),
}

/// On-disk network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Image side is `2^m`.
    pub m: usize,
    pub channels_in: usize,
    #[serde(default = "one")]
    pub channel_fanout: usize,
    pub k: usize,
    pub kernels: Vec<KernelRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_w: Option<TensorRef>,
    /// Fixed linear map applied to every path before the tensor product.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_map: Option<TensorRef>,
    pub c_bins: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub epsilon: f64,
    pub regime: u8,
    #[serde(default = "one")]
    pub d_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// `[channels_in, M, M]` image (regime 1) or `[d_paths, P]` paths; random from `seed` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<TensorRef>,
}

fn one() -> usize {
    1
}

fn default_tau() -> f64 {
    OUTPUT_TAU
}

/// Network input: an image for regime 1, bilinear paths otherwise.
#[derive(Clone, Debug, PartialEq)]
pub enum NetworkInput {
    Image(FeatureMap),
    Paths(Vec<CVector>),
}

/// A validated network with all tensors loaded.
#[derive(Clone, Debug)]
pub struct Network {
    pub m: usize,
    pub channels_in: usize,
    pub fanout: usize,
    pub kernels: Vec<ConvKernel>,
    pub final_w: Option<CMatrix>,
    pub path_map: Option<CMatrix>,
    pub c_bins: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub regime: u8,
    pub d_paths: usize,
    pub seed: u64,
    pub input: Option<NetworkInput>,
}

/// Sizes derived from a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub side: usize,
    /// Channels after null-channel padding, before fanout.
    pub base_channels: usize,
    /// Channels seen by the convolutions.
    pub channels: usize,
    pub dim: usize,
    pub qubits: usize,
    /// Per-path dimension in regimes 2 and 3.
    pub path_dim: Option<usize>,
    pub c_bins: usize,
    pub k: usize,
}

fn config(field: &str, msg: impl std::fmt::Display) -> Error {
    let msg = msg.to_string();
    Error::Config(format!("{field}: {}", msg.strip_prefix("config: ").unwrap_or(&msg)))
}

fn load_tensor(r: &TensorRef, base: &Path, field: &str) -> Result<Tensor> {
    let t = match r {
        TensorRef::File { file } => Tensor::load(&base.join(file)),
        TensorRef::Inline(t) => t.validate().map(|_| t.clone()),
    };
    t.map_err(|e| config(field, e))
}

fn real_values(t: &Tensor, field: &str) -> Result<Vec<f64>> {
    if t.values().any(|z| z.im != 0.0) {
        return Err(config(field, "network tensors must be real"));
    }
    Ok(t.values().map(|z| z.re).collect())
}

fn real_matrix(t: &Tensor, field: &str) -> Result<CMatrix> {
    real_values(t, field)?;
    t.to_matrix().map_err(|e| config(field, e))
}

impl NetworkSpec {
    pub fn load(path: &Path) -> Result<Network> {
        let text = std::fs::read_to_string(path).map_err(|e| config(&path.display().to_string(), e))?;
        let spec: NetworkSpec = serde_json::from_str(&text).map_err(|e| Error::Config(format!("network spec: {e}")))?;
        spec.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Load referenced tensors relative to `base` and validate.
    pub fn resolve(&self, base: &Path) -> Result<Network> {
        let side = 1usize << self.m;
        let kernels = self
            .kernels
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let field = format!("kernels[{i}]");
                match r {
                    KernelRef::File { file } => ConvKernel::load(&base.join(file)),
                    KernelRef::Inline(v) => ConvKernel::from_json(&v.to_string()),
                }
                .map_err(|e| config(&field, e))
            })
            .collect::<Result<Vec<_>>>()?;
        let final_w = self.final_w.as_ref().map(|r| load_tensor(r, base, "final_w").and_then(|t| real_matrix(&t, "final_w"))).transpose()?;
        let path_map =
            self.path_map.as_ref().map(|r| load_tensor(r, base, "path_map").and_then(|t| real_matrix(&t, "path_map"))).transpose()?;
        let input = match &self.input {
            None => None,
            Some(r) => {
                let t = load_tensor(r, base, "input")?;
                let vals = real_values(&t, "input")?;
                Some(if self.regime == 1 {
                    if t.shape != [self.channels_in, side, side] {
                        return Err(config("input", format!("shape {:?}, expected {:?}", t.shape, [self.channels_in, side, side])));
                    }
                    let c0 = self.channels_in.next_power_of_two();
                    NetworkInput::Image(FeatureMap::from_fn(c0, side, |ch, r, c| {
                        if ch < self.channels_in { vals[(ch * side + r) * side + c] } else { 0.0 }
                    }))
                } else {
                    NetworkInput::Paths(t.to_rows().map_err(|e| config("input", e))?)
                })
            }
        };
        let net = Network {
            m: self.m,
            channels_in: self.channels_in,
            fanout: self.channel_fanout,
            kernels,
            final_w,
            path_map,
            c_bins: self.c_bins,
            tau: self.tau,
            epsilon: self.epsilon,
            regime: self.regime,
            d_paths: self.d_paths,
            seed: self.seed,
            input,
        };
        net.geometry()?;
        Ok(net)
    }
}

impl Network {
    /// Check every field against the others and derive the sizes.
    pub fn geometry(&self) -> Result<Geometry> {
        if self.m == 0 || self.m > 4 {
            return Err(config("m", format!("{} outside 1..=4", self.m)));
        }
        if !(1..=3).contains(&self.regime) {
            return Err(config("regime", format!("{} is not 1, 2 or 3", self.regime)));
        }
        if self.channels_in == 0 {
            return Err(config("channels_in", "must be positive"));
        }
        if !is_pow2(self.fanout) {
            return Err(config("channel_fanout", format!("{} is not a power of two", self.fanout)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(config("epsilon", format!("{} outside (0, 1]", self.epsilon)));
        }
        if self.kernels.len() != self.k() || self.k() == 0 {
            return Err(config("kernels", "need one kernel per residual block and at least one block"));
        }
        let side = 1usize << self.m;
        let base_channels = if self.regime == 1 {
            self.channels_in.next_power_of_two()
        } else if is_pow2(self.channels_in) {
            self.channels_in
        } else {
            return Err(config("channels_in", "must be a power of two for path inputs"));
        };
        let channels = base_channels * self.fanout;
        let dim = channels * side * side;
        let qubits = dim.trailing_zeros() as usize;
        for (i, k) in self.kernels.iter().enumerate() {
            if k.channels() != channels {
                return Err(config(&format!("kernels[{i}]"), format!("{} channels, the feature map has {channels}", k.channels())));
            }
        }
        let path_dim = if self.regime == 1 {
            if self.d_paths != 1 {
                return Err(config("d_paths", "regime 1 takes a single image"));
            }
            if self.path_map.is_some() {
                return Err(config("path_map", "only used with path inputs"));
            }
            None
        } else {
            let q0 = (base_channels * side * side).trailing_zeros() as usize;
            if self.d_paths == 0 || q0 % self.d_paths != 0 {
                return Err(config("d_paths", format!("{} paths cannot tile {q0} qubits", self.d_paths)));
            }
            let p = 1usize << (q0 / self.d_paths);
            if let Some(a) = &self.path_map {
                if a.shape() != (p, p) {
                    return Err(config("path_map", format!("shape {:?}, expected {p}×{p}", a.shape())));
                }
            }
            Some(p)
        };
        match (&self.final_w, self.regime) {
            (Some(_), 3) => return Err(config("final_w", "must be absent in regime 3")),
            (None, 1 | 2) => return Err(config("final_w", "required in regimes 1 and 2")),
            (Some(w), _) => {
                if w.shape() != (dim, dim) {
                    return Err(config("final_w", format!("shape {:?}, expected {dim}×{dim}", w.shape())));
                }
                let norm = w.spectral_norm();
                if norm > 1.0 + 1e-9 {
                    return Err(config("final_w", format!("‖W‖₂ = {norm} exceeds 1")));
                }
                if (self.tau - OUTPUT_TAU).abs() > 1e-12 {
                    return Err(config("tau", format!("only τ = {OUTPUT_TAU} is supported")));
                }
            }
            (None, _) => {}
        }
        PoolingSpec::new(self.c_bins, dim).map_err(|e| config("c_bins", e))?;
        match &self.input {
            Some(NetworkInput::Image(x)) if self.regime == 1 => {
                if x.channels != base_channels || x.side != side {
                    return Err(config("input", "image shape does not match the network"));
                }
            }
            Some(NetworkInput::Paths(p)) if self.regime != 1 => {
                if p.len() != self.d_paths || p.iter().any(|v| Some(v.dim()) != path_dim) {
                    return Err(config("input", format!("need {} paths of dimension {}", self.d_paths, path_dim.unwrap_or(0))));
                }
            }
            Some(_) => return Err(config("input", "input kind does not match the regime")),
            None => {}
        }
        Ok(Geometry { side, base_channels, channels, dim, qubits, path_dim, c_bins: self.c_bins, k: self.k(), })
    }

    pub fn k(&self) -> usize {
        self.kernels.len()
    }

    /// The explicit input, or a random unit-norm one drawn from `seed`.
    pub fn input_or_random(&self) -> Result<NetworkInput> {
        if let Some(x) = &self.input {
            return Ok(x.clone());
        }
        let g = self.geometry()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(match g.path_dim {
            None => {
                let mut x = FeatureMap::from_fn(g.base_channels, g.side, |_, _, _| 0.0);
                for ch in 0..self.channels_in {
                    for i in 0..g.side * g.side {
                        x.data[ch * g.side * g.side + i] = rng.gen_range(-1.0..1.0);
                    }
                }
                let norm = x.data.iter().map(|v| v * v).sum::<f64>().sqrt();
                x.data.iter_mut().for_each(|v| *v /= norm);
                NetworkInput::Image(x)
            }
            Some(p) => NetworkInput::Paths(
                (0..self.d_paths)
                    .map(|_| {
                        let v: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        CVector::from_real(&v)?.normalized("input")
                    })
                    .collect::<Result<_>>()?,
            ),
        })
    }

    /// Serializable description with every tensor inline.
    pub fn to_spec(&self) -> Result<NetworkSpec> {
        let kernels = self
            .kernels
            .iter()
            .map(|k| Ok(KernelRef::Inline(serde_json::from_str(&k.to_json()?)?)))
            .collect::<Result<Vec<_>>>()?;
        let side = 1usize << self.m;
        let input = match &self.input {
            None => None,
            Some(NetworkInput::Image(x)) => {
                let vals = x.data[..self.channels_in * side * side].iter().map(|&v| c64(v, 0.0));
                Some(TensorRef::Inline(Tensor::new(vec![self.channels_in, side, side], vals)?))
            }
            Some(NetworkInput::Paths(p)) => Some(TensorRef::Inline(Tensor::from_rows(p))),
        };
        Ok(NetworkSpec {
            m: self.m,
            channels_in: self.channels_in,
            channel_fanout: self.fanout,
            k: self.k(),
            kernels,
            final_w: self.final_w.as_ref().map(|w| TensorRef::Inline(Tensor::from_matrix(w))),
            path_map: self.path_map.as_ref().map(|w| TensorRef::Inline(Tensor::from_matrix(w))),
            c_bins: self.c_bins,
            tau: self.tau,
            epsilon: self.epsilon,
            regime: self.regime,
            d_paths: self.d_paths,
            seed: self.seed,
            input,
        })
    }
}

/// Shape parameters for [`random_network`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomShape {
    pub m: usize,
    pub channels_in: usize,
    pub fanout: usize,
    pub k: usize,
    pub width: usize,
    pub c_bins: usize,
    pub regime: u8,
    pub d_paths: usize,
    pub epsilon: f64,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape { m: 2, channels_in: 1, fanout: 1, k: 1, width: 2, c_bins: 4, regime: 1, d_paths: 1, epsilon: 1e-2 }
    }
}

/// Network with uniform random kernels and, for regimes 1 and 2, a random
/// final matrix of spectral norm one. The input stays implicit (drawn from the seed).
pub fn random_network(shape: RandomShape, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let base = if shape.regime == 1 { shape.channels_in.next_power_of_two() } else { shape.channels_in };
    let channels = base * shape.fanout;
    let kernels = (0..shape.k)
        .map(|_| ConvKernel::from_fn(channels, shape.width, |_, _, _, _| rng.gen_range(-1.0..1.0)))
        .collect::<Result<Vec<_>>>()?;
    let dim = channels << (2 * shape.m);
    let final_w = (shape.regime != 3).then(|| {
        let w = CMatrix::from_fn(dim, dim, |_, _| c64(rng.gen_range(-1.0..1.0), 0.0));
        w.scale_re(1.0 / w.spectral_norm())
    });
    let net = Network {
        m: shape.m,
        channels_in: shape.channels_in,
        fanout: shape.fanout,
        kernels,
        final_w,
        path_map: None,
        c_bins: shape.c_bins,
        tau: OUTPUT_TAU,
        epsilon: shape.epsilon,
        regime: shape.regime,
        d_paths: shape.d_paths,
        seed,
        input: None,
    };
    net.geometry()?;
    Ok(net)
}

/// Classical evaluation: the final unit state and its pooled distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalOutput {
    pub state: CVector,
    pub y: Vec<f64>,
}

fn prepared_paths(net: &Network, paths: &[CVector]) -> Result<Vec<CVector>> {
    paths
        .iter()
        .map(|p| match &net.path_map {
            Some(a) => a.apply(p).normalized("path_map"),
            None => Ok(p.clone()),
        })
        .collect()
}

/// Unit input vector before fanout, in the convolution layout.
fn input_vector(net: &Network, x: &NetworkInput) -> Result<CVector> {
    const OP: &str = "network input";
    let v = match x {
        NetworkInput::Image(img) => img.vectorize(),
        NetworkInput::Paths(paths) => {
            for (i, p) in paths.iter().enumerate() {
                if (p.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::contract(OP, format!("path {i} has norm {}", p.norm())));
                }
            }
            let prepared = prepared_paths(net, paths)?;
            let mut acc = prepared[0].clone();
            for p in &prepared[1..] {
                acc = acc.kron(p);
            }
            acc
        }
    };
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::contract(OP, format!("input has norm {}", v.norm())));
    }
    Ok(v)
}

/// Exact forward pass used as the oracle.
pub fn classical_forward(net: &Network, x: &NetworkInput) -> Result<ClassicalOutput> {
    let g = net.geometry()?;
    let mut state = CVector::uniform(net.fanout).kron(&input_vector(net, x)?);
    for k in &net.kernels {
        let cm = conv_matrix_form(k, net.m);
        if cm.spectral_norm <= 0.0 {
            return Err(Error::Degenerate { op: "classical_forward", norm: cm.spectral_norm });
        }
        let wx = cm.c_mat.apply(&state).scale_re(1.0 / cm.spectral_norm);
        let sum = &state + &wx.map(|z| c64(libm::erf(0.8 * z.re), 0.0));
        state = sum.normalized("classical_forward")?;
    }
    if let Some(w) = &net.final_w {
        let wg = matvec_squared_oracle(w, &state);
        state = (&state.scale_re(net.tau) + &wg.scale_re(1.0 - net.tau)).normalized("classical_forward")?;
    }
    let y = pool_l2sq(&state, PoolingSpec::new(g.c_bins, g.dim)?)?;
    Ok(ClassicalOutput { state, y })
}

/// Exact loaders per path combined by tensor products; the target is `u₁ ⊗ … ⊗ u_d`.
pub fn bilinear_input(paths: &[CVector]) -> Result<VectorEncoding> {
    const OP: &str = "bilinear_input";
    let first = paths.first().ok_or_else(|| Error::contract(OP, "need at least one path"))?;
    if paths.iter().any(|p| p.dim() != first.dim()) {
        return Err(Error::contract(OP, "paths differ in dimension"));
    }
    let load = |p: &CVector| -> Result<VectorEncoding> {
        let mut ve = VectorEncoding::from_state(p)?;
        ve.depth = "O(N)".into();
        Ok(ve)
    };
    let mut acc = load(first)?;
    for p in &paths[1..] {
        acc = ve_tensor(&acc, &load(p)?)?;
    }
    Ok(acc)
}

/// How the target ε is split across stages before anything runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub epsilon: f64,
    /// Largest final-encoding error whose pooled image stays within ε.
    pub pool_delta: f64,
    pub output: Option<OutputBudget>,
    /// Error the residual stack has to deliver.
    pub stack_target: f64,
    /// ε fed to the stack schedule; the rest of the target absorbs input and convolution errors.
    pub stack_schedule_eps: f64,
    pub conv_eps: f64,
    pub input_eps: f64,
    pub structure_rounding: Option<f64>,
}

/// Solve the allocation: pool → output block → stack → per-layer contamination.
///
/// A constant error `e` entering every block (input and convolution) grows
/// to at most `2·712^k·e` at the end of the stack, so `e = target/(4·1424^k)`
/// keeps it under a quarter of the target; the schedule gets half.
pub fn plan_budget(net: &Network) -> Result<BudgetPlan> {
    let g = net.geometry()?;
    let eps = net.epsilon;
    let pool_delta = eps * (g.c_bins as f64).sqrt() / (2.0 * g.dim as f64);
    let output = net.final_w.as_ref().map(|_| output_budget(g.dim, g.c_bins, eps));
    let stack_target = output.map_or(pool_delta, |b| b.eps0 / 2.0);
    let e = stack_target / (4.0 * (2.0 * SKIP_NORM_GROWTH).powi(g.k as i32));
    Ok(BudgetPlan {
        epsilon: eps,
        pool_delta,
        output,
        stack_target,
        stack_schedule_eps: stack_target / 2.0,
        conv_eps: e.clamp(MIN_CONV_EPS, CONV_AMPLIFY_EPS),
        input_eps: e,
        structure_rounding: output.map(|b| b.eps0 / 4.0),
    })
}

fn structure_bits(w: &CMatrix, limit: f64) -> usize {
    let norms: Vec<f64> = (0..w.dim()).map(|j| w.column(j).norm().min(1.0)).collect();
    (MIN_ANGLE_BITS..=MAX_ANGLE_BITS)
        .find(|&d| norms.iter().all(|&a| (a - word_cos(angle_word(a, d), d)).abs() <= limit))
        .unwrap_or(MAX_ANGLE_BITS)
}

/// Ledger of one weight encoding.
fn block_record(stage: &str, be: &BlockEncoding) -> StageRecord {
    let eps_actual = be.actual_error();
    StageRecord {
        stage: stage.into(),
        alpha: be.alpha,
        ancillas: be.ancillas,
        eps_bound: be.eps_bound,
        eps_actual,
        norm_floor: None,
        passed: eps_actual.is_none_or(|e| e <= be.eps_bound + BOUND_SLACK),
    }
}

fn at_stage(stage: &str, e: Error) -> Error {
    match e {
        Error::Contract { op, msg } => Error::Contract { op, msg: format!("[{stage}] {msg}") },
        Error::Numeric { op, msg } => Error::Numeric { op, msg: format!("[{stage}] {msg}") },
        Error::BoundViolation { lemma, actual, bound } => Error::BoundViolation { lemma: format!("{stage}: {lemma}"), actual, bound },
        other => other,
    }
}

/// Execution knobs for [`quantum_forward`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: Mode,
    /// Extra sampled histogram when nonzero.
    pub shots: u64,
}

/// Final encoding's ledger next to its closed-form ancilla bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalLedger {
    pub alpha: f64,
    pub ancillas: usize,
    pub eps_bound: f64,
    /// `2^k(a + 2b + n + 9)` for the stack output.
    pub stack_ancilla_bound: usize,
    pub conv_ancillas: usize,
}

/// Distances between a sampled-from distribution and the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub l2: f64,
    pub l1: f64,
    pub argmax_reference: usize,
    pub argmax_encoded: usize,
    pub argmax_agree: bool,
    /// Reference gap between its two largest bins.
    pub top_gap: f64,
    pub epsilon: f64,
    pub passed: bool,
    #[serde(skip)]
    pub table: Vec<BoundRow>,
}

/// One bound-vs-actual line.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub stage: String,
    pub bound: f64,
    pub actual: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub schema: String,
    pub regime: u8,
    pub mode: Mode,
    pub seed: u64,
    pub geometry: Geometry,
    pub budget: BudgetPlan,
    pub input_angle_bits: Option<usize>,
    pub structure_bits: Option<usize>,
    pub conv: Vec<ConvReport>,
    pub stages: Vec<StageRecord>,
    pub ledger: FinalLedger,
    pub y_reference: Vec<f64>,
    pub y_encoded: Vec<f64>,
    pub comparison: Comparison,
    pub histogram: Option<ClassHistogram>,
    pub bounds_passed: bool,
    pub passed: bool,
}

impl InferenceReport {
    /// One CSV row per stage.
    pub fn stages_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.stages {
            w.serialize(s).map_err(|e| Error::Config(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// Compare a report's encoded distribution against `y`.
pub fn compare_report(report: &InferenceReport, y: &[f64]) -> Result<Comparison> {
    compare(&report.y_encoded, y, report.comparison.epsilon, &report.stages)
}

fn compare(encoded: &[f64], y: &[f64], epsilon: f64, stages: &[StageRecord]) -> Result<Comparison> {
    if encoded.len() != y.len() {
        return Err(Error::contract("compare_report", format!("{} bins vs {}", encoded.len(), y.len())));
    }
    let l2 = encoded.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let l1 = encoded.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    let (ar, ae) = (argmax(y), argmax(encoded));
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top_gap = if sorted.len() > 1 { sorted[0] - sorted[1] } else { 1.0 };
    let table = stages
        .iter()
        .map(|s| BoundRow { stage: s.stage.clone(), bound: s.eps_bound, actual: s.eps_actual, passed: s.passed })
        .collect();
    Ok(Comparison {
        l2,
        l1,
        argmax_reference: ar,
        argmax_encoded: ae,
        argmax_agree: ar == ae,
        top_gap,
        epsilon,
        passed: l2 <= epsilon,
        table,
    })
}

/// Encoded forward pass with per-stage ledgers, compared against [`classical_forward`].
pub fn quantum_forward(net: &Network, x: &NetworkInput, opts: RunOptions) -> Result<InferenceReport> {
    let g = net.geometry()?;
    let plan = plan_budget(net)?;
    let mut stages = Vec::new();

    let b = net.kernels.iter().map(|k| crate::convolution::conv_ancillas(k.channels(), k.width())).max().unwrap_or(0);
    let planned = stack_ancillas(g.k, 0, b, g.qubits) + g.qubits;
    if opts.mode == Mode::Circuit && planned > CIRCUIT_QUBIT_LIMIT {
        return Err(Error::contract(
            "quantum_forward",
            format!("circuit mode needs {planned} qubits, above the {CIRCUIT_QUBIT_LIMIT}-qubit limit"),
        ));
    }

    let x0 = input_vector(net, x).map_err(|e| at_stage("input", e))?;
    let (psi0, input_bits) = match x {
        NetworkInput::Image(_) => {
            let tree = StatePrepTree::build(&x0).map_err(|e| at_stage("input", e))?;
            let mut chosen = None;
            for d in MIN_ANGLE_BITS..=MAX_ANGLE_BITS {
                let ve = state_prep_ve(&tree, d, opts.mode).map_err(|e| at_stage("input", e))?;
                if ve.eps_bound <= plan.input_eps || d == MAX_ANGLE_BITS {
                    chosen = Some((ve, d));
                    break;
                }
            }
            let (ve, d) = chosen.expect("the loop always chooses at the last width");
            (ve, Some(d))
        }
        NetworkInput::Paths(paths) => {
            let prepared = prepared_paths(net, paths)?;
            (bilinear_input(&prepared).map_err(|e| at_stage("input", e))?, None)
        }
    };
    stages.push(StageRecord::of("input", &psi0));
    let mut psi = psi0;
    if net.fanout > 1 {
        psi = ve_equal_copies(&psi, net.fanout.trailing_zeros() as usize).map_err(|e| at_stage("fanout", e))?;
        stages.push(StageRecord::of("fanout", &psi));
    }
    let input_ancillas = psi.ancillas;

    let mut weights = Vec::with_capacity(g.k);
    let mut conv = Vec::with_capacity(g.k);
    for (i, k) in net.kernels.iter().enumerate() {
        let stage = format!("conv{}", i + 1);
        let (be, report) = conv_block_encoding_eps(k, net.m, plan.conv_eps).map_err(|e| at_stage(&stage, e))?;
        stages.push(block_record(&stage, &be));
        weights.push(be);
        conv.push(report);
    }
    let conv_ancillas = weights.iter().map(|w| w.ancillas).max().unwrap_or(0);
    let stack = StackSpec::new(weights, plan.stack_schedule_eps).map_err(|e| at_stage("stack", e))?;
    let run = residual_stack(&psi, &stack)?;
    stages.extend(run.stages);
    let stack_out = run.value;
    let stack_bound = stack_ancillas(g.k, input_ancillas, conv_ancillas, g.qubits);

    let pool = PoolingSpec::new(g.c_bins, g.dim)?;
    let (fin, structure_bits_used) = match &net.final_w {
        Some(w) => {
            let d = structure_bits(w, plan.structure_rounding.unwrap_or(0.0));
            let s = MatrixQramStructure::build(w, d).map_err(|e| at_stage("qram_structure", e))?;
            let r = s.rounding_error();
            let actual = s.reconstruct().dist(w);
            let bound = (g.dim as f64).sqrt() * r;
            stages.push(StageRecord {
                stage: "qram_structure".into(),
                alpha: 1.0,
                ancillas: d,
                eps_bound: bound,
                eps_actual: Some(actual),
                norm_floor: None,
                passed: actual <= bound + BOUND_SLACK,
            });
            let out = output_block(&stack_out, &s, g.c_bins, net.epsilon).map_err(|e| at_stage("output", e))?;
            stages.extend(out.stages);
            (out.value.0, Some(d))
        }
        None => (stack_out, None),
    };

    let reference = classical_forward(net, x)?;
    let exact = sample_class(&fin, pool, 0, net.seed)?;
    let pool_actual = exact.probabilities.iter().zip(&reference.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let pool_bound = pool_error_bound(g.dim, g.c_bins, fin.eps_bound);
    stages.push(StageRecord {
        stage: "pool".into(),
        alpha: 1.0,
        ancillas: fin.ancillas,
        eps_bound: pool_bound,
        eps_actual: Some(pool_actual),
        norm_floor: None,
        passed: pool_actual <= pool_bound + BOUND_SLACK && pool_bound <= net.epsilon,
    });
    let histogram = (opts.shots > 0).then(|| sample_class(&fin, pool, opts.shots, net.seed)).transpose()?;

    let comparison = compare(&exact.probabilities, &reference.y, net.epsilon, &stages)?;
    let bounds_passed = stages.iter().all(|s| s.passed);
    Ok(InferenceReport {
        schema: REPORT_SCHEMA.into(),
        regime: net.regime,
        mode: opts.mode,
        seed: net.seed,
        geometry: g,
        budget: plan,
        input_angle_bits: input_bits,
        structure_bits: structure_bits_used,
        conv,
        ledger: FinalLedger {
            alpha: fin.alpha,
            ancillas: fin.ancillas,
            eps_bound: fin.eps_bound,
            stack_ancilla_bound: stack_bound,
            conv_ancillas,
        },
        stages,
        y_reference: reference.y,
        y_encoded: exact.probabilities,
        passed: bounds_passed && comparison.passed,
        comparison,
        histogram,
        bounds_passed,
    })
}
