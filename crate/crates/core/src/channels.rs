//! Quantum broadcast channels `A' -> B ⊗ C` described by their Choi matrix.
//!
//! The Choi matrix is unnormalized, `N = sum_j (1 ⊗ K_j) phī (1 ⊗ K_j)^dagger`
//! with `phī = sum_i |ii>`, and carries the layout `(A', B, C)`. A channel
//! acts on a state as `Tr_{A'}[N (rho^T ⊗ 1)]`. A trivial receiver
//! (`|C| = 1`) embeds every point-to-point channel.

use crate::error::{QbcError, Result};
use crate::random::{random_isometry, Rng};
use crate::tensor::{max_abs, HermitianOperator, SubsystemLayout};
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Label of the channel input.
pub const IN: &str = "A'";
/// Label of Bob's output.
pub const BOB: &str = "B";
/// Label of Charlie's output.
pub const CHARLIE: &str = "C";

/// Tolerance on `sum K^dagger K = 1` when building a Kraus set.
pub const KRAUS_TP_TOL: f64 = 1e-10;
/// Tolerance of [`validate_channel`].
pub const VALIDATION_TOL: f64 = 1e-9;

/// Input and output dimensions `(|A'|, |B|, |C|)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Input dimension.
    pub a: usize,
    /// Bob's output dimension.
    pub b: usize,
    /// Charlie's output dimension.
    pub c: usize,
}

impl Dims {
    /// The layout `(A', B, C)`.
    pub fn layout(&self) -> SubsystemLayout {
        SubsystemLayout::new([(IN, self.a), (BOB, self.b), (CHARLIE, self.c)])
            .expect("fixed distinct labels")
    }

    /// `|A'| |B| |C|`.
    pub fn total(&self) -> usize {
        self.a * self.b * self.c
    }
}

/// Kraus operators of shape `(|B||C|) x |A'|`.
#[derive(Clone, Debug)]
pub struct KrausSet {
    dims: Dims,
    operators: Vec<Mat<c64>>,
    trace_preserving: bool,
}

impl KrausSet {
    /// A trace-preserving Kraus set; fails unless `sum K^dagger K = 1` to
    /// [`KRAUS_TP_TOL`].
    pub fn new(dims: Dims, operators: Vec<Mat<c64>>) -> Result<Self> {
        let k = Self::new_unchecked(dims, operators)?;
        let dev = k.tp_deviation();
        if dev > KRAUS_TP_TOL {
            return Err(QbcError::InvalidChannel(format!(
                "Kraus operators are not trace preserving (deviation {dev:e})"
            )));
        }
        Ok(Self {
            trace_preserving: true,
            ..k
        })
    }

    /// A Kraus set whose trace preservation is not enforced (for invalid
    /// fixtures); shapes are still checked.
    pub fn new_unchecked(dims: Dims, operators: Vec<Mat<c64>>) -> Result<Self> {
        if operators.is_empty() {
            return Err(QbcError::InvalidChannel("no Kraus operators".into()));
        }
        for k in &operators {
            if k.nrows() != dims.b * dims.c || k.ncols() != dims.a {
                return Err(QbcError::DimensionMismatch(format!(
                    "Kraus operator is {}x{}, expected {}x{}",
                    k.nrows(),
                    k.ncols(),
                    dims.b * dims.c,
                    dims.a
                )));
            }
        }
        let mut s = Self {
            dims,
            operators,
            trace_preserving: false,
        };
        s.trace_preserving = s.tp_deviation() <= KRAUS_TP_TOL;
        Ok(s)
    }

    /// `max |sum K^dagger K - 1|`.
    pub fn tp_deviation(&self) -> f64 {
        let mut s = Mat::<c64>::zeros(self.dims.a, self.dims.a);
        for k in &self.operators {
            s += k.adjoint() * k;
        }
        max_abs(&(&s - Mat::<c64>::identity(self.dims.a, self.dims.a)))
    }

    /// Whether the set was verified trace preserving.
    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    /// Dimensions.
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// The operators.
    pub fn operators(&self) -> &[Mat<c64>] {
        &self.operators
    }

    /// `sum_j K_j rho K_j^dagger` on `B ⊗ C`.
    pub fn apply(&self, rho: &HermitianOperator) -> Result<HermitianOperator> {
        if rho.side() != self.dims.a {
            return Err(QbcError::DimensionMismatch(format!(
                "state of side {} for input dimension {}",
                rho.side(),
                self.dims.a
            )));
        }
        let n = self.dims.b * self.dims.c;
        let mut out = Mat::<c64>::zeros(n, n);
        for k in &self.operators {
            out += k * rho.matrix() * k.adjoint();
        }
        HermitianOperator::from_hermitian_part(output_layout(self.dims), out)
    }
}

fn output_layout(d: Dims) -> SubsystemLayout {
    SubsystemLayout::new([(BOB, d.b), (CHARLIE, d.c)]).expect("fixed distinct labels")
}

/// A broadcast channel stored as its Choi matrix `N^{A'BC}`.
#[derive(Clone, Debug)]
pub struct BroadcastChannel {
    name: String,
    dims: Dims,
    choi: HermitianOperator,
}

/// Outcome of [`validate_channel`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Complete positivity (`min eig >= -tol`).
    pub cp: bool,
    /// Trace preservation (`|Tr_{BC} N - 1| <= tol`).
    pub tp: bool,
    /// Smallest eigenvalue of the Choi matrix.
    pub min_eigenvalue: f64,
    /// `max |Tr_{BC} N - 1|`.
    pub tp_deviation: f64,
}

impl ValidationReport {
    /// Both checks passed.
    pub fn is_valid(&self) -> bool {
        self.cp && self.tp
    }
}

impl BroadcastChannel {
    /// Wraps a Choi matrix after checking its layout size and validity.
    pub fn from_choi(name: &str, dims: Dims, choi: HermitianOperator) -> Result<Self> {
        let ch = Self::from_choi_unchecked(name, dims, choi)?;
        let rep = validate_channel(&ch);
        if !rep.is_valid() {
            return Err(QbcError::InvalidChannel(format!(
                "`{name}`: min eigenvalue {:e}, TP deviation {:e}",
                rep.min_eigenvalue, rep.tp_deviation
            )));
        }
        Ok(ch)
    }

    /// Wraps a Choi matrix without validating CP/TP (the layout is reset to
    /// `(A', B, C)`).
    pub fn from_choi_unchecked(name: &str, dims: Dims, choi: HermitianOperator) -> Result<Self> {
        let choi = choi.regroup(dims.layout())?;
        Ok(Self {
            name: name.to_string(),
            dims,
            choi,
        })
    }

    /// Display name.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Dimensions.
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// The Choi matrix `N^{A'BC}`.
    pub fn choi(&self) -> &HermitianOperator {
        &self.choi
    }

    /// The Choi state `N / |A'|`.
    pub fn choi_state(&self) -> HermitianOperator {
        self.choi.scale(1.0 / self.dims.a as f64)
    }

    /// Renames the channel.
    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Bob's marginal channel `Tr_C ∘ N`, as a channel with `|C| = 1`.
    pub fn bob_marginal(&self) -> Self {
        let choi = self.choi.ptrace(&[CHARLIE]).expect("label present");
        let dims = Dims {
            c: 1,
            ..self.dims
        };
        Self::from_choi_unchecked(&format!("{} (Bob)", self.name), dims, choi)
            .expect("dimensions agree")
    }

    /// Charlie's marginal channel `Tr_B ∘ N`, as a channel whose receiver
    /// `B` is Charlie and `|C| = 1`.
    pub fn charlie_marginal(&self) -> Self {
        let choi = self.choi.ptrace(&[BOB]).expect("label present");
        let dims = Dims {
            a: self.dims.a,
            b: self.dims.c,
            c: 1,
        };
        Self::from_choi_unchecked(&format!("{} (Charlie)", self.name), dims, choi)
            .expect("dimensions agree")
    }

    /// The point-to-point channel obtained by merging `B` and `C` into one
    /// receiver (with `|C| = 1`).
    pub fn merged(&self) -> Self {
        let dims = Dims {
            a: self.dims.a,
            b: self.dims.b * self.dims.c,
            c: 1,
        };
        Self::from_choi_unchecked(&format!("{} (merged)", self.name), dims, self.choi.clone())
            .expect("dimensions agree")
    }
}

/// Choi matrix `sum_j (1 ⊗ K_j) phī (1 ⊗ K_j)^dagger`.
pub fn choi_from_kraus(name: &str, k: &KrausSet) -> Result<BroadcastChannel> {
    let d = k.dims();
    let nbc = d.b * d.c;
    let n = d.a * nbc;
    let mut m = Mat::<c64>::zeros(n, n);
    for op in k.operators() {
        // (1 ⊗ K)|phī> has amplitude K[o, i] at index i * |BC| + o.
        let v: Vec<c64> = (0..n).map(|idx| op[(idx % nbc, idx / nbc)]).collect();
        for j in 0..n {
            let vj = v[j].conj();
            if vj == c64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..n {
                m[(i, j)] += v[i] * vj;
            }
        }
    }
    let choi = HermitianOperator::from_hermitian_part(d.layout(), m)?;
    if k.is_trace_preserving() {
        BroadcastChannel::from_choi(name, d, choi)
    } else {
        BroadcastChannel::from_choi_unchecked(name, d, choi)
    }
}

/// Kraus operators recovered from the eigendecomposition of the Choi
/// matrix; eigenvalues below `1e-14` times the largest are dropped.
pub fn kraus_from_choi(n: &BroadcastChannel) -> Result<KrausSet> {
    let d = n.dims();
    let nbc = d.b * d.c;
    let (vals, vecs) = n.choi().eigh();
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let ops = vals
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 1e-14 * top)
        .map(|(k, &l)| {
            let s = l.sqrt();
            Mat::from_fn(nbc, d.a, |o, i| vecs[(i * nbc + o, k)] * s)
        })
        .collect();
    KrausSet::new_unchecked(d, ops)
}

/// The channel `rho -> V rho V^dagger` of an isometry `V: A' -> B ⊗ C`.
pub fn broadcast_from_isometry(name: &str, v: &Mat<c64>, b: usize, c: usize) -> Result<BroadcastChannel> {
    let a = v.ncols();
    if v.nrows() != b * c {
        return Err(QbcError::DimensionMismatch(format!(
            "isometry has {} rows, expected {}",
            v.nrows(),
            b * c
        )));
    }
    let dev = max_abs(&(v.adjoint() * v - Mat::<c64>::identity(a, a)));
    if dev > KRAUS_TP_TOL {
        return Err(QbcError::NotIsometry(dev));
    }
    let k = KrausSet::new(Dims { a, b, c }, vec![v.clone()])?;
    choi_from_kraus(name, &k)
}

/// CP and TP checks at [`VALIDATION_TOL`].
pub fn validate_channel(n: &BroadcastChannel) -> ValidationReport {
    let min_eigenvalue = n.choi.min_eigenvalue();
    let marg = n.choi.ptrace(&[BOB, CHARLIE]).expect("labels present");
    let eye = HermitianOperator::identity(marg.layout().clone());
    let tp_deviation = marg.sub(&eye).expect("same layout").op_norm();
    ValidationReport {
        cp: min_eigenvalue >= -VALIDATION_TOL,
        tp: tp_deviation <= VALIDATION_TOL,
        min_eigenvalue,
        tp_deviation,
    }
}

/// Output `Tr_{A'}[N (rho^T ⊗ 1)]` on `B ⊗ C`.
pub fn apply_channel(n: &BroadcastChannel, rho: &HermitianOperator) -> Result<HermitianOperator> {
    if rho.side() != n.dims.a {
        return Err(QbcError::DimensionMismatch(format!(
            "state of side {} for input dimension {}",
            rho.side(),
            n.dims.a
        )));
    }
    let rho_t = rho
        .regroup(SubsystemLayout::single(IN, n.dims.a))?
        .transpose();
    let big = rho_t.expand_to(n.choi.layout())?;
    let prod = n.choi.matrix() * big.matrix();
    let full = HermitianOperator::from_hermitian_part(n.choi.layout().clone(), prod)?;
    full.ptrace(&[IN])
}

/// Product channel `N1 ⊗ N2` with grouped layout `(A'1A'2, B1B2, C1C2)`.
pub fn tensor_channels(n1: &BroadcastChannel, n2: &BroadcastChannel) -> Result<BroadcastChannel> {
    let l1 = SubsystemLayout::new([
        ("A'1", n1.dims.a),
        ("B1", n1.dims.b),
        ("C1", n1.dims.c),
    ])?;
    let l2 = SubsystemLayout::new([
        ("A'2", n2.dims.a),
        ("B2", n2.dims.b),
        ("C2", n2.dims.c),
    ])?;
    let prod = n1
        .choi
        .with_layout(l1)?
        .tensor(&n2.choi.with_layout(l2)?)?
        .permute(&["A'1", "A'2", "B1", "B2", "C1", "C2"])?;
    let dims = Dims {
        a: n1.dims.a * n2.dims.a,
        b: n1.dims.b * n2.dims.b,
        c: n1.dims.c * n2.dims.c,
    };
    BroadcastChannel::from_choi_unchecked(&format!("{} ⊗ {}", n1.name, n2.name), dims, prod)
}

fn cplx(re: f64) -> c64 {
    c64::new(re, 0.0)
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QbcError::InvalidArgument(format!(
            "{name} must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Identity channel on dimension `d` (`|C| = 1`).
pub fn identity(d: usize) -> Result<BroadcastChannel> {
    if d < 1 {
        return Err(QbcError::InvalidArgument("dimension must be at least 1".into()));
    }
    let k = KrausSet::new(Dims { a: d, b: d, c: 1 }, vec![Mat::identity(d, d)])?;
    choi_from_kraus(&format!("identity(d={d})"), &k)
}

/// Channel replacing every input by the maximally mixed state on `B ⊗ C`.
pub fn replacer(d_in: usize, d_b: usize, d_c: usize) -> Result<BroadcastChannel> {
    if d_in < 1 || d_b < 1 || d_c < 1 {
        return Err(QbcError::InvalidArgument("dimensions must be at least 1".into()));
    }
    let dims = Dims {
        a: d_in,
        b: d_b,
        c: d_c,
    };
    let choi = HermitianOperator::identity(dims.layout()).scale(1.0 / (d_b * d_c) as f64);
    BroadcastChannel::from_choi(&format!("replacer({d_in},{d_b},{d_c})"), dims, choi)
}

fn pauli() -> [Mat<c64>; 4] {
    let i = Mat::<c64>::identity(2, 2);
    let x = Mat::from_fn(2, 2, |r, c| if r != c { cplx(1.0) } else { cplx(0.0) });
    let y = Mat::from_fn(2, 2, |r, c| match (r, c) {
        (0, 1) => c64::new(0.0, -1.0),
        (1, 0) => c64::new(0.0, 1.0),
        _ => cplx(0.0),
    });
    let z = Mat::from_fn(2, 2, |r, c| match (r, c) {
        (0, 0) => cplx(1.0),
        (1, 1) => cplx(-1.0),
        _ => cplx(0.0),
    });
    [i, x, y, z]
}

/// Qubit depolarizing channel `(1 - p) rho + p 1/2` (`|C| = 1`).
pub fn depolarizing(p: f64) -> Result<BroadcastChannel> {
    check_prob("p", p)?;
    let [i, x, y, z] = pauli();
    let w0 = (1.0 - 0.75 * p).sqrt();
    let w = (p / 4.0).sqrt();
    let ops = vec![
        &i * faer::Scale(cplx(w0)),
        &x * faer::Scale(cplx(w)),
        &y * faer::Scale(cplx(w)),
        &z * faer::Scale(cplx(w)),
    ];
    let k = KrausSet::new(Dims { a: 2, b: 2, c: 1 }, ops)?;
    choi_from_kraus(&format!("depolarizing(p={p})"), &k)
}

/// Qubit dephasing channel `(1 - p) rho + p Z rho Z` (`|C| = 1`).
pub fn dephasing(p: f64) -> Result<BroadcastChannel> {
    check_prob("p", p)?;
    let [i, _, _, z] = pauli();
    let ops = vec![
        &i * faer::Scale(cplx((1.0 - p).sqrt())),
        &z * faer::Scale(cplx(p.sqrt())),
    ];
    let k = KrausSet::new(Dims { a: 2, b: 2, c: 1 }, ops)?;
    choi_from_kraus(&format!("dephasing(p={p})"), &k)
}

/// Qubit erasure channel with output dimension 3 (`|C| = 1`); the erasure
/// flag is the basis state `|2>`.
pub fn erasure(p: f64) -> Result<BroadcastChannel> {
    check_prob("p", p)?;
    let keep = Mat::from_fn(3, 2, |r, c| if r == c { cplx((1.0 - p).sqrt()) } else { cplx(0.0) });
    let lose = |col: usize| {
        Mat::from_fn(3, 2, |r, c| if r == 2 && c == col { cplx(p.sqrt()) } else { cplx(0.0) })
    };
    let k = KrausSet::new(Dims { a: 2, b: 3, c: 1 }, vec![keep, lose(0), lose(1)])?;
    choi_from_kraus(&format!("erasure(p={p})"), &k)
}

/// Isometry of the qubit amplitude-damping channel with its environment:
/// `|0> -> |0>_B|0>_C`, `|1> -> sqrt(1-γ)|1>_B|0>_C + sqrtγ |0>_B|1>_C`.
pub fn amplitude_damping_isometry(gamma: f64) -> Result<Mat<c64>> {
    check_prob("gamma", gamma)?;
    let mut v = Mat::<c64>::zeros(4, 2);
    v[(0, 0)] = cplx(1.0);
    v[(2, 1)] = cplx((1.0 - gamma).sqrt());
    v[(1, 1)] = cplx(gamma.sqrt());
    Ok(v)
}

/// Amplitude damping with Bob receiving the output and Charlie the
/// environment.
pub fn amplitude_damping_env(gamma: f64) -> Result<BroadcastChannel> {
    let v = amplitude_damping_isometry(gamma)?;
    broadcast_from_isometry(&format!("amplitude-damping(gamma={gamma})"), &v, 2, 2)
}

/// A random channel from a Haar-random isometry `A' -> B ⊗ C ⊗ E`
/// followed by tracing out `E`.
pub fn random_channel(rng: &mut Rng, dims: Dims, env: usize) -> Result<BroadcastChannel> {
    let nbc = dims.b * dims.c;
    if dims.a < 1 || nbc * env < dims.a {
        return Err(QbcError::InvalidArgument(format!(
            "no isometry from dimension {} into {nbc} x {env}",
            dims.a
        )));
    }
    let v = random_isometry(rng, nbc * env, dims.a);
    let ops = (0..env)
        .map(|e| Mat::from_fn(nbc, dims.a, |r, c| v[(r * env + e, c)]))
        .collect();
    let k = KrausSet::new(dims, ops)?;
    choi_from_kraus(&format!("random({},{},{};env={env})", dims.a, dims.b, dims.c), &k)
}

/// A random qubit broadcast channel `2 -> 2 ⊗ 2` with a qubit environment.
pub fn random_qubit_broadcast(rng: &mut Rng) -> BroadcastChannel {
    random_channel(rng, Dims { a: 2, b: 2, c: 2 }, 2).expect("valid dimensions")
}

/// JSON description of a channel: explicit Kraus operators or a builtin.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    /// Explicit Kraus operators; each operator is a list of rows of
    /// `[re, im]` pairs, of shape `(|B||C|) x |A'|`.
    Kraus {
        /// Display name.
        name: String,
        /// Dimensions with keys `A`, `B`, `C`.
        dims: JsonDims,
        /// The operators.
        kraus: Vec<Vec<Vec<[f64; 2]>>>,
    },
    /// A builtin constructor.
    Builtin {
        /// Builtin name.
        builtin: String,
        /// Numeric parameters.
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

/// Dimensions as they appear in channel JSON.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JsonDims {
    /// `|A'|`.
    #[serde(rename = "A")]
    pub a: usize,
    /// `|B|`.
    #[serde(rename = "B")]
    pub b: usize,
    /// `|C|`.
    #[serde(rename = "C")]
    pub c: usize,
}

impl ChannelSpec {
    /// Builds the channel.
    pub fn build(&self) -> Result<BroadcastChannel> {
        match self {
            ChannelSpec::Kraus { name, dims, kraus } => {
                let d = Dims {
                    a: dims.a,
                    b: dims.b,
                    c: dims.c,
                };
                let mut ops = Vec::with_capacity(kraus.len());
                for (idx, op) in kraus.iter().enumerate() {
                    if op.len() != d.b * d.c || op.iter().any(|row| row.len() != d.a) {
                        return Err(QbcError::Parse(format!(
                            "kraus[{idx}] must have {} rows of {} entries",
                            d.b * d.c,
                            d.a
                        )));
                    }
                    ops.push(Mat::from_fn(d.b * d.c, d.a, |r, c| {
                        c64::new(op[r][c][0], op[r][c][1])
                    }));
                }
                let k = KrausSet::new(d, ops)?;
                choi_from_kraus(name, &k)
            }
            ChannelSpec::Builtin { builtin, params } => build_builtin(builtin, params),
        }
    }

    /// Parses channel JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            QbcError::Parse(format!("channel JSON at line {} column {}: {e}", e.line(), e.column()))
        })
    }
}

fn param(params: &BTreeMap<String, f64>, keys: &[&str], default: Option<f64>) -> Result<f64> {
    for k in keys {
        if let Some(v) = params.get(*k) {
            return Ok(*v);
        }
    }
    default.ok_or_else(|| QbcError::Parse(format!("missing parameter `{}`", keys[0])))
}

fn dim_param(params: &BTreeMap<String, f64>, keys: &[&str], default: Option<usize>) -> Result<usize> {
    let v = param(params, keys, default.map(|d| d as f64))?;
    if v < 1.0 || v.fract() != 0.0 || v > 64.0 {
        return Err(QbcError::Parse(format!(
            "parameter `{}` must be an integer in 1..=64, got {v}",
            keys[0]
        )));
    }
    Ok(v as usize)
}

/// Builds a named builtin channel from numeric parameters.
pub fn build_builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<BroadcastChannel> {
    match name {
        "identity" | "id" => identity(dim_param(params, &["d"], Some(2))?),
        "replacer" => replacer(
            dim_param(params, &["a", "d_in", "d"], Some(2))?,
            dim_param(params, &["b", "d_b"], Some(2))?,
            dim_param(params, &["c", "d_c"], Some(2))?,
        ),
        "depolarizing" => depolarizing(param(params, &["p"], None)?),
        "dephasing" => dephasing(param(params, &["p"], None)?),
        "erasure" => erasure(param(params, &["p"], None)?),
        "amplitude-damping" | "damping" => {
            amplitude_damping_env(param(params, &["gamma", "g"], None)?)
        }
        other => Err(QbcError::Parse(format!("unknown builtin channel `{other}`"))),
    }
}

/// Parses `builtin:<name>,k=v,...` (or a bare `<name>,k=v,...`).
pub fn parse_builtin_spec(spec: &str) -> Result<BroadcastChannel> {
    let body = spec.strip_prefix("builtin:").unwrap_or(spec);
    let mut parts = body.split(',');
    let name = parts.next().unwrap_or("").trim();
    let mut params = BTreeMap::new();
    for kv in parts {
        let kv = kv.trim();
        if kv.is_empty() {
            continue;
        }
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| QbcError::Parse(format!("expected key=value, got `{kv}`")))?;
        let x: f64 = v
            .trim()
            .parse()
            .map_err(|_| QbcError::Parse(format!("`{v}` is not a number")))?;
        params.insert(k.trim().to_string(), x);
    }
    build_builtin(name, &params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_density;
    use crate::tensor::{max_entangled, tensor_product};

    fn close(a: &HermitianOperator, b: &HermitianOperator, tol: f64) -> bool {
        crate::tensor::max_abs(&(a.matrix() - b.matrix())) <= tol
    }

    #[test]
    fn identity_choi_is_unnormalized_epr() {
        let n = identity(2).unwrap();
        let phi = max_entangled(2, false).unwrap().projector();
        assert!(close(n.choi(), &phi, 1e-15));
        assert!((n.choi().trace() - 2.0).abs() < 1e-15);
        let ev = n.choi().eigenvalues();
        assert!(ev[..3].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn fully_depolarizing_choi_is_half_identity() {
        let n = depolarizing(1.0).unwrap();
        let want = HermitianOperator::identity(n.choi().layout().clone()).scale(0.5);
        assert!(close(n.choi(), &want, 1e-15));
    }

    #[test]
    fn damping_marginals_at_the_extremes() {
        let mut rng = Rng::seed(21);
        let rho = random_density(&mut rng, SubsystemLayout::single(IN, 2));
        let zero = HermitianOperator::from_real_fn(SubsystemLayout::single(BOB, 2), |i, j| {
            if i == 0 && j == 0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let n0 = amplitude_damping_env(0.0).unwrap();
        let bob = apply_channel(&n0.bob_marginal(), &rho).unwrap();
        let charlie = apply_channel(&n0.charlie_marginal(), &rho).unwrap();
        assert!(crate::tensor::max_abs(&(bob.matrix() - rho.matrix())) < 1e-14);
        assert!(crate::tensor::max_abs(&(charlie.matrix() - zero.matrix())) < 1e-14);
        let n1 = amplitude_damping_env(1.0).unwrap();
        let bob = apply_channel(&n1.bob_marginal(), &rho).unwrap();
        let charlie = apply_channel(&n1.charlie_marginal(), &rho).unwrap();
        assert!(crate::tensor::max_abs(&(bob.matrix() - zero.matrix())) < 1e-14);
        assert!(crate::tensor::max_abs(&(charlie.matrix() - rho.matrix())) < 1e-14);
    }

    #[test]
    fn validation_reports() {
        let n = identity(2).unwrap();
        assert!(validate_channel(&n).is_valid());
        let shifted = n
            .choi()
            .sub(&HermitianOperator::identity(n.choi().layout().clone()).scale(0.1))
            .unwrap();
        // Shifting by -0.1 keeps CP false for the identity (its Choi has zero eigenvalues).
        let bad = BroadcastChannel::from_choi_unchecked("s", n.dims(), shifted).unwrap();
        let rep = validate_channel(&bad);
        assert!(!rep.tp);
        let neg = BroadcastChannel::from_choi_unchecked("neg", n.dims(), n.choi().scale(-1.0)).unwrap();
        assert!(!validate_channel(&neg).cp);
    }

    #[test]
    fn choi_application_matches_kraus() {
        let mut rng = Rng::seed(22);
        let dims = Dims { a: 2, b: 2, c: 3 };
        let v = random_isometry(&mut rng, 12, 2);
        let ops: Vec<Mat<c64>> = (0..2)
            .map(|e| Mat::from_fn(6, 2, |r, c| v[(r * 2 + e, c)]))
            .collect();
        let k = KrausSet::new(dims, ops).unwrap();
        let n = choi_from_kraus("r", &k).unwrap();
        for _ in 0..50 {
            let rho = random_density(&mut rng, SubsystemLayout::single(IN, 2));
            let a = apply_channel(&n, &rho).unwrap();
            let b = k.apply(&rho).unwrap();
            assert!(close(&a, &b, 1e-12));
            assert!((a.trace() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn replacer_outputs_maximally_mixed() {
        let mut rng = Rng::seed(23);
        let n = replacer(3, 2, 2).unwrap();
        let rho = random_density(&mut rng, SubsystemLayout::single(IN, 3));
        let out = apply_channel(&n, &rho).unwrap();
        let want = HermitianOperator::identity(out.layout().clone()).scale(0.25);
        assert!(close(&out, &want, 1e-14));
    }

    #[test]
    fn product_channel_acts_on_products() {
        let mut rng = Rng::seed(24);
        let n1 = random_qubit_broadcast(&mut rng);
        let n2 = random_channel(&mut rng, Dims { a: 2, b: 3, c: 1 }, 2).unwrap();
        let n12 = tensor_channels(&n1, &n2).unwrap();
        assert!(validate_channel(&n12).is_valid());
        let r1 = random_density(&mut rng, SubsystemLayout::single("x", 2));
        let r2 = random_density(&mut rng, SubsystemLayout::single("y", 2));
        let out = apply_channel(&n12, &tensor_product(&r1, &r2).unwrap()).unwrap();
        let o1 = apply_channel(&n1, &r1)
            .unwrap()
            .regroup(SubsystemLayout::new([("B1", 2), ("C1", 2)]).unwrap())
            .unwrap();
        let o2 = apply_channel(&n2, &r2)
            .unwrap()
            .regroup(SubsystemLayout::new([("B2", 3), ("C2", 1)]).unwrap())
            .unwrap();
        let want = tensor_product(&o1, &o2)
            .unwrap()
            .permute(&["B1", "B2", "C1", "C2"])
            .unwrap();
        assert!(crate::tensor::max_abs(&(out.matrix() - want.matrix())) < 1e-12);
    }

    #[test]
    fn builtins_validate_and_parse() {
        for spec in [
            "builtin:identity,d=3",
            "builtin:replacer,a=2,b=2,c=2",
            "builtin:depolarizing,p=0.3",
            "builtin:dephasing,p=0.2",
            "builtin:erasure,p=0.4",
            "builtin:amplitude-damping,gamma=0.3",
        ] {
            let n = parse_builtin_spec(spec).unwrap();
            assert!(validate_channel(&n).is_valid(), "{spec}");
        }
        assert!(parse_builtin_spec("builtin:nope").is_err());
        assert!(parse_builtin_spec("builtin:depolarizing,p=x").is_err());
    }

    #[test]
    fn kraus_json_round_trip() {
        let text = r#"{"name":"flip","dims":{"A":2,"B":2,"C":1},
            "kraus":[[[[0,0],[1,0]],[[1,0],[0,0]]]]}"#;
        let n = ChannelSpec::from_json(text).unwrap().build().unwrap();
        assert!(validate_channel(&n).is_valid());
        let bad = r#"{"name":"x","dims":{"A":2,"B":2,"C":1},"kraus":[[[[0.5,0],[0,0]],[[0,0],[0.5,0]]]]}"#;
        assert!(ChannelSpec::from_json(bad).unwrap().build().is_err());
        let builtin = r#"{"builtin":"identity","params":{"d":2}}"#;
        assert_eq!(ChannelSpec::from_json(builtin).unwrap().build().unwrap().dims().a, 2);
    }
}
