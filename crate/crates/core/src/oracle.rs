//! Brute-force ground truth: explicit forward-assisted codes, their Choi
//! matrices, induced fidelities and no-signalling checks.
//!
//! A forward-assisted code is an encoder `A1 A2 -> A' ⊗ R` followed by a
//! decoder `R ⊗ B ⊗ C -> B' ⊗ C'`, where `R` is carried from Alice to the
//! receivers. Its Choi matrix `Z` lives on `(A1, A2, B, C, A', B', C')`
//! with inputs `A = A1 A2`, `B`, `C` and outputs `A'`, `B'`, `C'`.

use crate::channels::{kraus_from_choi, BroadcastChannel, Dims, BOB, CHARLIE, IN};
use crate::combing::target_pairs;
use crate::error::{QbcError, Result};
use crate::fidelity::{code_layout, twirl_code_choi, A1, A2, B_OUT, C_OUT};
use crate::random::{random_isometry, Rng};
use crate::tensor::{max_abs, HermitianOperator, SubsystemLayout};
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

/// Label of the forward register carried from Alice to Bob and Charlie.
pub const FORWARD: &str = "R";
/// Tolerance of the CP and TP checks on code Choi matrices.
pub const CODE_TOL: f64 = 1e-9;
/// Tolerance on the trace preservation of encoder and decoder Kraus sets.
pub const KRAUS_TOL: f64 = 1e-10;
/// Residual below which a no-signalling condition counts as satisfied.
pub const NS_TOL: f64 = 1e-8;

fn zero() -> c64 {
    c64::new(0.0, 0.0)
}

/// Choi matrix `sum_k sum_ij |i><j| ⊗ K_k|i><j|K_k^dagger` of a map given by
/// Kraus operators, on `input ⊗ output`.
pub fn choi_of_kraus_map(
    input: &SubsystemLayout,
    output: &SubsystemLayout,
    ops: &[Mat<c64>],
) -> Result<HermitianOperator> {
    let (din, dout) = (input.dim(), output.dim());
    let n = din * dout;
    let mut m = Mat::<c64>::zeros(n, n);
    for k in ops {
        if k.nrows() != dout || k.ncols() != din {
            return Err(QbcError::DimensionMismatch(format!(
                "Kraus operator is {}x{}, expected {dout}x{din}",
                k.nrows(),
                k.ncols()
            )));
        }
        let v: Vec<c64> = (0..n).map(|idx| k[(idx % dout, idx / dout)]).collect();
        for j in 0..n {
            let vj = v[j].conj();
            if vj == zero() {
                continue;
            }
            for i in 0..n {
                m[(i, j)] += v[i] * vj;
            }
        }
    }
    HermitianOperator::from_hermitian_part(input.concat(output)?, m)
}

fn tp_deviation(ops: &[Mat<c64>], din: usize) -> f64 {
    let mut s = Mat::<c64>::zeros(din, din);
    for k in ops {
        s += k.adjoint() * k;
    }
    max_abs(&(&s - Mat::<c64>::identity(din, din)))
}

/// A code Choi matrix on `(A1, A2, B, C, A', B', C')`.
#[derive(Clone, Debug)]
pub struct CodeChoi {
    /// The Choi matrix.
    pub z: HermitianOperator,
    /// Bob's code size.
    pub r1: usize,
    /// Charlie's code size.
    pub r2: usize,
}

impl CodeChoi {
    /// Wraps `z` after checking its layout against `(r1, r2)`.
    pub fn new(z: HermitianOperator, r1: usize, r2: usize) -> Result<Self> {
        let lay = z.layout();
        let expected = code_layout(r1, r2, lay)?;
        if lay != &expected {
            return Err(QbcError::DimensionMismatch(format!(
                "code Choi layout {:?} does not match {:?}",
                lay.labels(),
                expected.labels()
            )));
        }
        Ok(Self { z, r1, r2 })
    }

    /// Channel dimensions `(|A'|, |B|, |C|)` the code acts on.
    pub fn dims(&self) -> Dims {
        let lay = self.z.layout();
        Dims {
            a: lay.dim_of(IN).expect("code layout"),
            b: lay.dim_of(BOB).expect("code layout"),
            c: lay.dim_of(CHARLIE).expect("code layout"),
        }
    }

    /// Smallest eigenvalue of `Z`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.z.min_eigenvalue()
    }

    /// `|Tr_{A'B'C'} Z - 1|` in operator norm.
    pub fn tp_deviation(&self) -> f64 {
        let m = self.z.ptrace(&[IN, B_OUT, C_OUT]).expect("code layout");
        let eye = HermitianOperator::identity(m.layout().clone());
        m.sub(&eye).expect("same layout").op_norm()
    }

    /// CP and TP within [`CODE_TOL`].
    pub fn is_valid(&self) -> bool {
        self.min_eigenvalue() >= -CODE_TOL && self.tp_deviation() <= CODE_TOL
    }

    /// The twirled code.
    pub fn twirled(&self) -> Result<Self> {
        let z = twirl_code_choi(&self.z, self.r1, self.r2)?.twirled_choi()?;
        Self::new(z, self.r1, self.r2)
    }
}

/// An encoder `A1 A2 -> A' ⊗ R` and a decoder `R ⊗ B ⊗ C -> B' ⊗ C'`, both
/// given by Kraus operators. A single encoder Kraus operator is an
/// isometry.
#[derive(Clone, Debug)]
pub struct EncoderDecoderPair {
    r1: usize,
    r2: usize,
    dims: Dims,
    r_dim: usize,
    encoder: Vec<Mat<c64>>,
    decoder: Vec<Mat<c64>>,
}

impl EncoderDecoderPair {
    /// Checks shapes and trace preservation to [`KRAUS_TOL`].
    ///
    /// Encoder operators are `(|A'| |R|) x (r1 r2)` with output index
    /// `a |R| + r`; decoder operators are `(r1 r2) x (|R| |B| |C|)` with
    /// input index `(r |B| + b) |C| + c`.
    pub fn new(
        r1: usize,
        r2: usize,
        dims: Dims,
        r_dim: usize,
        encoder: Vec<Mat<c64>>,
        decoder: Vec<Mat<c64>>,
    ) -> Result<Self> {
        let n_msg = r1 * r2;
        let n_rbc = r_dim * dims.b * dims.c;
        if encoder.is_empty() || decoder.is_empty() {
            return Err(QbcError::InvalidArgument("empty Kraus set".into()));
        }
        for k in &encoder {
            if k.nrows() != dims.a * r_dim || k.ncols() != n_msg {
                return Err(QbcError::DimensionMismatch(format!(
                    "encoder operator is {}x{}, expected {}x{n_msg}",
                    k.nrows(),
                    k.ncols(),
                    dims.a * r_dim
                )));
            }
        }
        for k in &decoder {
            if k.nrows() != n_msg || k.ncols() != n_rbc {
                return Err(QbcError::DimensionMismatch(format!(
                    "decoder operator is {}x{}, expected {n_msg}x{n_rbc}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let dev = tp_deviation(&encoder, n_msg);
        if dev > KRAUS_TOL {
            return Err(QbcError::NotIsometry(dev));
        }
        let dev = tp_deviation(&decoder, n_rbc);
        if dev > KRAUS_TOL {
            return Err(QbcError::InvalidChannel(format!(
                "decoder is not trace preserving (deviation {dev:e})"
            )));
        }
        Ok(Self {
            r1,
            r2,
            dims,
            r_dim,
            encoder,
            decoder,
        })
    }

    /// Code sizes `(r1, r2)`.
    pub fn sizes(&self) -> (usize, usize) {
        (self.r1, self.r2)
    }

    /// Channel dimensions.
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// `|R|`.
    pub fn r_dim(&self) -> usize {
        self.r_dim
    }

    /// Encoder Kraus operators.
    pub fn encoder(&self) -> &[Mat<c64>] {
        &self.encoder
    }

    /// Decoder Kraus operators.
    pub fn decoder(&self) -> &[Mat<c64>] {
        &self.decoder
    }

    fn msg_layout(&self) -> SubsystemLayout {
        SubsystemLayout::new([(A1, self.r1), (A2, self.r2)]).expect("distinct labels")
    }

    fn out_layout(&self) -> SubsystemLayout {
        SubsystemLayout::new([(B_OUT, self.r1), (C_OUT, self.r2)]).expect("distinct labels")
    }

    /// Choi matrix of the encoder on `(A1, A2, A', R)`.
    pub fn encoder_choi(&self) -> Result<HermitianOperator> {
        let out = SubsystemLayout::new([(IN, self.dims.a), (FORWARD, self.r_dim)])?;
        choi_of_kraus_map(&self.msg_layout(), &out, &self.encoder)
    }

    /// Choi matrix of the decoder on `(R, B, C, B', C')`.
    pub fn decoder_choi(&self) -> Result<HermitianOperator> {
        let input = SubsystemLayout::new([
            (FORWARD, self.r_dim),
            (BOB, self.dims.b),
            (CHARLIE, self.dims.c),
        ])?;
        choi_of_kraus_map(&input, &self.out_layout(), &self.decoder)
    }

    /// Kraus operators of the whole code `A1 A2 B C -> A' B' C'`.
    pub fn code_kraus(&self) -> Vec<Mat<c64>> {
        let (a, rd) = (self.dims.a, self.r_dim);
        let bc = self.dims.b * self.dims.c;
        let n_msg = self.r1 * self.r2;
        let mut ops = Vec::with_capacity(self.encoder.len() * self.decoder.len());
        for e in &self.encoder {
            for d in &self.decoder {
                ops.push(Mat::from_fn(a * n_msg, n_msg * bc, |row, col| {
                    let (ai, o) = (row / n_msg, row % n_msg);
                    let (alpha, beta) = (col / bc, col % bc);
                    let mut s = zero();
                    for r in 0..rd {
                        s += e[(ai * rd + r, alpha)] * d[(o, r * bc + beta)];
                    }
                    s
                }));
            }
        }
        ops
    }

    /// `Tr_R E(1/(r1 r2))`, the encoder's output on the maximally mixed
    /// message.
    pub fn encoder_average_input(&self) -> Result<HermitianOperator> {
        let (a, rd) = (self.dims.a, self.r_dim);
        let n_msg = (self.r1 * self.r2) as f64;
        let mut m = Mat::<c64>::zeros(a, a);
        for e in &self.encoder {
            let ee = e * e.adjoint();
            for i in 0..a {
                for j in 0..a {
                    for r in 0..rd {
                        m[(i, j)] += ee[(i * rd + r, j * rd + r)];
                    }
                }
            }
        }
        Ok(HermitianOperator::from_hermitian_part(SubsystemLayout::single(IN, a), m)?.scale(1.0 / n_msg))
    }
}

/// `Z = Tr_R[(E^{T_R} ⊗ 1)(1 ⊗ D)]` from the encoder and decoder Choi
/// matrices.
pub fn code_choi_from_pair(p: &EncoderDecoderPair) -> Result<CodeChoi> {
    let e = p.encoder_choi()?.ptranspose(&[FORWARD])?;
    let d = p.decoder_choi()?;
    let full = e.layout().concat(&d.layout().without(&[FORWARD])?)?;
    let prod = e.expand_to(&full)?.matrix() * d.expand_to(&full)?.matrix();
    let linked = HermitianOperator::from_hermitian_part(full, prod)?.ptrace(&[FORWARD])?;
    let lay = code_layout(p.r1, p.r2, &p.dims.layout())?;
    CodeChoi::new(linked.permute(&lay.label_refs())?, p.r1, p.r2)
}

/// `Z` as the Choi matrix of the composed Kraus operators of the code.
pub fn code_choi_from_kraus(p: &EncoderDecoderPair) -> Result<CodeChoi> {
    let lay = code_layout(p.r1, p.r2, &p.dims.layout())?;
    let input = lay.select(&[A1, A2, BOB, CHARLIE])?;
    let output = lay.select(&[IN, B_OUT, C_OUT])?;
    let z = choi_of_kraus_map(&input, &output, &p.code_kraus())?;
    CodeChoi::new(z, p.r1, p.r2)
}

fn check_channel(code: &CodeChoi, n: &BroadcastChannel) -> Result<()> {
    if code.dims() != n.dims() {
        return Err(QbcError::DimensionMismatch(format!(
            "code built for {:?}, channel has {:?}",
            code.dims(),
            n.dims()
        )));
    }
    Ok(())
}

/// `Tr[(phi^{A1B'} ⊗ phi^{A2C'}) Z N^T] / (r1 r2)`.
pub fn induced_fidelity(code: &CodeChoi, n: &BroadcastChannel) -> Result<f64> {
    check_channel(code, n)?;
    let w = target_pairs(code.r1, code.r2)?
        .tensor(&n.choi().transpose())?
        .permute(&code.z.layout().label_refs())?;
    Ok(code.z.inner(&w)? / (code.r1 * code.r2) as f64)
}

/// Entanglement fidelity of the composed channel `D ∘ (N ⊗ id_R) ∘ E`,
/// computed from Kraus operators of all three maps.
pub fn simulated_fidelity(p: &EncoderDecoderPair, n: &BroadcastChannel) -> Result<f64> {
    if p.dims != n.dims() {
        return Err(QbcError::DimensionMismatch(format!(
            "code built for {:?}, channel has {:?}",
            p.dims,
            n.dims()
        )));
    }
    let nk = kraus_from_choi(n)?;
    let (a, rd) = (p.dims.a, p.r_dim);
    let bc = p.dims.b * p.dims.c;
    let n_msg = p.r1 * p.r2;
    let mut ops = Vec::new();
    for e in &p.encoder {
        for k in nk.operators() {
            // (K ⊗ 1_R) E : message -> (B C) ⊗ R, index beta |R| + r.
            let ke = Mat::from_fn(bc * rd, n_msg, |row, alpha| {
                let (beta, r) = (row / rd, row % rd);
                let mut s = zero();
                for ai in 0..a {
                    s += k[(beta, ai)] * e[(ai * rd + r, alpha)];
                }
                s
            });
            for d in &p.decoder {
                ops.push(Mat::from_fn(n_msg, n_msg, |o, alpha| {
                    let mut s = zero();
                    for r in 0..rd {
                        for beta in 0..bc {
                            s += d[(o, r * bc + beta)] * ke[(beta * rd + r, alpha)];
                        }
                    }
                    s
                }));
            }
        }
    }
    let msg = p.msg_layout();
    let out = p.out_layout();
    let jm = choi_of_kraus_map(&msg, &out, &ops)?;
    let phi = target_pairs(p.r1, p.r2)?;
    Ok(jm.inner(&phi)? / n_msg as f64)
}

/// Residuals of the six no-signalling conditions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NsReport {
    /// `A ↛ BC`.
    pub a_to_bc: f64,
    /// `B ↛ AC`.
    pub b_to_ac: f64,
    /// `C ↛ AB`.
    pub c_to_ab: f64,
    /// `BC ↛ A`.
    pub bc_to_a: f64,
    /// `AB ↛ C`.
    pub ab_to_c: f64,
    /// `AC ↛ B`.
    pub ac_to_b: f64,
}

impl NsReport {
    /// Residuals in the order `A↛BC, B↛AC, C↛AB, BC↛A, AB↛C, AC↛B`.
    pub fn residuals(&self) -> [f64; 6] {
        [
            self.a_to_bc,
            self.b_to_ac,
            self.c_to_ab,
            self.bc_to_a,
            self.ab_to_c,
            self.ac_to_b,
        ]
    }

    /// Each condition at [`NS_TOL`].
    pub fn holds(&self) -> [bool; 6] {
        self.residuals().map(|r| r <= NS_TOL)
    }

    /// The three one-to-two conditions hold.
    pub fn one_to_two(&self) -> bool {
        self.holds()[..3].iter().all(|&b| b)
    }

    /// The three two-to-one conditions hold.
    pub fn two_to_one(&self) -> bool {
        self.holds()[3..].iter().all(|&b| b)
    }

    /// All six hold.
    pub fn all(&self) -> bool {
        self.holds().iter().all(|&b| b)
    }
}

/// Operator-norm residual of
/// `Tr_{outputs} Z = 1_{inputs}/|inputs| ⊗ Tr_{inputs outputs} Z`.
pub fn ns_residual(z: &HermitianOperator, inputs: &[&str], outputs: &[&str]) -> Result<f64> {
    let lhs = z.ptrace(outputs)?;
    let all: Vec<&str> = inputs.iter().chain(outputs).copied().collect();
    let rest = z.ptrace(&all)?;
    let din = z.layout().dim_of_all(inputs)? as f64;
    let rhs = rest.expand_to(lhs.layout())?.scale(1.0 / din);
    Ok(lhs.sub(&rhs)?.op_norm())
}

const NS_CONDITIONS: [(&[&str], &[&str]); 6] = [
    (&[A1, A2], &[IN]),
    (&[BOB], &[B_OUT]),
    (&[CHARLIE], &[C_OUT]),
    (&[BOB, CHARLIE], &[B_OUT, C_OUT]),
    (&[A1, A2, BOB], &[IN, B_OUT]),
    (&[A1, A2, CHARLIE], &[IN, C_OUT]),
];

/// Checks the six no-signalling conditions.
pub fn verify_ns(code: &CodeChoi) -> Result<NsReport> {
    let mut r = [0.0; 6];
    for (slot, (i, o)) in r.iter_mut().zip(NS_CONDITIONS) {
        *slot = ns_residual(&code.z, i, o)?;
    }
    Ok(NsReport {
        a_to_bc: r[0],
        b_to_ac: r[1],
        c_to_ab: r[2],
        bc_to_a: r[3],
        ab_to_c: r[4],
        ac_to_b: r[5],
    })
}

/// Replaces the part of `z` that lets `inputs` signal through `outputs`,
/// so that the corresponding one-to-two condition holds exactly.
pub fn remove_signalling(z: &HermitianOperator, inputs: &[&str], outputs: &[&str]) -> Result<HermitianOperator> {
    let lhs = z.ptrace(outputs)?;
    let all: Vec<&str> = inputs.iter().chain(outputs).copied().collect();
    let din = z.layout().dim_of_all(inputs)? as f64;
    let dout = z.layout().dim_of_all(outputs)? as f64;
    let rhs = z.ptrace(&all)?.expand_to(lhs.layout())?.scale(1.0 / din);
    let defect = lhs.sub(&rhs)?.expand_to(z.layout())?.scale(1.0 / dout);
    z.sub(&defect.permute(&z.layout().label_refs())?)
}

/// Applies [`remove_signalling`] for `A↛BC`, `B↛AC` and `C↛AB`.
pub fn project_one_to_two(z: &HermitianOperator) -> Result<HermitianOperator> {
    let mut z = z.clone();
    for (i, o) in &NS_CONDITIONS[..3] {
        z = remove_signalling(&z, i, o)?;
    }
    Ok(z)
}

/// `rho^{A'} = Tr_{A1A2BCB'C'} Z / (r1 r2 |B| |C|)`.
pub fn average_input(code: &CodeChoi) -> Result<HermitianOperator> {
    let d = code.dims();
    code.z
        .ptrace(&[A1, A2, BOB, CHARLIE, B_OUT, C_OUT])
        .map(|x| x.scale(1.0 / (code.r1 * code.r2 * d.b * d.c) as f64))
}

fn split_isometry(v: &Mat<c64>, env: usize) -> Vec<Mat<c64>> {
    let rows = v.nrows() / env;
    (0..env)
        .map(|e| Mat::from_fn(rows, v.ncols(), |r, c| v[(r * env + e, c)]))
        .collect()
}

/// Kraus operators of a random channel `din -> dout` from a Haar-random
/// Stinespring isometry. The environment has dimension `env`, raised to
/// `ceil(din / dout)` when that is needed for the isometry to exist.
pub fn random_kraus(rng: &mut Rng, din: usize, dout: usize, env: usize) -> Vec<Mat<c64>> {
    let env = env.max(din.div_ceil(dout));
    split_isometry(&random_isometry(rng, dout * env, din), env)
}

/// A random forward-assisted code: Haar-random isometric encoder into
/// `A' ⊗ R` and a random decoder with an environment of dimension at
/// least 2 (see [`random_kraus`]). Requires
/// `|A'| |R| >= r1 r2`.
pub fn random_pair(rng: &mut Rng, r1: usize, r2: usize, dims: Dims, r_dim: usize) -> Result<EncoderDecoderPair> {
    let n_msg = r1 * r2;
    if dims.a * r_dim < n_msg {
        return Err(QbcError::InvalidArgument(format!(
            "|A'| |R| = {} is too small for {n_msg} messages",
            dims.a * r_dim
        )));
    }
    let enc = vec![random_isometry(rng, dims.a * r_dim, n_msg)];
    let dec = random_kraus(rng, r_dim * dims.b * dims.c, n_msg, 2);
    EncoderDecoderPair::new(r1, r2, dims, r_dim, enc, dec)
}

/// A random unassisted code: a random encoding channel into `A'`
/// (`|R| = 1`) and independent local decoders for Bob and Charlie, each
/// with a qubit environment.
pub fn random_unassisted_pair(rng: &mut Rng, r1: usize, r2: usize, dims: Dims) -> Result<EncoderDecoderPair> {
    let enc = random_kraus(rng, r1 * r2, dims.a, 2);
    let kb = random_kraus(rng, dims.b, r1, 2);
    let kc = random_kraus(rng, dims.c, r2, 2);
    let mut dec = Vec::with_capacity(kb.len() * kc.len());
    for x in &kb {
        for y in &kc {
            dec.push(crate::tensor::kron(x, y));
        }
    }
    EncoderDecoderPair::new(r1, r2, dims, 1, enc, dec)
}

/// Identity encoder `A1 A2 -> A'` and identity decoder `B C -> B' C'`,
/// for `|A'| = r1 r2`, `|B| = r1`, `|C| = r2`.
pub fn identity_pair(r1: usize, r2: usize) -> Result<EncoderDecoderPair> {
    let n = r1 * r2;
    let dims = Dims { a: n, b: r1, c: r2 };
    EncoderDecoderPair::new(
        r1,
        r2,
        dims,
        1,
        vec![Mat::identity(n, n)],
        vec![Mat::identity(n, n)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::identity;
    use crate::tensor::epr_projector;

    #[test]
    fn identity_pair_gives_identity_choi() {
        let code = code_choi_from_pair(&identity_pair(2, 1).unwrap()).unwrap();
        let lay = code.z.layout().clone();
        let expect = epr_projector(A1, IN, 2)
            .unwrap()
            .tensor(&epr_projector(BOB, B_OUT, 2).unwrap())
            .unwrap()
            .tensor(&epr_projector(A2, "x", 1).unwrap())
            .unwrap()
            .tensor(&epr_projector(CHARLIE, C_OUT, 1).unwrap())
            .unwrap()
            .ptrace(&["x"])
            .unwrap()
            .permute(&lay.label_refs())
            .unwrap()
            .scale(4.0);
        assert!(code.z.sub(&expect).unwrap().max_abs_entry() < 1e-12);
        assert!(code.is_valid());
    }

    #[test]
    fn identity_code_on_identity_channel() {
        let code = code_choi_from_pair(&identity_pair(2, 1).unwrap()).unwrap();
        let f = induced_fidelity(&code, &identity(2).unwrap()).unwrap();
        assert!((f - 1.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn link_product_matches_composed_kraus() {
        let mut rng = Rng::seed(11);
        let dims = Dims { a: 2, b: 2, c: 2 };
        let p = random_pair(&mut rng, 2, 2, dims, 2).unwrap();
        let z1 = code_choi_from_pair(&p).unwrap();
        let z2 = code_choi_from_kraus(&p).unwrap();
        assert!(z1.z.sub(&z2.z).unwrap().max_abs_entry() < 1e-12);
    }

    #[test]
    fn unassisted_code_is_fully_no_signalling() {
        let mut rng = Rng::seed(2);
        let dims = Dims { a: 2, b: 2, c: 2 };
        let p = random_unassisted_pair(&mut rng, 2, 2, dims).unwrap();
        let r = verify_ns(&code_choi_from_pair(&p).unwrap()).unwrap();
        assert!(r.all(), "{r:?}");
    }
}
