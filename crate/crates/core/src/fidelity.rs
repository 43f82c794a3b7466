//! Channel fidelity of PPT-preserving and no-signalling codes.
//!
//! A code of size `(r1, r2)` is described by its twirled Choi matrix, which
//! is fixed by four operators `E1..E4` on `A' ⊗ B ⊗ C` and the average
//! input `rho` on `A'`. The causality condition
//! `E1 + (r2²-1) E2 + (r1²-1) E3 + (r1²-1)(r2²-1) E4 = rho ⊗ 1`
//! determines `E4`, so programs never carry it as a variable. When `r1 = 1`
//! (resp. `r2 = 1`) the projector `1 - phi` on `A1 B'` (resp. `A2 C'`)
//! vanishes, the blocks that sit on it disappear, and causality becomes an
//! equality between the remaining blocks.
//!
//! Four program forms are provided: the full program over the twirled
//! blocks ([`FidelityForm::Full`]), the single-operator no-signalling
//! program ([`FidelityForm::Reduced`]), the program after eliminating
//! `E2^{A'BC}` and `E3^{A'BC}` in favour of their marginals
//! ([`FidelityForm::Fm`]), and the single-operator upper bound
//! ([`FidelityForm::Relaxed`]).

use crate::channels::{BroadcastChannel, BOB, CHARLIE, IN};
use crate::error::{QbcError, Result};
use crate::sdp::{solve_with, ConicProgram, Expr, Solution, SolverOptions, VarId};
use crate::tensor::{epr_projector, HermitianOperator, SubsystemLayout};
use faer::Mat;
use faer::c64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Label of Alice's message register for Bob.
pub const A1: &str = "A1";
/// Label of Alice's message register for Charlie.
pub const A2: &str = "A2";
/// Label of Bob's decoded output.
pub const B_OUT: &str = "B'";
/// Label of Charlie's decoded output.
pub const C_OUT: &str = "C'";

/// Slack on the fidelity range `[0, 1]` of an optimal value.
pub const VALUE_TOL: f64 = 1e-6;

/// Class of codes over which the fidelity is optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeClass {
    /// No-signalling codes.
    #[serde(rename = "ns")]
    Ns,
    /// PPT-preserving codes.
    #[serde(rename = "ppt")]
    Ppt,
    /// Codes that are both.
    #[serde(rename = "ns-ppt")]
    NsPpt,
}

impl CodeClass {
    /// All classes.
    pub const ALL: [CodeClass; 3] = [CodeClass::Ns, CodeClass::Ppt, CodeClass::NsPpt];

    fn has_ns(self) -> bool {
        matches!(self, CodeClass::Ns | CodeClass::NsPpt)
    }

    fn has_ppt(self) -> bool {
        matches!(self, CodeClass::Ppt | CodeClass::NsPpt)
    }
}

impl fmt::Display for CodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodeClass::Ns => "ns",
            CodeClass::Ppt => "ppt",
            CodeClass::NsPpt => "ns-ppt",
        })
    }
}

impl FromStr for CodeClass {
    type Err = QbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ns" => Ok(CodeClass::Ns),
            "ppt" => Ok(CodeClass::Ppt),
            "ns-ppt" | "ns_ppt" | "ns&ppt" => Ok(CodeClass::NsPpt),
            _ => Err(QbcError::Parse(format!(
                "unknown code class `{s}` (expected ns, ppt or ns-ppt)"
            ))),
        }
    }
}

/// Which fidelity program to solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityForm {
    /// Program over the twirled blocks `E1, E2, E3, rho`.
    Full,
    /// Single-operator no-signalling program.
    Reduced,
    /// Program over `E1^{A'BC}`, `E2^{A'B}`, `E3^{A'C}` and `rho`.
    Fm,
    /// Single-operator upper bound on the NS ∩ PPT fidelity.
    Relaxed,
}

impl FidelityForm {
    /// All forms.
    pub const ALL: [FidelityForm; 4] = [
        FidelityForm::Full,
        FidelityForm::Reduced,
        FidelityForm::Fm,
        FidelityForm::Relaxed,
    ];
}

impl fmt::Display for FidelityForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FidelityForm::Full => "full",
            FidelityForm::Reduced => "reduced",
            FidelityForm::Fm => "fm",
            FidelityForm::Relaxed => "relaxed",
        })
    }
}

impl FromStr for FidelityForm {
    type Err = QbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(FidelityForm::Full),
            "reduced" => Ok(FidelityForm::Reduced),
            "fm" => Ok(FidelityForm::Fm),
            "relaxed" => Ok(FidelityForm::Relaxed),
            _ => Err(QbcError::Parse(format!(
                "unknown form `{s}` (expected full, reduced, fm or relaxed)"
            ))),
        }
    }
}

/// Blocks `E1, E2, E3` and the average input `rho` of a twirled code.
///
/// `E2` is absent when `r2 = 1` and `E3` is absent when `r1 = 1`.
#[derive(Clone, Debug)]
pub struct TwirledBlocks {
    /// `E1^{A'BC}`.
    pub e1: HermitianOperator,
    /// `E2^{A'BC}`.
    pub e2: Option<HermitianOperator>,
    /// `E3^{A'BC}`.
    pub e3: Option<HermitianOperator>,
    /// Average input `rho^{A'}`.
    pub rho: HermitianOperator,
    /// Size of Bob's message.
    pub r1: usize,
    /// Size of Charlie's message.
    pub r2: usize,
}

fn sq1(r: usize) -> f64 {
    (r * r) as f64 - 1.0
}

impl TwirledBlocks {
    fn layout(&self) -> &SubsystemLayout {
        self.e1.layout()
    }

    fn rho_one(&self) -> HermitianOperator {
        self.rho.expand_to(self.layout()).expect("rho lives on A'")
    }

    /// `E1 + (r2²-1) E2 + (r1²-1) E3`.
    pub fn causal_sum(&self) -> HermitianOperator {
        let mut s = self.e1.clone();
        if let Some(e2) = &self.e2 {
            s = s.add(&e2.scale(sq1(self.r2))).expect("same layout");
        }
        if let Some(e3) = &self.e3 {
            s = s.add(&e3.scale(sq1(self.r1))).expect("same layout");
        }
        s
    }

    /// `E4` reconstructed from causality; `None` when `r1 = 1` or `r2 = 1`.
    pub fn e4(&self) -> Option<HermitianOperator> {
        if self.r1 == 1 || self.r2 == 1 {
            return None;
        }
        let rest = self.rho_one().sub(&self.causal_sum()).expect("same layout");
        Some(rest.scale(1.0 / (sq1(self.r1) * sq1(self.r2))))
    }

    /// Smallest eigenvalue of `rho ⊗ 1 - E1 - (r2²-1) E2 - (r1²-1) E3`.
    pub fn causality_margin(&self) -> f64 {
        self.rho_one()
            .sub(&self.causal_sum())
            .expect("same layout")
            .min_eigenvalue()
    }

    /// `Tr E1 N^T`.
    pub fn fidelity(&self, n: &BroadcastChannel) -> f64 {
        self.e1
            .inner(&n.choi().transpose())
            .expect("blocks live on the channel layout")
    }

    /// The twirled Choi matrix on `(A1, A2, B, C, A', B', C')`.
    pub fn twirled_choi(&self) -> Result<HermitianOperator> {
        let zero = HermitianOperator::zeros(self.layout().clone());
        let e2 = self.e2.clone().unwrap_or_else(|| zero.clone());
        let e3 = self.e3.clone().unwrap_or_else(|| zero.clone());
        let e4 = self.e4().unwrap_or(zero);
        let target = code_layout(self.r1, self.r2, self.layout())?;
        let proj = twirl_projectors(self.r1, self.r2)?;
        let mut acc = Mat::<c64>::zeros(target.dim(), target.dim());
        for (pi, ei) in proj.iter().zip([&self.e1, &e2, &e3, &e4]) {
            let Some(pi) = pi else { continue };
            let term = pi.tensor(ei)?.permute(&target.label_refs())?;
            acc += term.matrix();
        }
        let scale = (self.r1 * self.r2) as f64;
        Ok(HermitianOperator::from_hermitian_part(target, acc)?.scale(scale))
    }
}

/// Layout `(A1, A2, B, C, A', B', C')` of a code Choi matrix for a channel
/// with layout `(A', B, C)`.
pub fn code_layout(r1: usize, r2: usize, channel: &SubsystemLayout) -> Result<SubsystemLayout> {
    SubsystemLayout::new([
        (A1, r1),
        (A2, r2),
        (BOB, channel.dim_of(BOB)?),
        (CHARLIE, channel.dim_of(CHARLIE)?),
        (IN, channel.dim_of(IN)?),
        (B_OUT, r1),
        (C_OUT, r2),
    ])
}

/// The projectors `phi⊗phi, phi⊗(1-phi), (1-phi)⊗phi, (1-phi)⊗(1-phi)` on
/// `(A1, B', A2, C')`, or `None` where a factor vanishes.
fn twirl_projectors(r1: usize, r2: usize) -> Result<[Option<HermitianOperator>; 4]> {
    let p1 = epr_projector(A1, B_OUT, r1)?;
    let p2 = epr_projector(A2, C_OUT, r2)?;
    let q1 = HermitianOperator::identity(p1.layout().clone()).sub(&p1)?;
    let q2 = HermitianOperator::identity(p2.layout().clone()).sub(&p2)?;
    let pair = |a: &HermitianOperator, b: &HermitianOperator| a.tensor(b).map(Some);
    Ok([
        pair(&p1, &p2)?,
        if r2 > 1 { pair(&p1, &q2)? } else { None },
        if r1 > 1 { pair(&q1, &p2)? } else { None },
        if r1 > 1 && r2 > 1 { pair(&q1, &q2)? } else { None },
    ])
}

fn check_code_layout(z: &HermitianOperator, r1: usize, r2: usize) -> Result<SubsystemLayout> {
    let lay = z.layout();
    for (lab, d) in [(A1, r1), (A2, r2), (B_OUT, r1), (C_OUT, r2)] {
        if lay.dim_of(lab)? != d {
            return Err(QbcError::DimensionMismatch(format!(
                "`{lab}` has dimension {} but the code size requires {d}",
                lay.dim_of(lab)?
            )));
        }
    }
    let inner = SubsystemLayout::new([
        (IN, lay.dim_of(IN)?),
        (BOB, lay.dim_of(BOB)?),
        (CHARLIE, lay.dim_of(CHARLIE)?),
    ])?;
    if lay.len() != 7 {
        return Err(QbcError::DimensionMismatch(format!(
            "code Choi matrix must have 7 factors, found {}",
            lay.len()
        )));
    }
    Ok(inner)
}

/// `Tr_{A1 A2 B' C'}[Pi_i Z Pi_i] / Tr Pi_i` for each projector present.
fn block_averages(z: &HermitianOperator, r1: usize, r2: usize) -> Result<[Option<HermitianOperator>; 4]> {
    let inner = check_code_layout(z, r1, r2)?;
    let proj = twirl_projectors(r1, r2)?;
    let mut out: [Option<HermitianOperator>; 4] = [None, None, None, None];
    for (i, pi) in proj.iter().enumerate() {
        let Some(pi) = pi else { continue };
        let big = pi.expand_to(z.layout())?;
        let sandwiched = z.conjugate_by(big.matrix())?;
        let avg = sandwiched
            .ptrace(&[A1, A2, B_OUT, C_OUT])?
            .permute(&inner.label_refs())?
            .scale(1.0 / pi.trace());
        out[i] = Some(avg);
    }
    Ok(out)
}

/// Projection of `z` onto the span of the four twirl blocks, that is
/// `sum_i (Tr_{A1A2B'C'}[Z Pi_i] / Tr Pi_i) ⊗ Pi_i`.
pub fn twirl_projection(z: &HermitianOperator, r1: usize, r2: usize) -> Result<HermitianOperator> {
    let blocks = block_averages(z, r1, r2)?;
    let proj = twirl_projectors(r1, r2)?;
    let n = z.side();
    let mut acc = Mat::<c64>::zeros(n, n);
    for (pi, bi) in proj.iter().zip(&blocks) {
        if let (Some(pi), Some(bi)) = (pi, bi) {
            let term = pi.tensor(bi)?.permute(&z.layout().label_refs())?;
            acc += term.matrix();
        }
    }
    HermitianOperator::from_hermitian_part(z.layout().clone(), acc)
}

/// Twirls a code Choi matrix on `(A1, A2, B, C, A', B', C')` and returns
/// its blocks, with `rho` given by the average-input formula.
pub fn twirl_code_choi(z: &HermitianOperator, r1: usize, r2: usize) -> Result<TwirledBlocks> {
    let avg = block_averages(z, r1, r2)?;
    let scale = 1.0 / (r1 * r2) as f64;
    let [b1, b2, b3, b4] = avg.map(|b| b.map(|x| x.scale(scale)));
    let e1 = b1.expect("phi ⊗ phi is always present");
    let lay = e1.layout().clone();
    let (db, dc) = (lay.dim_of(BOB)?, lay.dim_of(CHARLIE)?);
    let mut total = e1.clone();
    for (b, k) in [(&b2, sq1(r2)), (&b3, sq1(r1)), (&b4, sq1(r1) * sq1(r2))] {
        if let Some(b) = b {
            total = total.add(&b.scale(k))?;
        }
    }
    let rho = total.ptrace(&[BOB, CHARLIE])?.scale(1.0 / (db * dc) as f64);
    Ok(TwirledBlocks {
        e1,
        e2: b2,
        e3: b3,
        rho,
        r1,
        r2,
    })
}

/// Solved fidelity program.
#[derive(Clone, Debug)]
pub struct FidelityResult {
    /// Optimal fidelity.
    pub value: f64,
    /// Code class.
    pub class: CodeClass,
    /// Program form.
    pub form: FidelityForm,
    /// Optimal blocks; for the reduced, relaxed and FM forms only `e1`
    /// (the operator `Lambda` or `E1`) and `rho` are filled in.
    pub blocks: TwirledBlocks,
    /// Raw solver output.
    pub solution: Solution,
}

fn check_sizes(r1: usize, r2: usize) -> Result<()> {
    if r1 < 1 || r2 < 1 {
        return Err(QbcError::InvalidArgument(format!(
            "code sizes must be at least 1, got ({r1}, {r2})"
        )));
    }
    Ok(())
}

struct Handles {
    e1: VarId,
    e2: Option<VarId>,
    e3: Option<VarId>,
    rho: VarId,
}

fn objective(p: &ConicProgram, e1: VarId, n: &BroadcastChannel) -> Result<Expr> {
    p.var(e1).inner(&n.choi().transpose())
}

/// `X^{A'C} ⊗ 1^B / |B|` expanded back to `(A', B, C)`.
fn flat_on(x: &Expr, label: &str, lay: &SubsystemLayout) -> Result<Expr> {
    let d = lay.dim_of(label)? as f64;
    Ok(x.ptrace(&[label])?.expand_to(lay)?.scale(1.0 / d))
}

/// The full program over the twirled blocks.
pub fn full_program(n: &BroadcastChannel, r1: usize, r2: usize, class: CodeClass) -> Result<ConicProgram> {
    Ok(build_full(n, r1, r2, class)?.0)
}

fn build_full(
    n: &BroadcastChannel,
    r1: usize,
    r2: usize,
    class: CodeClass,
) -> Result<(ConicProgram, Handles)> {
    check_sizes(r1, r2)?;
    let lay = n.choi().layout().clone();
    let mut p = ConicProgram::new(&format!("fidelity-full-{class}({r1},{r2})"));
    let e1 = p.psd_variable("E1", lay.clone());
    let e2 = (r2 > 1).then(|| p.psd_variable("E2", lay.clone()));
    let e3 = (r1 > 1).then(|| p.psd_variable("E3", lay.clone()));
    let rho = p.psd_variable("rho", SubsystemLayout::single(IN, n.dims().a));

    let zero = Expr::zero(lay.clone());
    let ex = |v: Option<VarId>| v.map(|v| p.var(v)).unwrap_or_else(|| zero.clone());
    let (x1, x2, x3) = (p.var(e1), ex(e2), ex(e3));
    let rho1 = p.var(rho).expand_to(&lay)?;
    let (s1, s2) = (sq1(r1), sq1(r2));
    let (f1, f2) = (r1 as f64, r2 as f64);
    let sum = x1.clone() + s2 * x2.clone() + s1 * x3.clone();
    let both = r1 > 1 && r2 > 1;
    // E4 scaled by (r1²-1)(r2²-1); only meaningful when both sizes exceed one.
    let e4s = rho1.clone() - sum.clone();
    if both {
        p.add_psd("E4 >= 0", e4s.clone())?;
    } else {
        p.add_eq("causality", e4s.clone())?;
    }
    p.add_eq("Tr rho = 1", p.var(rho).trace() - Expr::scalar(1.0))?;
    let e4 = if both {
        e4s.scale(1.0 / (s1 * s2))
    } else {
        zero.clone()
    };

    if class.has_ns() {
        let t = 1.0 / (f1 * f1 * f2 * f2);
        let bc_id = |x: &Expr| -> Result<Expr> { Ok(x.ptrace(&[IN])? - Expr::identity(x.ptrace(&[IN])?.layout().clone(), t)) };
        p.add_eq("E1^BC", bc_id(&x1)?)?;
        if r2 > 1 {
            p.add_eq("E2^BC", bc_id(&x2)?)?;
        }
        if r1 > 1 {
            p.add_eq("E3^BC", bc_id(&x3)?)?;
        }
        if lay.dim_of(BOB)? > 1 {
            let a = x1.clone() + s1 * x3.clone();
            p.add_eq("B no-signal (phi)", a.clone() - flat_on(&a, BOB, &lay)?)?;
            if r2 > 1 {
                let b = x2.clone() + s1 * e4.clone();
                p.add_eq("B no-signal (1-phi)", b.clone() - flat_on(&b, BOB, &lay)?)?;
            }
        }
        if lay.dim_of(CHARLIE)? > 1 {
            let a = x1.clone() + s2 * x2.clone();
            p.add_eq("C no-signal (phi)", a.clone() - flat_on(&a, CHARLIE, &lay)?)?;
            if r1 > 1 {
                let b = x3.clone() + s2 * e4.clone();
                p.add_eq("C no-signal (1-phi)", b.clone() - flat_on(&b, CHARLIE, &lay)?)?;
            }
        }
    }

    if class.has_ppt() {
        let combo = |c: [f64; 4]| {
            c[0] * x1.clone() + c[1] * x2.clone() + c[2] * x3.clone() + c[3] * e4.clone()
        };
        // Cut between Alice and the receivers: sym/antisym blocks on both pairs.
        let a_blocks = [
            ("PPT_A SS", true, [1.0, f2 - 1.0, f1 - 1.0, (f1 - 1.0) * (f2 - 1.0)]),
            ("PPT_A SA", r2 > 1, [-1.0, f2 + 1.0, -(f1 - 1.0), (f1 - 1.0) * (f2 + 1.0)]),
            ("PPT_A AS", r1 > 1, [-1.0, -(f2 - 1.0), f1 + 1.0, (f1 + 1.0) * (f2 - 1.0)]),
            ("PPT_A AA", both, [1.0, -(f2 + 1.0), -(f1 + 1.0), (f1 + 1.0) * (f2 + 1.0)]),
        ];
        for (name, keep, c) in a_blocks {
            if keep {
                p.add_psd(name, combo(c).ptranspose(&[BOB, CHARLIE])?)?;
            }
        }
        // Cut around Bob: sym/antisym on A1 B', phi/(1-phi) on A2 C'.
        let b_blocks = [
            ("PPT_B S phi", true, [1.0, 0.0, f1 - 1.0, 0.0]),
            ("PPT_B A phi", r1 > 1, [-1.0, 0.0, f1 + 1.0, 0.0]),
            ("PPT_B S 1-phi", r2 > 1, [0.0, 1.0, 0.0, f1 - 1.0]),
            ("PPT_B A 1-phi", both, [0.0, -1.0, 0.0, f1 + 1.0]),
        ];
        for (name, keep, c) in b_blocks {
            if keep {
                p.add_psd(name, combo(c).ptranspose(&[BOB])?)?;
            }
        }
        // Cut around Charlie: phi/(1-phi) on A1 B', sym/antisym on A2 C'.
        let c_blocks = [
            ("PPT_C phi S", true, [1.0, f2 - 1.0, 0.0, 0.0]),
            ("PPT_C phi A", r2 > 1, [-1.0, f2 + 1.0, 0.0, 0.0]),
            ("PPT_C 1-phi S", r1 > 1, [0.0, 0.0, 1.0, f2 - 1.0]),
            ("PPT_C 1-phi A", both, [0.0, 0.0, -1.0, f2 + 1.0]),
        ];
        for (name, keep, c) in c_blocks {
            if keep {
                p.add_psd(name, combo(c).ptranspose(&[CHARLIE])?)?;
            }
        }
    }

    p.maximize(objective(&p, e1, n)?)?;
    Ok((p, Handles { e1, e2, e3, rho }))
}

/// The single-operator no-signalling program.
pub fn reduced_program(n: &BroadcastChannel, r1: usize, r2: usize) -> Result<ConicProgram> {
    Ok(build_single(n, r1, r2, false)?.0)
}

/// The single-operator relaxation of the NS ∩ PPT program.
pub fn relaxed_program(n: &BroadcastChannel, r1: usize, r2: usize) -> Result<ConicProgram> {
    Ok(build_single(n, r1, r2, true)?.0)
}

fn build_single(
    n: &BroadcastChannel,
    r1: usize,
    r2: usize,
    relaxed: bool,
) -> Result<(ConicProgram, Handles)> {
    check_sizes(r1, r2)?;
    let lay = n.choi().layout().clone();
    let tag = if relaxed { "relaxed" } else { "reduced" };
    let mut p = ConicProgram::new(&format!("fidelity-{tag}({r1},{r2})"));
    let lam = p.psd_variable("Lambda", lay.clone());
    let rho = p.psd_variable("rho", SubsystemLayout::single(IN, n.dims().a));
    let rho1 = p.var(rho).expand_to(&lay)?;
    let m = 1.0 / (r1 * r2) as f64;
    p.add_le("Lambda <= rho ⊗ 1", p.var(lam), rho1.clone())?;
    let bc = p.var(lam).ptrace(&[IN])?;
    let id = Expr::identity(bc.layout().clone(), m * m);
    p.add_eq("Lambda^BC", bc - id)?;
    p.add_eq("Tr rho = 1", p.var(rho).trace() - Expr::scalar(1.0))?;
    if relaxed {
        let x = p.var(lam);
        p.add_abs_le("|Lambda^T_BC|", x.ptranspose(&[BOB, CHARLIE])?, m * rho1.clone())?;
        p.add_abs_le("|Lambda^T_B|", x.ptranspose(&[BOB])?, rho1.clone())?;
        p.add_abs_le("|Lambda^T_C|", x.ptranspose(&[CHARLIE])?, rho1)?;
    }
    p.maximize(objective(&p, lam, n)?)?;
    Ok((
        p,
        Handles {
            e1: lam,
            e2: None,
            e3: None,
            rho,
        },
    ))
}

/// The program over `E1^{A'BC}`, `E2^{A'B}`, `E3^{A'C}` and `rho` for
/// NS ∩ PPT codes.
pub fn fm_program(n: &BroadcastChannel, r1: usize, r2: usize) -> Result<ConicProgram> {
    Ok(build_fm(n, r1, r2)?.0)
}

fn build_fm(n: &BroadcastChannel, r1: usize, r2: usize) -> Result<(ConicProgram, Handles)> {
    check_sizes(r1, r2)?;
    let lay = n.choi().layout().clone();
    let (db, dc) = (lay.dim_of(BOB)?, lay.dim_of(CHARLIE)?);
    let lay_ab = lay.select(&[IN, BOB])?;
    let lay_ac = lay.select(&[IN, CHARLIE])?;
    let mut p = ConicProgram::new(&format!("fidelity-fm({r1},{r2})"));
    let e1 = p.psd_variable("E1", lay.clone());
    let e2 = p.hermitian("E2^A'B", lay_ab);
    let e3 = p.hermitian("E3^A'C", lay_ac);
    let rho = p.psd_variable("rho", SubsystemLayout::single(IN, n.dims().a));
    let (s1, s2) = (sq1(r1), sq1(r2));
    let (f1, f2) = (r1 as f64, r2 as f64);
    let t = 1.0 / (f1 * f1 * f2 * f2);

    let x1 = p.var(e1);
    let rho1 = p.var(rho).expand_to(&lay)?;
    // X_B = (E1^{A'C} + (r1²-1) E3^{A'C}) ⊗ 1^B/|B|, X_C likewise on C.
    let xb = (x1.ptrace(&[BOB])? + s1 * p.var(e3)).expand_to(&lay)?.scale(1.0 / db as f64);
    let xc = (x1.ptrace(&[CHARLIE])? + s2 * p.var(e2)).expand_to(&lay)?.scale(1.0 / dc as f64);

    p.add_le("E1 <= X_B", x1.clone(), xb.clone())?;
    p.add_le("E1 <= X_C", x1.clone(), xc.clone())?;
    p.add_le("X_B + X_C <= rho ⊗ 1 + E1", xb.clone() + xc.clone(), rho1.clone() + x1.clone())?;
    let bc = x1.ptrace(&[IN])?;
    let bc_lay = bc.layout().clone();
    p.add_eq("E1^BC", bc - Expr::identity(bc_lay, t))?;
    let e3c = p.var(e3).ptrace(&[IN])?;
    let e3c_lay = e3c.layout().clone();
    p.add_eq("E3^C", e3c - Expr::identity(e3c_lay, t * db as f64))?;
    let e2b = p.var(e2).ptrace(&[IN])?;
    let e2b_lay = e2b.layout().clone();
    p.add_eq("E2^B", e2b - Expr::identity(e2b_lay, t * dc as f64))?;
    p.add_eq("Tr rho = 1", p.var(rho).trace() - Expr::scalar(1.0))?;

    let e1_bc = x1.ptranspose(&[BOB, CHARLIE])?;
    let xc_b = xc.ptranspose(&[BOB])?;
    let xb_c = xb.ptranspose(&[CHARLIE])?;
    let m = 1.0 / (f1 * f2);
    p.add_abs_le(
        "PPT_A (+)",
        (1.0 / f2) * xc_b.clone() + (1.0 / f1) * xb_c.clone(),
        m * rho1.clone() + e1_bc.clone(),
    )?;
    p.add_abs_le(
        "PPT_A (-)",
        (1.0 / f2) * xc_b.clone() - (1.0 / f1) * xb_c.clone(),
        m * rho1.clone() - e1_bc,
    )?;
    p.add_abs_le("PPT_B (phi)", x1.ptranspose(&[BOB])?, (1.0 / f1) * xb.clone())?;
    p.add_abs_le(
        "PPT_B (1-phi)",
        f1 * (xc_b - x1.ptranspose(&[BOB])?),
        rho1.clone() - xb,
    )?;
    p.add_abs_le("PPT_C (phi)", x1.ptranspose(&[CHARLIE])?, (1.0 / f2) * xc.clone())?;
    p.add_abs_le(
        "PPT_C (1-phi)",
        f2 * (xb_c - x1.ptranspose(&[CHARLIE])?),
        rho1 - xc,
    )?;
    p.maximize(objective(&p, e1, n)?)?;
    Ok((
        p,
        Handles {
            e1,
            e2: None,
            e3: None,
            rho,
        },
    ))
}

fn finish(
    p: &ConicProgram,
    h: &Handles,
    class: CodeClass,
    form: FidelityForm,
    r1: usize,
    r2: usize,
    opts: &SolverOptions,
) -> Result<FidelityResult> {
    let solution = solve_with(p, opts);
    let value = solution
        .optimal_value()
        .map_err(|e| QbcError::Solver(format!("{}: {e}", p.name())))?;
    if !(-VALUE_TOL..=1.0 + VALUE_TOL).contains(&value) {
        return Err(QbcError::InvariantViolated(format!(
            "{}: fidelity {value} outside [0, 1]",
            p.name()
        )));
    }
    let blocks = TwirledBlocks {
        e1: solution.value(h.e1).clone(),
        e2: h.e2.map(|v| solution.value(v).clone()),
        e3: h.e3.map(|v| solution.value(v).clone()),
        rho: solution.value(h.rho).clone(),
        r1,
        r2,
    };
    Ok(FidelityResult {
        value,
        class,
        form,
        blocks,
        solution,
    })
}

/// Optimal fidelity of codes of `class` from the full program.
pub fn solve_fidelity_full(
    n: &BroadcastChannel,
    r1: usize,
    r2: usize,
    class: CodeClass,
) -> Result<FidelityResult> {
    solve_fidelity_full_with(n, r1, r2, class, &SolverOptions::default())
}

/// [`solve_fidelity_full`] with explicit solver options.
pub fn solve_fidelity_full_with(
    n: &BroadcastChannel,
    r1: usize,
    r2: usize,
    class: CodeClass,
    opts: &SolverOptions,
) -> Result<FidelityResult> {
    let (p, h) = build_full(n, r1, r2, class)?;
    finish(&p, &h, class, FidelityForm::Full, r1, r2, opts)
}

/// Optimal no-signalling fidelity from the single-operator program.
pub fn solve_fidelity_ns_reduced(n: &BroadcastChannel, r1: usize, r2: usize) -> Result<FidelityResult> {
    let (p, h) = build_single(n, r1, r2, false)?;
    finish(&p, &h, CodeClass::Ns, FidelityForm::Reduced, r1, r2, &SolverOptions::default())
}

/// Optimal NS ∩ PPT fidelity from the program over block marginals.
pub fn solve_fidelity_fm(
    n: &BroadcastChannel,
    r1: usize,
    r2: usize,
    class: CodeClass,
) -> Result<FidelityResult> {
    if class != CodeClass::NsPpt {
        return Err(QbcError::InvalidArgument(format!(
            "the FM form exists only for ns-ppt codes, not {class}"
        )));
    }
    let (p, h) = build_fm(n, r1, r2)?;
    finish(&p, &h, class, FidelityForm::Fm, r1, r2, &SolverOptions::default())
}

/// Upper bound on the NS ∩ PPT fidelity from the single-operator
/// relaxation.
pub fn solve_fidelity_relaxed(n: &BroadcastChannel, r1: usize, r2: usize) -> Result<FidelityResult> {
    let (p, h) = build_single(n, r1, r2, true)?;
    finish(&p, &h, CodeClass::NsPpt, FidelityForm::Relaxed, r1, r2, &SolverOptions::default())
}

/// Dispatches on `form`; `class` is ignored by the reduced (always NS) and
/// relaxed (always NS ∩ PPT) forms and must be NS ∩ PPT for the FM form.
pub fn solve_fidelity(
    n: &BroadcastChannel,
    r1: usize,
    r2: usize,
    class: CodeClass,
    form: FidelityForm,
) -> Result<FidelityResult> {
    match form {
        FidelityForm::Full => solve_fidelity_full(n, r1, r2, class),
        FidelityForm::Reduced => solve_fidelity_ns_reduced(n, r1, r2),
        FidelityForm::Fm => solve_fidelity_fm(n, r1, r2, class),
        FidelityForm::Relaxed => solve_fidelity_relaxed(n, r1, r2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{amplitude_damping_env, identity, random_qubit_broadcast, replacer};
    use crate::random::{random_density, Rng};

    #[test]
    fn identity_channel_reaches_one() {
        let n = identity(2).unwrap();
        for class in CodeClass::ALL {
            let f = solve_fidelity_full(&n, 2, 1, class).unwrap();
            assert!((f.value - 1.0).abs() < 1e-6, "{class}: {}", f.value);
        }
        assert!((solve_fidelity_ns_reduced(&n, 2, 1).unwrap().value - 1.0).abs() < 1e-6);
        assert!((solve_fidelity_fm(&n, 2, 1, CodeClass::NsPpt).unwrap().value - 1.0).abs() < 1e-6);
        assert!((solve_fidelity_relaxed(&n, 2, 1).unwrap().value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn replacer_ns_fidelity_is_inverse_square_size() {
        let n = replacer(2, 2, 2).unwrap();
        for (r1, r2) in [(2, 1), (1, 2), (2, 2)] {
            let f = solve_fidelity_full(&n, r1, r2, CodeClass::Ns).unwrap();
            let want = 1.0 / ((r1 * r1 * r2 * r2) as f64);
            assert!((f.value - want).abs() < 1e-6, "({r1},{r2}) {}", f.value);
            let g = solve_fidelity_ns_reduced(&n, r1, r2).unwrap();
            assert!((g.value - want).abs() < 1e-6);
        }
    }

    #[test]
    fn objective_matches_blocks() {
        let n = amplitude_damping_env(0.3).unwrap();
        for class in CodeClass::ALL {
            let f = solve_fidelity_full(&n, 2, 2, class).unwrap();
            assert!((f.blocks.fidelity(&n) - f.value).abs() < 1e-8);
            assert!(f.blocks.causality_margin() > -1e-7);
        }
    }

    #[test]
    fn intersection_is_below_each_class() {
        let n = amplitude_damping_env(0.3).unwrap();
        let ns = solve_fidelity_full(&n, 2, 1, CodeClass::Ns).unwrap().value;
        let ppt = solve_fidelity_full(&n, 2, 1, CodeClass::Ppt).unwrap().value;
        let both = solve_fidelity_full(&n, 2, 1, CodeClass::NsPpt).unwrap().value;
        assert!(both <= ns + 1e-6 && both <= ppt + 1e-6, "{both} {ns} {ppt}");
    }

    #[test]
    fn reduced_and_fm_forms_agree_with_full() {
        let mut rng = Rng::seed(31);
        for _ in 0..3 {
            let n = random_qubit_broadcast(&mut rng);
            let full_ns = solve_fidelity_full(&n, 2, 2, CodeClass::Ns).unwrap().value;
            let red = solve_fidelity_ns_reduced(&n, 2, 2).unwrap().value;
            assert!((full_ns - red).abs() < 1e-6, "{full_ns} {red}");
            for (r1, r2) in [(2, 2), (2, 1), (1, 2)] {
                let full = solve_fidelity_full(&n, r1, r2, CodeClass::NsPpt).unwrap().value;
                let fm = solve_fidelity_fm(&n, r1, r2, CodeClass::NsPpt).unwrap().value;
                let rel = solve_fidelity_relaxed(&n, r1, r2).unwrap().value;
                assert!((full - fm).abs() < 1e-6, "({r1},{r2}) {full} {fm}");
                assert!(rel >= full - 1e-6);
            }
        }
    }

    #[test]
    fn twirl_is_idempotent_and_rebuilds_from_blocks() {
        let mut rng = Rng::seed(32);
        let chan = SubsystemLayout::new([(IN, 2), (BOB, 2), (CHARLIE, 1)]).unwrap();
        let lay = code_layout(2, 2, &chan).unwrap();
        let z = random_density(&mut rng, lay.clone());
        let t1 = twirl_projection(&z, 2, 2).unwrap();
        let t2 = twirl_projection(&t1, 2, 2).unwrap();
        assert!(crate::tensor::max_abs(&(t1.matrix() - t2.matrix())) < 1e-12);
        let blocks = twirl_code_choi(&z, 2, 2).unwrap();
        // Without causality the rebuilt E4 differs, so compare only the
        // three stored blocks through a re-twirl of the rebuild.
        let back = twirl_code_choi(&blocks.twirled_choi().unwrap(), 2, 2).unwrap();
        for (a, b) in [(&blocks.e1, &back.e1)] {
            assert!(crate::tensor::max_abs(&(a.matrix() - b.matrix())) < 1e-12);
        }
    }
}
