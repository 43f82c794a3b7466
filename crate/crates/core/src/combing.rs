//! Entanglement combing with PPT-preserving operations.
//!
//! A combing operation `Y` takes a tripartite state on `A' ⊗ B ⊗ C` to
//! `A1 ⊗ A2 ⊗ B' ⊗ C'` and is judged by its overlap with
//! `phi^{A1B'} ⊗ phi^{A2C'}`. The optimum over operations whose Choi matrix
//! is PPT across each of the three parties is an SDP over that Choi matrix.

use crate::channels::{apply_channel, BroadcastChannel, BOB, CHARLIE, IN};
use crate::error::{QbcError, Result};
use crate::fidelity::{solve_fidelity_full, CodeClass, A1, A2, B_OUT, C_OUT};
use crate::sdp::{solve, ConicProgram, Expr, Solution, VarId};
use crate::tensor::{epr_projector, max_entangled_on, HermitianOperator, SubsystemLayout};
use faer::Mat;
use serde::{Deserialize, Serialize};

/// Largest side of the combing Choi matrix accepted by
/// [`ppt_combing_fidelity`].
pub const COMBING_BUDGET: usize = 128;
/// Tolerance of the CPTP and PPT checks on a returned combing Choi matrix.
pub const COMBING_CHECK_TOL: f64 = 1e-7;
/// Slack of the code versus combing comparison.
pub const COMBING_COMPARE_TOL: f64 = 1e-6;

/// Outcome of [`ppt_combing_fidelity`].
#[derive(Clone, Debug)]
pub struct CombingResult {
    /// Optimal combing fidelity.
    pub fidelity: f64,
    /// Size of Bob's target pair.
    pub r1: usize,
    /// Size of Charlie's target pair.
    pub r2: usize,
    /// Choi matrix of the optimal operation on `(A', B, C, A1, A2, B', C')`.
    pub choi: HermitianOperator,
    /// Solver output.
    pub solution: Solution,
}

/// CPTP and PPT diagnostics of a combing Choi matrix.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CombingValidation {
    /// Smallest eigenvalue of the Choi matrix.
    pub min_eigenvalue: f64,
    /// `|Tr_out J - 1|` in operator norm.
    pub tp_deviation: f64,
    /// Smallest eigenvalues of the partial transposes over `A'A1A2`,
    /// `BB'` and `CC'`.
    pub ppt_min_eigenvalues: [f64; 3],
}

impl CombingValidation {
    /// All checks within [`COMBING_CHECK_TOL`].
    pub fn is_valid(&self) -> bool {
        self.min_eigenvalue >= -COMBING_CHECK_TOL
            && self.tp_deviation <= COMBING_CHECK_TOL
            && self.ppt_min_eigenvalues.iter().all(|&e| e >= -COMBING_CHECK_TOL)
    }
}

const CUTS: [[&str; 3]; 3] = [[IN, A1, A2], [BOB, B_OUT, ""], [CHARLIE, C_OUT, ""]];

fn cut(i: usize) -> Vec<&'static str> {
    CUTS[i].iter().copied().filter(|l| !l.is_empty()).collect()
}

impl CombingResult {
    /// Checks the returned Choi matrix.
    pub fn validate(&self) -> Result<CombingValidation> {
        validate_combing_choi(&self.choi)
    }
}

/// CPTP and PPT diagnostics of a Choi matrix on `(A', B, C, A1, A2, B', C')`.
pub fn validate_combing_choi(j: &HermitianOperator) -> Result<CombingValidation> {
    let marg = j.ptrace(&[A1, A2, B_OUT, C_OUT])?;
    let eye = HermitianOperator::identity(marg.layout().clone());
    let mut ppt = [0.0; 3];
    for (i, e) in ppt.iter_mut().enumerate() {
        *e = j.ptranspose(&cut(i))?.min_eigenvalue();
    }
    Ok(CombingValidation {
        min_eigenvalue: j.min_eigenvalue(),
        tp_deviation: marg.sub(&eye)?.op_norm(),
        ppt_min_eigenvalues: ppt,
    })
}

fn input_state(rho: &HermitianOperator) -> Result<HermitianOperator> {
    if rho.layout().len() != 3 {
        return Err(QbcError::InvalidArgument(format!(
            "combing input must have three factors, got {}",
            rho.layout().len()
        )));
    }
    let d = rho.layout().dims();
    let lay = SubsystemLayout::new([(IN, d[0]), (BOB, d[1]), (CHARLIE, d[2])])?;
    let rho = rho.regroup(lay)?;
    if (rho.trace() - 1.0).abs() > 1e-9 || rho.min_eigenvalue() < -1e-9 {
        return Err(QbcError::InvalidArgument(format!(
            "combing input is not a state (trace {}, min eigenvalue {})",
            rho.trace(),
            rho.min_eigenvalue()
        )));
    }
    Ok(rho)
}

/// `phi^{A1B'} ⊗ phi^{A2C'}` on `(A1, A2, B', C')`.
pub fn target_pairs(r1: usize, r2: usize) -> Result<HermitianOperator> {
    epr_projector(A1, B_OUT, r1)?
        .tensor(&epr_projector(A2, C_OUT, r2)?)?
        .permute(&[A1, A2, B_OUT, C_OUT])
}

/// The combing program for the state `rho` on `A' ⊗ B ⊗ C`.
pub fn combing_program(rho: &HermitianOperator, r1: usize, r2: usize) -> Result<ConicProgram> {
    Ok(build_combing(rho, r1, r2)?.0)
}

fn build_combing(rho: &HermitianOperator, r1: usize, r2: usize) -> Result<(ConicProgram, VarId)> {
    if r1 < 1 || r2 < 1 {
        return Err(QbcError::InvalidArgument("pair sizes must be at least 1".into()));
    }
    let rho = input_state(rho)?;
    let side = rho.side() * (r1 * r2).pow(2);
    if side > COMBING_BUDGET {
        return Err(QbcError::BudgetExceeded(format!(
            "combing Choi side {side} exceeds {COMBING_BUDGET}"
        )));
    }
    let out = SubsystemLayout::new([(A1, r1), (A2, r2), (B_OUT, r1), (C_OUT, r2)])?;
    let lay = rho.layout().concat(&out)?;
    let mut p = ConicProgram::new(&format!("ppt-combing(r1={r1},r2={r2})"));
    let j = p.psd_variable("J", lay.clone());
    let x = p.var(j);
    let marg = x.ptrace(&[A1, A2, B_OUT, C_OUT])?;
    let eye = Expr::identity(marg.layout().clone(), 1.0);
    p.add_eq("Tr_out J = 1", marg - eye)?;
    for (i, name) in ["PPT across A", "PPT across B", "PPT across C"].iter().enumerate() {
        p.add_psd(name, x.ptranspose(&cut(i))?)?;
    }
    let weight = rho.transpose().tensor(&target_pairs(r1, r2)?)?;
    p.maximize(x.inner(&weight)?)?;
    Ok((p, j))
}

/// Optimal fidelity of PPT-preserving combing of `rho` into pairs of
/// sizes `r1` and `r2`.
pub fn ppt_combing_fidelity(rho: &HermitianOperator, r1: usize, r2: usize) -> Result<CombingResult> {
    let (p, j) = build_combing(rho, r1, r2)?;
    let solution = solve(&p);
    let fidelity = solution
        .optimal_value()
        .map_err(|e| QbcError::Solver(format!("{}: {e}", p.name())))?;
    let choi = solution.value(j).clone();
    Ok(CombingResult {
        fidelity,
        r1,
        r2,
        choi,
        solution,
    })
}

/// Outcome of [`check_code_from_combing`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CombingComparison {
    /// PPT code fidelity of the channel.
    pub code_fidelity: f64,
    /// PPT combing fidelity of the channel's Choi state.
    pub combing_fidelity: f64,
    /// `code_fidelity - combing_fidelity`.
    pub margin: f64,
}

/// Compares the PPT code fidelity of `n` with the PPT combing fidelity of
/// its Choi state, which can never exceed it.
pub fn check_code_from_combing(n: &BroadcastChannel, r1: usize, r2: usize) -> Result<CombingComparison> {
    let comb = ppt_combing_fidelity(&n.choi_state(), r1, r2)?.fidelity;
    let code = solve_fidelity_full(n, r1, r2, CodeClass::Ppt)?.value;
    let margin = code - comb;
    if margin < -COMBING_COMPARE_TOL {
        return Err(QbcError::InvariantViolated(format!(
            "{} at ({r1}, {r2}): code fidelity {code} below combing fidelity {comb}",
            n.name()
        )));
    }
    Ok(CombingComparison {
        code_fidelity: code,
        combing_fidelity: comb,
        margin,
    })
}

/// Trace-norm distance between the channel output `N(rho)` and the
/// post-selected teleportation expression `|A'|² <phi|(rho ⊗ Ñ)|phi>`,
/// with `phi` on the input copy of `rho` and the `A'` half of the Choi
/// state `Ñ`.
pub fn teleport_sim_identity(n: &BroadcastChannel, rho: &HermitianOperator) -> Result<f64> {
    let a = n.dims().a;
    if rho.side() != a {
        return Err(QbcError::DimensionMismatch(format!(
            "state of side {} for input dimension {a}",
            rho.side()
        )));
    }
    let direct = apply_channel(n, rho)?;
    let copy = "A''";
    let big = rho
        .regroup(SubsystemLayout::single(copy, a))?
        .tensor(&n.choi_state())?;
    let phi = max_entangled_on(copy, IN, a, true)?;
    let nbc = n.dims().b * n.dims().c;
    // (<phi| ⊗ 1_BC) as a (|B||C|) x (|A'|² |B||C|) matrix.
    let amp = phi.amplitudes();
    let bra = Mat::from_fn(nbc, a * a * nbc, |r, col| {
        if col % nbc == r {
            amp[col / nbc].conj()
        } else {
            faer::c64::new(0.0, 0.0)
        }
    });
    let m = &bra * big.matrix() * bra.adjoint();
    let tele = HermitianOperator::from_hermitian_part(direct.layout().clone(), m)?.scale((a * a) as f64);
    Ok(direct.sub(&tele)?.trace_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{identity, replacer};
    use crate::random::{random_density, Rng};

    fn bell_state() -> HermitianOperator {
        epr_projector(IN, BOB, 2)
            .unwrap()
            .tensor(&HermitianOperator::identity(SubsystemLayout::single(CHARLIE, 1)))
            .unwrap()
    }

    #[test]
    fn bell_state_combs_perfectly() {
        let r = ppt_combing_fidelity(&bell_state(), 2, 1).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-6, "{}", r.fidelity);
        assert!(r.validate().unwrap().is_valid());
    }

    #[test]
    fn mixed_state_reaches_half() {
        let lay = SubsystemLayout::new([(IN, 2), (BOB, 2), (CHARLIE, 1)]).unwrap();
        let rho = HermitianOperator::identity(lay).scale(0.25);
        let r = ppt_combing_fidelity(&rho, 2, 1).unwrap();
        assert!((r.fidelity - 0.5).abs() < 1e-6, "{}", r.fidelity);
    }

    #[test]
    fn budget_is_enforced() {
        let lay = SubsystemLayout::new([(IN, 2), (BOB, 2), (CHARLIE, 2)]).unwrap();
        let rho = HermitianOperator::identity(lay).scale(0.125);
        assert!(matches!(
            combing_program(&rho, 3, 2),
            Err(QbcError::BudgetExceeded(_))
        ));
    }

    #[test]
    fn teleportation_identity_on_identity_and_replacer() {
        let mut rng = Rng::seed(3);
        let rho = random_density(&mut rng, SubsystemLayout::single(IN, 2));
        assert!(teleport_sim_identity(&identity(2).unwrap(), &rho).unwrap() < 1e-12);
        assert!(teleport_sim_identity(&replacer(2, 2, 2).unwrap(), &rho).unwrap() < 1e-12);
    }

    #[test]
    fn identity_code_and_combing_agree() {
        let c = check_code_from_combing(&identity(2).unwrap(), 2, 1).unwrap();
        assert!((c.code_fidelity - 1.0).abs() < 1e-6);
        assert!((c.combing_fidelity - 1.0).abs() < 1e-6);
    }
}
