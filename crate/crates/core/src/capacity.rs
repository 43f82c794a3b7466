//! One-shot sum-capacity, its SDP relaxations, and the strong-converse
//! quantity `Gamma`.
//!
//! All rates are in bits. The one-shot sum-capacity of a code class is
//! found by solving the fidelity program on a grid of code sizes. The four
//! relaxations `g~`, `h~`, `g^`, `h^` replace the squared inverse code size
//! `m²` by a scalar `t`; the hatted versions add `t >= m^²` for an estimate
//! `m^` that is refined by re-solving. `Gamma` has a primal and a dual
//! program that are built and solved separately.

use crate::channels::{tensor_channels, BroadcastChannel, BOB, CHARLIE, IN};
use crate::error::{QbcError, Result};
use crate::fidelity::{solve_fidelity_full, CodeClass};
use crate::sdp::{solve, ConicProgram, Expr, Solution, Status, VarId};
use crate::tensor::{HermitianOperator, SubsystemLayout};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Slack on fidelity thresholds and on bound comparisons.
pub const BOUND_TOL: f64 = 1e-6;
/// Largest `|A'||B||C|` accepted by [`additivity_check`].
pub const ADDITIVITY_BUDGET: usize = 64;
/// Relative change that ends the refinement of `m^`.
pub const HAT_REL_TOL: f64 = 1e-6;
/// Largest number of refinement steps for `m^`.
pub const HAT_MAX_ITER: usize = 20;
/// Relative margin subtracted from `m^²` before it is used as `t_min`.
pub const HAT_T_MARGIN: f64 = 1e-9;

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(QbcError::InvalidArgument(format!(
            "eps must lie in [0, 1), got {eps}"
        )));
    }
    Ok(())
}

/// Fidelity of one grid point of [`one_shot_enumerate`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridPoint {
    /// Bob's code size.
    pub r1: usize,
    /// Charlie's code size.
    pub r2: usize,
    /// Optimal fidelity.
    pub fidelity: f64,
    /// `fidelity >= 1 - eps - BOUND_TOL`.
    pub feasible: bool,
}

/// Outcome of [`one_shot_enumerate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneShotResult {
    /// Allowed error.
    pub epsilon: f64,
    /// Code class.
    pub class: CodeClass,
    /// Largest size searched per receiver.
    pub rmax: usize,
    /// Every grid point, row-major in `(r1, r2)`.
    pub grid: Vec<GridPoint>,
    /// Feasible pairs.
    pub achievable_pairs: Vec<(usize, usize)>,
    /// Feasible pairs not dominated by another feasible pair.
    pub pareto_pairs: Vec<(usize, usize)>,
    /// `max log2(r1 r2)` over feasible pairs.
    pub q1_sum: f64,
}

/// Evaluates the fidelity of `class` codes for `1 <= r1, r2 <= rmax` and
/// reports the pairs reaching `1 - eps`.
pub fn one_shot_enumerate(
    n: &BroadcastChannel,
    eps: f64,
    class: CodeClass,
    rmax: usize,
) -> Result<OneShotResult> {
    check_eps(eps)?;
    if rmax < 1 {
        return Err(QbcError::InvalidArgument("rmax must be at least 1".into()));
    }
    let pairs: Vec<(usize, usize)> = (1..=rmax)
        .flat_map(|r1| (1..=rmax).map(move |r2| (r1, r2)))
        .collect();
    let grid = pairs
        .par_iter()
        .map(|&(r1, r2)| {
            let f = solve_fidelity_full(n, r1, r2, class)?.value;
            Ok(GridPoint {
                r1,
                r2,
                fidelity: f,
                feasible: f >= 1.0 - eps - BOUND_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let achievable_pairs: Vec<(usize, usize)> =
        grid.iter().filter(|g| g.feasible).map(|g| (g.r1, g.r2)).collect();
    let pareto_pairs = achievable_pairs
        .iter()
        .copied()
        .filter(|&(a, b)| {
            !achievable_pairs
                .iter()
                .any(|&(c, d)| c >= a && d >= b && (c, d) != (a, b))
        })
        .collect();
    let q1_sum = achievable_pairs
        .iter()
        .map(|&(a, b)| ((a * b) as f64).log2())
        .fold(0.0, f64::max);
    Ok(OneShotResult {
        epsilon: eps,
        class,
        rmax,
        grid,
        achievable_pairs,
        pareto_pairs,
        q1_sum,
    })
}

/// One of the four SDP relaxations of the one-shot sum-capacity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relaxation {
    /// `g~`: single operator, `0 <= t <= 1`.
    #[serde(rename = "gtilde")]
    GTilde,
    /// `h~`: with marginal slack operators, `0 <= t <= 1`.
    #[serde(rename = "htilde")]
    HTilde,
    /// `g^`: as `g~` with `t >= m^²`, iterated.
    #[serde(rename = "ghat")]
    GHat,
    /// `h^`: as `h~` with `t >= m^²`, iterated.
    #[serde(rename = "hhat")]
    HHat,
}

impl Relaxation {
    /// All relaxations.
    pub const ALL: [Relaxation; 4] = [
        Relaxation::GTilde,
        Relaxation::HTilde,
        Relaxation::GHat,
        Relaxation::HHat,
    ];

    fn uses_marginals(self) -> bool {
        matches!(self, Relaxation::HTilde | Relaxation::HHat)
    }
}

impl fmt::Display for Relaxation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relaxation::GTilde => "gtilde",
            Relaxation::HTilde => "htilde",
            Relaxation::GHat => "ghat",
            Relaxation::HHat => "hhat",
        })
    }
}

impl FromStr for Relaxation {
    type Err = QbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gtilde" => Ok(Relaxation::GTilde),
            "htilde" => Ok(Relaxation::HTilde),
            "ghat" => Ok(Relaxation::GHat),
            "hhat" => Ok(Relaxation::HHat),
            _ => Err(QbcError::Parse(format!(
                "unknown relaxation `{s}` (expected gtilde, htilde, ghat or hhat)"
            ))),
        }
    }
}

/// Right-hand sides of the marginal conditions on `S3^{A'C}` and
/// `S2^{A'B}` in the `h` programs.
///
/// For a code of size `(r1, r2)` with `m = 1/(r1 r2)` the operators
/// `S3 = (r1²-1) E3^{A'C}` and `S2 = (r2²-1) E2^{A'B}` have
/// `S3^C = (1/r2² - m²)|B| 1` and `S2^B = (1/r1² - m²)|C| 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarginalRule {
    /// `S3^C = (v - t)|B| 1`, `S2^B = (u - t)|C| 1` with scalars `u`, `v`
    /// standing for `1/r1²`, `1/r2²`, constrained by `t <= u, v <= 1` and
    /// `t >= u + v - 1`. Every code gives a feasible point.
    #[serde(rename = "derived")]
    Derived,
    /// `S3^C = t|B| 1`, `S2^B = t|C| 1`. Forces `t <= 1/3` by a trace
    /// count and excludes the points coming from codes.
    #[serde(rename = "displayed")]
    Displayed,
}

/// Outcome of one relaxation.
#[derive(Clone, Debug)]
pub struct RelaxationResult {
    /// Which relaxation.
    pub which: Relaxation,
    /// Allowed error.
    pub epsilon: f64,
    /// Optimal `Tr S`.
    pub value: f64,
    /// `-log2 value`.
    pub bound_bits: f64,
    /// Number of programs solved (1 for the tilde forms).
    pub iterations: usize,
    /// Whether the refinement met [`HAT_REL_TOL`] (always true for tilde).
    pub converged: bool,
    /// Bound in bits after each solve.
    pub history: Vec<f64>,
    /// Final `m^` (the lower bound on `sqrt t`); zero for the tilde forms.
    pub m_hat: f64,
    /// Optimal `t`.
    pub t: f64,
    /// Named optimal operators (`E1`, `rho`, `S`, and `S2`, `S3` for `h`).
    pub variables: Vec<(String, HermitianOperator)>,
    /// Solver output of the last program.
    pub solution: Solution,
}

/// Builds the `g` relaxation program (`marginals = None`) or the `h`
/// program with the given marginal rule, with `t >= t_min`.
pub fn relaxation_program(
    n: &BroadcastChannel,
    eps: f64,
    marginals: Option<MarginalRule>,
    t_min: f64,
) -> Result<ConicProgram> {
    Ok(build_relaxation(n, eps, marginals, t_min)?.0)
}

struct RelaxHandles {
    names: Vec<(&'static str, VarId)>,
    t: VarId,
}

fn build_relaxation(
    n: &BroadcastChannel,
    eps: f64,
    marginals: Option<MarginalRule>,
    t_min: f64,
) -> Result<(ConicProgram, RelaxHandles)> {
    check_eps(eps)?;
    let lay = n.choi().layout().clone();
    let (db, dc) = (lay.dim_of(BOB)? as f64, lay.dim_of(CHARLIE)? as f64);
    let tag = match marginals {
        None => "g",
        Some(MarginalRule::Derived) => "h",
        Some(MarginalRule::Displayed) => "h-displayed",
    };
    let mut p = ConicProgram::new(&format!("relaxation-{tag}(eps={eps},tmin={t_min})"));
    let e1 = p.psd_variable("E1", lay.clone());
    let rho = p.psd_variable("rho", SubsystemLayout::single(IN, n.dims().a));
    let s = p.hermitian("S", SubsystemLayout::single(IN, n.dims().a));
    let t = p.scalar("t");
    let mut names = vec![("E1", e1), ("rho", rho), ("S", s)];

    let x1 = p.var(e1);
    let rho1 = p.var(rho).expand_to(&lay)?;
    let s1 = p.var(s).expand_to(&lay)?;
    let tv = p.var(t);

    p.add_psd("fidelity >= 1 - eps", x1.inner(&n.choi().transpose())? - Expr::scalar(1.0 - eps))?;
    p.add_psd("t >= t_min", tv.clone() - Expr::scalar(t_min))?;
    p.add_psd("t <= 1", Expr::scalar(1.0) - tv.clone())?;
    p.add_eq("Tr rho = 1", p.var(rho).trace() - Expr::scalar(1.0))?;
    let bc = x1.ptrace(&[IN])?;
    let bc_t = tv.expand_to(bc.layout())?;
    p.add_eq("E1^BC = t 1", bc - bc_t)?;

    if let Some(rule) = marginals {
        let s2 = p.hermitian("S2", lay.select(&[IN, BOB])?);
        let s3 = p.hermitian("S3", lay.select(&[IN, CHARLIE])?);
        names.push(("S2", s2));
        names.push(("S3", s3));
        let xb = (x1.ptrace(&[BOB])? + p.var(s3)).expand_to(&lay)?.scale(1.0 / db);
        let xc = (x1.ptrace(&[CHARLIE])? + p.var(s2)).expand_to(&lay)?.scale(1.0 / dc);
        p.add_le("E1 <= X_B", x1.clone(), xb.clone())?;
        p.add_le("E1 <= X_C", x1.clone(), xc.clone())?;
        p.add_le("X_B + X_C <= rho ⊗ 1 + E1", xb + xc, rho1.clone() + x1.clone())?;
        // Coefficients of the marginals of S3 and S2 in units of |B| and |C|.
        let (c3, c2) = match rule {
            MarginalRule::Displayed => (tv.clone(), tv.clone()),
            MarginalRule::Derived => {
                let u = p.scalar("u");
                let v = p.scalar("v");
                let (uv, vv) = (p.var(u), p.var(v));
                p.add_psd("t <= u", uv.clone() - tv.clone())?;
                p.add_psd("t <= v", vv.clone() - tv.clone())?;
                p.add_psd("u <= 1", Expr::scalar(1.0) - uv.clone())?;
                p.add_psd("v <= 1", Expr::scalar(1.0) - vv.clone())?;
                p.add_psd("t >= u + v - 1", tv.clone() + Expr::scalar(1.0) - uv.clone() - vv.clone())?;
                (vv - tv.clone(), uv - tv.clone())
            }
        };
        let s3c = p.var(s3).ptrace(&[IN])?;
        let s3c_t = db * c3.expand_to(s3c.layout())?;
        p.add_eq("S3^C", s3c - s3c_t)?;
        let s2b = p.var(s2).ptrace(&[IN])?;
        let s2b_t = dc * c2.expand_to(s2b.layout())?;
        p.add_eq("S2^B", s2b - s2b_t)?;
    } else {
        p.add_le("E1 <= rho ⊗ 1", x1.clone(), rho1.clone())?;
    }
    p.add_abs_le("|E1^T_BC| <= S ⊗ 1", x1.ptranspose(&[BOB, CHARLIE])?, s1)?;
    p.add_abs_le("|E1^T_B| <= rho ⊗ 1", x1.ptranspose(&[BOB])?, rho1.clone())?;
    p.add_abs_le("|E1^T_C| <= rho ⊗ 1", x1.ptranspose(&[CHARLIE])?, rho1)?;
    p.minimize(p.var(s).trace())?;
    Ok((p, RelaxHandles { names, t }))
}

struct RelaxSolve {
    value: f64,
    t: f64,
    variables: Vec<(String, HermitianOperator)>,
    solution: Solution,
}

fn solve_relaxation_once(
    n: &BroadcastChannel,
    eps: f64,
    marginals: Option<MarginalRule>,
    t_min: f64,
) -> Result<RelaxSolve> {
    let (p, h) = build_relaxation(n, eps, marginals, t_min)?;
    let solution = solve(&p);
    let value = solution
        .optimal_value()
        .map_err(|e| QbcError::Solver(format!("{}: {e}", p.name())))?;
    if value <= 0.0 {
        return Err(QbcError::InvariantViolated(format!(
            "{}: nonpositive optimum {value}",
            p.name()
        )));
    }
    Ok(RelaxSolve {
        value,
        t: solution.scalar(h.t),
        variables: h
            .names
            .iter()
            .map(|(name, v)| (name.to_string(), solution.value(*v).clone()))
            .collect(),
        solution,
    })
}

/// Solves one relaxation. The hatted forms start from the matching tilde
/// value and re-solve with `t >= m^²`, `m^` set to the previous optimum,
/// until the relative change drops below [`HAT_REL_TOL`] or
/// [`HAT_MAX_ITER`] programs have been solved.
pub fn solve_relaxation(n: &BroadcastChannel, eps: f64, which: Relaxation) -> Result<RelaxationResult> {
    solve_relaxation_with(n, eps, which, MarginalRule::Derived)
}

/// [`solve_relaxation`] with an explicit marginal rule for the `h` forms
/// (ignored by the `g` forms).
pub fn solve_relaxation_with(
    n: &BroadcastChannel,
    eps: f64,
    which: Relaxation,
    rule: MarginalRule,
) -> Result<RelaxationResult> {
    let marginals = which.uses_marginals().then_some(rule);
    let first = solve_relaxation_once(n, eps, marginals, 0.0)?;
    let mut history = vec![-first.value.log2()];
    if matches!(which, Relaxation::GTilde | Relaxation::HTilde) {
        return Ok(RelaxationResult {
            which,
            epsilon: eps,
            value: first.value,
            bound_bits: -first.value.log2(),
            iterations: 1,
            converged: true,
            history,
            m_hat: 0.0,
            t: first.t,
            variables: first.variables,
            solution: first.solution,
        });
    }
    let mut m_hat = first.value;
    let mut last = None;
    let mut converged = false;
    for _ in 0..HAT_MAX_ITER {
        // A lower `t_min` only relaxes the program, so solver noise that
        // pushes `m^` past 1 is clamped away along with a small margin.
        let t_min = (m_hat * m_hat).min(1.0) * (1.0 - HAT_T_MARGIN);
        let step = solve_relaxation_once(n, eps, marginals, t_min)?;
        history.push(-step.value.log2());
        let change = (step.value - m_hat).abs() / m_hat;
        let used = m_hat;
        m_hat = step.value;
        last = Some((step, used));
        if change < HAT_REL_TOL {
            converged = true;
            break;
        }
    }
    let (step, used) = last.expect("at least one refinement step");
    Ok(RelaxationResult {
        which,
        epsilon: eps,
        value: step.value,
        bound_bits: -step.value.log2(),
        iterations: history.len(),
        converged,
        history,
        m_hat: used,
        t: step.t,
        variables: step.variables,
        solution: step.solution,
    })
}

/// `g~` relaxation.
pub fn solve_g_tilde(n: &BroadcastChannel, eps: f64) -> Result<RelaxationResult> {
    solve_relaxation(n, eps, Relaxation::GTilde)
}

/// `h~` relaxation.
pub fn solve_h_tilde(n: &BroadcastChannel, eps: f64) -> Result<RelaxationResult> {
    solve_relaxation(n, eps, Relaxation::HTilde)
}

/// `g^` relaxation.
pub fn solve_g_hat(n: &BroadcastChannel, eps: f64) -> Result<RelaxationResult> {
    solve_relaxation(n, eps, Relaxation::GHat)
}

/// `h^` relaxation.
pub fn solve_h_hat(n: &BroadcastChannel, eps: f64) -> Result<RelaxationResult> {
    solve_relaxation(n, eps, Relaxation::HHat)
}

/// Primal and dual solutions of `Gamma`.
#[derive(Clone, Debug)]
pub struct GammaResult {
    /// `Gamma`, taken from the dual program (an upper bound certificate).
    pub gamma: f64,
    /// `log2 Gamma`.
    pub q_gamma_bits: f64,
    /// Optimum of the primal program, if it was solved.
    pub primal_value: Option<f64>,
    /// Optimum of the dual program.
    pub dual_value: f64,
    /// `|primal - dual|` when both were solved.
    pub gap: Option<f64>,
    /// Primal `R^{A'BC}`.
    pub r: Option<HermitianOperator>,
    /// Primal `rho^{A'}`.
    pub rho: Option<HermitianOperator>,
    /// Primal `m`.
    pub m: Option<f64>,
    /// Dual `mu`.
    pub mu: f64,
    /// Dual `V^{A'BC}`.
    pub v: HermitianOperator,
    /// Dual `Y^{A'BC}`.
    pub y: HermitianOperator,
    /// Dual `W^{BC}`.
    pub w: HermitianOperator,
    /// Total solver wall time in seconds.
    pub seconds: f64,
}

/// The primal `Gamma` program.
pub fn gamma_primal_program(n: &BroadcastChannel) -> Result<ConicProgram> {
    Ok(build_gamma_primal(n)?.0)
}

fn build_gamma_primal(n: &BroadcastChannel) -> Result<(ConicProgram, [VarId; 3])> {
    let lay = n.choi().layout().clone();
    let mut p = ConicProgram::new(&format!("gamma-primal({})", n.name()));
    let r = p.psd_variable("R", lay.clone());
    let rho = p.psd_variable("rho", SubsystemLayout::single(IN, n.dims().a));
    let m = p.scalar("m");
    p.add_eq("Tr rho = 1", p.var(rho).trace() - Expr::scalar(1.0))?;
    let bc = p.var(r).ptrace(&[IN])?;
    let mi = p.var(m).expand_to(bc.layout())?;
    p.add_eq("R^BC = m 1", bc - mi)?;
    let rho1 = p.var(rho).expand_to(&lay)?;
    p.add_abs_le("|R^T_BC| <= rho ⊗ 1", p.var(r).ptranspose(&[BOB, CHARLIE])?, rho1)?;
    p.maximize(p.var(r).inner(&n.choi().transpose())?)?;
    Ok((p, [r, rho, m]))
}

/// The dual `Gamma` program.
pub fn gamma_dual_program(n: &BroadcastChannel) -> Result<ConicProgram> {
    Ok(build_gamma_dual(n)?.0)
}

fn build_gamma_dual(n: &BroadcastChannel) -> Result<(ConicProgram, [VarId; 4])> {
    let lay = n.choi().layout().clone();
    let bc = lay.select(&[BOB, CHARLIE])?;
    let mut p = ConicProgram::new(&format!("gamma-dual({})", n.name()));
    let v = p.psd_variable("V", lay.clone());
    let y = p.psd_variable("Y", lay.clone());
    let w = p.hermitian("W", bc);
    let mu = p.scalar("mu");
    let rhs = (p.var(v) - p.var(y)).ptranspose(&[BOB, CHARLIE])? + p.var(w).expand_to(&lay)?;
    p.add_le("N^T <= (V - Y)^T_BC + 1 ⊗ W", Expr::constant(&n.choi().transpose()), rhs)?;
    let marg = (p.var(v) + p.var(y)).ptrace(&[BOB, CHARLIE])?;
    let mu1 = p.var(mu).expand_to(marg.layout())?;
    p.add_le("Tr_BC (V + Y) <= mu 1", marg, mu1)?;
    p.add_psd("Tr W <= 0", -p.var(w).trace())?;
    p.minimize(p.var(mu))?;
    Ok((p, [v, y, w, mu]))
}

fn solved(p: &ConicProgram) -> Result<(Solution, f64)> {
    let s = solve(p);
    let v = s
        .optimal_value()
        .map_err(|e| QbcError::Solver(format!("{}: {e}", p.name())))?;
    Ok((s, v))
}

/// Solves the dual `Gamma` program only.
pub fn gamma_dual_only(n: &BroadcastChannel) -> Result<GammaResult> {
    let (p, [v, y, w, mu]) = build_gamma_dual(n)?;
    let (s, val) = solved(&p)?;
    Ok(GammaResult {
        gamma: val,
        q_gamma_bits: val.log2(),
        primal_value: None,
        dual_value: val,
        gap: None,
        r: None,
        rho: None,
        m: None,
        mu: s.scalar(mu),
        v: s.value(v).clone(),
        y: s.value(y).clone(),
        w: s.value(w).clone(),
        seconds: s.seconds,
    })
}

/// Solves the primal and dual `Gamma` programs and checks that they agree
/// to `BOUND_TOL * max(1, primal)`.
pub fn gamma(n: &BroadcastChannel) -> Result<GammaResult> {
    let (pp, [r, rho, m]) = build_gamma_primal(n)?;
    let (ps, pv) = solved(&pp)?;
    let mut out = gamma_dual_only(n)?;
    let gap = (pv - out.dual_value).abs();
    out.primal_value = Some(pv);
    out.gap = Some(gap);
    out.r = Some(ps.value(r).clone());
    out.rho = Some(ps.value(rho).clone());
    out.m = Some(ps.scalar(m));
    out.seconds += ps.seconds;
    if gap > BOUND_TOL * pv.abs().max(1.0) {
        return Err(QbcError::Solver(format!(
            "Gamma primal {pv} and dual {} differ by {gap:e} ({:?})",
            out.dual_value,
            Status::NumericalTrouble
        )));
    }
    Ok(out)
}

/// Outcome of [`additivity_check`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdditivityReport {
    /// `Gamma(N1)`.
    pub gamma1: f64,
    /// `Gamma(N2)`.
    pub gamma2: f64,
    /// `Gamma(N1 ⊗ N2)`.
    pub gamma12: f64,
    /// `|Gamma(N1 ⊗ N2) - Gamma(N1) Gamma(N2)| / (Gamma(N1) Gamma(N2))`.
    pub relative_deviation: f64,
    /// Solver wall time in seconds.
    pub seconds: f64,
}

/// Compares `Gamma(N1 ⊗ N2)` with `Gamma(N1) Gamma(N2)`.
pub fn additivity_check(n1: &BroadcastChannel, n2: &BroadcastChannel) -> Result<AdditivityReport> {
    let size = n1.dims().total() * n2.dims().total();
    if size > ADDITIVITY_BUDGET {
        return Err(QbcError::BudgetExceeded(format!(
            "product Choi side {size} exceeds {ADDITIVITY_BUDGET}"
        )));
    }
    let g1 = gamma(n1)?;
    let g2 = gamma(n2)?;
    let g12 = gamma(&tensor_channels(n1, n2)?)?;
    let prod = g1.gamma * g2.gamma;
    Ok(AdditivityReport {
        gamma1: g1.gamma,
        gamma2: g2.gamma,
        gamma12: g12.gamma,
        relative_deviation: (g12.gamma - prod).abs() / prod,
        seconds: g1.seconds + g2.seconds + g12.seconds,
    })
}

/// Lower bound `max(0, 1 - 2^{n (Q_Gamma - R1 - R2)})` on the error of
/// `n` channel uses at rates `(R1, R2)`. The value is rounded down, so it
/// stays below 1 even when `1 - 2^{...}` is closer to 1 than to any other
/// double.
pub fn error_floor(q_gamma_bits: f64, n: u32, r1_bits: f64, r2_bits: f64) -> Result<f64> {
    if n < 1 {
        return Err(QbcError::InvalidArgument("n must be at least 1".into()));
    }
    let exponent = n as f64 * (q_gamma_bits - r1_bits - r2_bits);
    let below_one = f64::from_bits(1.0f64.to_bits() - 1);
    Ok((-(exponent * std::f64::consts::LN_2).exp_m1()).clamp(0.0, below_one))
}

/// All bounds of the comparison chains at one `eps`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundChain {
    /// Allowed error.
    pub epsilon: f64,
    /// NS ∩ PPT one-shot sum-capacity from enumeration.
    pub q1: f64,
    /// Grid size used for `q1`.
    pub rmax: usize,
    /// `-log2 h^`.
    pub h_hat: f64,
    /// `-log2 h~`.
    pub h_tilde: f64,
    /// `-log2 g^`.
    pub g_hat: f64,
    /// `-log2 g~`.
    pub g_tilde: f64,
    /// `Q_Gamma`.
    pub q_gamma: f64,
    /// `Q_Gamma - log2(1 - eps)`.
    pub converse: f64,
    /// Violated inequalities, empty when both chains hold.
    pub violations: Vec<String>,
}

impl BoundChain {
    /// `(Q1, -log h^, -log h~, -log g~)`.
    pub fn first_chain(&self) -> [f64; 4] {
        [self.q1, self.h_hat, self.h_tilde, self.g_tilde]
    }

    /// `(Q1, -log h^, -log g^, -log g~)`.
    pub fn second_chain(&self) -> [f64; 4] {
        [self.q1, self.h_hat, self.g_hat, self.g_tilde]
    }
}

/// Smallest `rmax` such that every pair with `log2(r1 r2) <= bound_bits`
/// lies in the grid.
pub fn grid_for_bound(bound_bits: f64) -> usize {
    ((bound_bits + BOUND_TOL).exp2().floor() as usize).max(1)
}

/// Computes every bound of the chains without asserting them.
pub fn compute_chain(n: &BroadcastChannel, eps: f64) -> Result<BoundChain> {
    check_eps(eps)?;
    compute_chain_with_gamma(n, eps, gamma(n)?.q_gamma_bits)
}

/// [`compute_chain`] with a precomputed `Q_Gamma` in bits.
pub fn compute_chain_with_gamma(n: &BroadcastChannel, eps: f64, q_gamma: f64) -> Result<BoundChain> {
    check_eps(eps)?;
    let converse = q_gamma - (1.0 - eps).log2();
    let rmax = grid_for_bound(converse);
    let relax: Vec<RelaxationResult> = Relaxation::ALL
        .par_iter()
        .map(|&w| solve_relaxation(n, eps, w))
        .collect::<Result<_>>()?;
    let q1 = one_shot_enumerate(n, eps, CodeClass::NsPpt, rmax)?.q1_sum;
    let bits = |w: Relaxation| relax.iter().find(|r| r.which == w).expect("solved").bound_bits;
    let mut chain = BoundChain {
        epsilon: eps,
        q1,
        rmax,
        h_hat: bits(Relaxation::HHat),
        h_tilde: bits(Relaxation::HTilde),
        g_hat: bits(Relaxation::GHat),
        g_tilde: bits(Relaxation::GTilde),
        q_gamma,
        converse,
        violations: Vec::new(),
    };
    let names1 = ["Q1", "-log h^", "-log h~", "-log g~"];
    let names2 = ["Q1", "-log h^", "-log g^", "-log g~"];
    let mut violations = Vec::new();
    for (vals, names) in [(chain.first_chain(), names1), (chain.second_chain(), names2)] {
        for i in 0..3 {
            if vals[i] > vals[i + 1] + BOUND_TOL {
                let v = format!("{} = {} > {} = {}", names[i], vals[i], names[i + 1], vals[i + 1]);
                if !violations.contains(&v) {
                    violations.push(v);
                }
            }
        }
    }
    if q1 > converse + BOUND_TOL {
        violations.push(format!("Q1 = {q1} > Q_Gamma - log(1-eps) = {converse}"));
    }
    chain.violations = violations;
    Ok(chain)
}

/// [`compute_chain`] that fails when either chain or the one-shot converse
/// is violated beyond [`BOUND_TOL`].
pub fn comparison_chain(n: &BroadcastChannel, eps: f64) -> Result<BoundChain> {
    let chain = compute_chain(n, eps)?;
    if !chain.violations.is_empty() {
        return Err(QbcError::InvariantViolated(format!(
            "comparison chain for {} at eps = {eps}: {}",
            n.name(),
            chain.violations.join("; ")
        )));
    }
    Ok(chain)
}

/// Residuals of a candidate point of the nonlinear `g` program.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProgramResidual {
    /// Largest violation among the inequality constraints (0 if all hold).
    pub inequality: f64,
    /// Largest violation among the equality constraints.
    pub equality: f64,
}

impl ProgramResidual {
    /// Both residuals within `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.inequality <= tol && self.equality <= tol
    }
}

fn psd_gap(x: &HermitianOperator) -> f64 {
    (-x.min_eigenvalue()).max(0.0)
}

fn abs_gap(x: &HermitianOperator, bound: &HermitianOperator) -> Result<f64> {
    Ok(psd_gap(&bound.sub(x)?).max(psd_gap(&bound.add(x)?)))
}

/// Checks a point `(Lambda, rho, S, m)` against the nonlinear `g` program
/// (with `Lambda^{BC} = m² 1`).
pub fn g_program_residual(
    n: &BroadcastChannel,
    eps: f64,
    lambda: &HermitianOperator,
    rho: &HermitianOperator,
    s: &HermitianOperator,
    m: f64,
) -> Result<ProgramResidual> {
    let lay = n.choi().layout();
    let rho1 = rho.expand_to(lay)?;
    let s1 = s.expand_to(lay)?;
    let fid = lambda.inner(&n.choi().transpose())?;
    let ineq = [
        (1.0 - eps - fid).max(0.0),
        psd_gap(lambda),
        psd_gap(&rho1.sub(lambda)?),
        abs_gap(&lambda.ptranspose(&[BOB, CHARLIE])?, &s1)?,
        abs_gap(&lambda.ptranspose(&[BOB])?, &rho1)?,
        abs_gap(&lambda.ptranspose(&[CHARLIE])?, &rho1)?,
    ];
    let bc = lambda.ptrace(&[IN])?;
    let eq = [
        (rho.trace() - 1.0).abs(),
        bc.sub(&HermitianOperator::identity(bc.layout().clone()).scale(m * m))?
            .max_abs_entry(),
    ];
    Ok(ProgramResidual {
        inequality: ineq.into_iter().fold(0.0, f64::max),
        equality: eq.into_iter().fold(0.0, f64::max),
    })
}

/// Operators of a candidate point of the nonlinear `h` program.
#[derive(Clone, Debug)]
pub struct HPoint {
    /// `E1^{A'BC}`.
    pub e1: HermitianOperator,
    /// `S2^{A'B}`.
    pub s2: HermitianOperator,
    /// `S3^{A'C}`.
    pub s3: HermitianOperator,
    /// `rho^{A'}`.
    pub rho: HermitianOperator,
    /// `S^{A'}`.
    pub s: HermitianOperator,
}

/// Checks a point against the nonlinear `h` program for code size
/// `(r1, r2)`, `m = 1/(r1 r2)`, with the marginal conditions of `rule`.
pub fn h_program_residual(
    n: &BroadcastChannel,
    eps: f64,
    x: &HPoint,
    (r1, r2): (usize, usize),
    rule: MarginalRule,
) -> Result<ProgramResidual> {
    let lay = n.choi().layout();
    let (db, dc) = (lay.dim_of(BOB)? as f64, lay.dim_of(CHARLIE)? as f64);
    let m = 1.0 / (r1 * r2) as f64;
    let (c3, c2) = match rule {
        MarginalRule::Displayed => (m * m, m * m),
        MarginalRule::Derived => (
            1.0 / (r2 * r2) as f64 - m * m,
            1.0 / (r1 * r1) as f64 - m * m,
        ),
    };
    let rho1 = x.rho.expand_to(lay)?;
    let xb = x.e1.ptrace(&[BOB])?.add(&x.s3)?.expand_to(lay)?.scale(1.0 / db);
    let xc = x.e1.ptrace(&[CHARLIE])?.add(&x.s2)?.expand_to(lay)?.scale(1.0 / dc);
    let mut g = g_program_residual(n, eps, &x.e1, &x.rho, &x.s, m)?;
    let ineq = [
        psd_gap(&xb.sub(&x.e1)?),
        psd_gap(&xc.sub(&x.e1)?),
        psd_gap(&rho1.add(&x.e1)?.sub(&xb.add(&xc)?)?),
    ];
    let s3c = x.s3.ptrace(&[IN])?;
    let s2b = x.s2.ptrace(&[IN])?;
    let eq = [
        s3c.sub(&HermitianOperator::identity(s3c.layout().clone()).scale(c3 * db))?
            .max_abs_entry(),
        s2b.sub(&HermitianOperator::identity(s2b.layout().clone()).scale(c2 * dc))?
            .max_abs_entry(),
    ];
    g.inequality = ineq.into_iter().fold(g.inequality, f64::max);
    g.equality = eq.into_iter().fold(g.equality, f64::max);
    Ok(g)
}

/// Checks a point `(Lambda, rho, m)` against the program whose `-log m`
/// bounds the one-shot capacity before passing to `Gamma`: fidelity at
/// least `1 - eps`, `Lambda, rho >= 0`, `Tr rho = 1`, `Lambda^{BC} = m² 1`
/// and `|Lambda^{T_BC}| <= m rho ⊗ 1`.
pub fn strong_converse_residual(
    n: &BroadcastChannel,
    eps: f64,
    lambda: &HermitianOperator,
    rho: &HermitianOperator,
    m: f64,
) -> Result<ProgramResidual> {
    let lay = n.choi().layout();
    let rho1 = rho.expand_to(lay)?;
    let fid = lambda.inner(&n.choi().transpose())?;
    let ineq = [
        (1.0 - eps - fid).max(0.0),
        psd_gap(lambda),
        psd_gap(rho),
        abs_gap(&lambda.ptranspose(&[BOB, CHARLIE])?, &rho1.scale(m))?,
    ];
    let bc = lambda.ptrace(&[IN])?;
    let eq = [
        (rho.trace() - 1.0).abs(),
        bc.sub(&HermitianOperator::identity(bc.layout().clone()).scale(m * m))?
            .max_abs_entry(),
    ];
    Ok(ProgramResidual {
        inequality: ineq.into_iter().fold(0.0, f64::max),
        equality: eq.into_iter().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{amplitude_damping_env, identity, replacer};

    #[test]
    fn error_floor_arithmetic() {
        assert_eq!(error_floor(1.0, 10, 0.75, 0.75).unwrap(), 0.96875);
        assert_eq!(error_floor(1.0, 7, 0.5, 0.5).unwrap(), 0.0);
        assert!(error_floor(1.0, 0, 0.5, 0.5).is_err());
    }

    #[test]
    fn identity_gamma_is_dimension() {
        for d in [2, 3] {
            let g = gamma(&identity(d).unwrap()).unwrap();
            assert!((g.gamma - d as f64).abs() < 1e-6, "{}", g.gamma);
            assert!(g.gap.unwrap() < 1e-6);
        }
    }

    #[test]
    fn replacer_gamma_is_one() {
        let g = gamma(&replacer(2, 2, 2).unwrap()).unwrap();
        assert!((g.gamma - 1.0).abs() < 1e-6);
        assert!(g.q_gamma_bits.abs() < 1e-6);
    }

    #[test]
    fn identity_one_shot() {
        let n = identity(2).unwrap();
        let r = one_shot_enumerate(&n, 0.0, CodeClass::Ns, 2).unwrap();
        assert!((r.q1_sum - 1.0).abs() < 1e-12);
        assert!(r.achievable_pairs.contains(&(2, 1)));
        assert!(!r.achievable_pairs.contains(&(2, 2)));
    }

    #[test]
    fn relaxations_on_damping() {
        let n = amplitude_damping_env(0.3).unwrap();
        let c = compute_chain(&n, 0.1).unwrap();
        eprintln!("{c:?}");
        assert!(c.violations.is_empty(), "{:?}", c.violations);
    }
}
