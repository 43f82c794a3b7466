//! Semidefinite programs over complex Hermitian matrices.
//!
//! Programs are assembled with [`ConicProgram`] and [`Expr`] and solved by
//! [`solve`], a primal-dual interior-point method that works natively with
//! complex Hermitian blocks. The returned [`Solution`] carries the primal
//! and dual objective values, the variable values, dual multipliers for
//! every constraint, and a status that is decided after the fact from the
//! measured duality gap and constraint residuals.
//!
//! ```
//! use qbc::sdp::{solve, ConicProgram, Expr, Status};
//! use qbc::tensor::SubsystemLayout;
//!
//! // minimize Tr X subject to X ⪰ 1.
//! let lay = SubsystemLayout::single("A", 2);
//! let mut p = ConicProgram::new("spectral");
//! let x = p.hermitian("X", lay.clone());
//! p.add_le("X >= 1", Expr::identity(lay, 1.0), p.var(x)).unwrap();
//! p.minimize(p.var(x).trace()).unwrap();
//! let sol = solve(&p);
//! assert_eq!(sol.status, Status::Optimal);
//! assert!((sol.primal_value - 2.0).abs() < 1e-6);
//! ```

mod compile;
mod ipm;
pub mod linmap;
mod model;

pub use compile::Direction;
pub use linmap::LinMap;
pub use model::{
    ConicProgram, Constraint, ConstraintId, Expr, Sense, VarId, Variable, EMBED_LABEL,
};

use crate::tensor::{HermitianOperator, SubsystemLayout};
use compile::{compile_lmi, compile_standard, independent_rows, lower, newton_sizes, Reduced};
use faer::{c64, Mat};
use ipm::IpmOutcome;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Relative duality gap allowed in an optimal solution.
pub const GAP_TOL: f64 = 1e-6;
/// Most negative eigenvalue allowed in a PSD constraint of an optimal solution.
pub const PSD_TOL: f64 = 1e-7;
/// Largest equality residual allowed in an optimal solution.
pub const EQ_TOL: f64 = 1e-7;
/// Default interior-point stopping tolerance.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-8;

/// Outcome of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    /// Gap and residuals are within the documented tolerances.
    Optimal,
    /// The constraints admit no solution.
    Infeasible,
    /// The objective is unbounded over the feasible set.
    Unbounded,
    /// The solver stopped without meeting the optimality tolerances.
    NumericalTrouble,
}

/// How PSD constraints are presented to the interior-point core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Embedding {
    /// Complex Hermitian blocks.
    Complex,
    /// Every PSD constraint is replaced by its real symmetric embedding
    /// `[[Re H, -Im H], [Im H, Re H]]`.
    Real,
}

/// Solver settings.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Interior-point stopping tolerance on relative gap and infeasibility.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Force a lowering direction; `None` picks the smaller Newton system.
    pub direction: Option<Direction>,
    /// Block representation.
    pub embedding: Embedding,
}

impl Default for SolverOptions {
    /// Tolerance from `QBC_SOLVER_TOL` when set and valid, else
    /// [`DEFAULT_SOLVER_TOL`].
    fn default() -> Self {
        let tol = std::env::var("QBC_SOLVER_TOL")
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|t| t.is_finite() && *t > 0.0)
            .unwrap_or(DEFAULT_SOLVER_TOL);
        Self {
            tol,
            max_iter: 150,
            direction: None,
            embedding: Embedding::Complex,
        }
    }
}

/// Result of [`solve`].
#[derive(Clone, Debug)]
pub struct Solution {
    /// Outcome.
    pub status: Status,
    /// Objective at the returned variable values.
    pub primal_value: f64,
    /// Objective of the dual program at the returned multipliers.
    pub dual_value: f64,
    /// `|primal_value - dual_value|`.
    pub gap: f64,
    /// Variable values, in declaration order.
    pub values: Vec<HermitianOperator>,
    /// Multiplier of each PSD constraint (PSD itself).
    pub psd_duals: Vec<HermitianOperator>,
    /// Multiplier of each equality constraint.
    pub eq_duals: Vec<HermitianOperator>,
    /// Smallest eigenvalue over all PSD constraints at the returned values.
    pub psd_violation: f64,
    /// Largest absolute entry over all equality constraints at the returned values.
    pub eq_residual: f64,
    /// Interior-point iterations.
    pub iterations: usize,
    /// Lowering that was used.
    pub direction: Direction,
    /// Size of the Newton system.
    pub newton_size: usize,
    /// Wall time in seconds.
    pub seconds: f64,
}

impl Solution {
    /// Value of variable `v`.
    pub fn value(&self, v: VarId) -> &HermitianOperator {
        &self.values[v.index()]
    }

    /// Value of a scalar variable.
    pub fn scalar(&self, v: VarId) -> f64 {
        self.values[v.index()].entry(0, 0).re
    }

    /// Multiplier of a constraint.
    pub fn dual(&self, c: ConstraintId) -> &HermitianOperator {
        match c {
            ConstraintId::Psd(i) => &self.psd_duals[i],
            ConstraintId::Eq(i) => &self.eq_duals[i],
        }
    }

    /// Whether the status is [`Status::Optimal`].
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// The primal value, or an error describing the status.
    pub fn optimal_value(&self) -> crate::error::Result<f64> {
        if self.is_optimal() {
            Ok(self.primal_value)
        } else {
            Err(crate::error::QbcError::Solver(format!(
                "status {:?} (primal {:.3e}, dual {:.3e}, gap {:.1e}, psd {:.1e}, eq {:.1e})",
                self.status,
                self.primal_value,
                self.dual_value,
                self.gap,
                self.psd_violation,
                self.eq_residual
            )))
        }
    }
}

/// Solves `p` with default options.
pub fn solve(p: &ConicProgram) -> Solution {
    solve_with(p, &SolverOptions::default())
}

/// Replaces every PSD constraint of `p` by its real embedding.
pub fn real_embedding(p: &ConicProgram) -> ConicProgram {
    let mut q = ConicProgram::new(p.name());
    for v in p.variables() {
        q.hermitian(&v.name, v.layout.clone());
    }
    for c in p.psd_constraints() {
        q.add_psd(&c.name, c.expr.real_embedding())
            .expect("handles carried over");
    }
    for c in p.eq_constraints() {
        q.add_eq(&c.name, c.expr.clone()).expect("handles carried over");
    }
    match p.sense() {
        Sense::Maximize => q.maximize(p.objective().clone()),
        Sense::Minimize => q.minimize(p.objective().clone()),
    }
    .expect("objective carried over");
    q
}

fn zero_values(p: &ConicProgram) -> Vec<HermitianOperator> {
    p.variables()
        .iter()
        .map(|v| HermitianOperator::zeros(v.layout.clone()))
        .collect()
}

fn zero_duals(p: &ConicProgram) -> (Vec<HermitianOperator>, Vec<HermitianOperator>) {
    (
        p.psd_constraints()
            .iter()
            .map(|c| HermitianOperator::zeros(c.expr.layout().clone()))
            .collect(),
        p.eq_constraints()
            .iter()
            .map(|c| HermitianOperator::zeros(c.expr.layout().clone()))
            .collect(),
    )
}

fn herm_op(layout: SubsystemLayout, m: Mat<c64>) -> HermitianOperator {
    HermitianOperator::from_hermitian_part(layout, m).expect("side matches layout")
}

/// Solves `p` with explicit options.
pub fn solve_with(p: &ConicProgram, opts: &SolverOptions) -> Solution {
    let start = Instant::now();
    let embedded;
    let target = match opts.embedding {
        Embedding::Complex => p,
        Embedding::Real => {
            embedded = real_embedding(p);
            &embedded
        }
    };
    let low = lower(target, opts.embedding == Embedding::Complex);
    let sign = match p.sense() {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };

    let failure = |status: Status, direction: Direction| {
        let (psd_duals, eq_duals) = zero_duals(target);
        let values = zero_values(p);
        let (psd_violation, eq_residual) = residuals(p, &values);
        Solution {
            status,
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            gap: f64::NAN,
            values,
            psd_duals,
            eq_duals,
            psd_violation,
            eq_residual,
            iterations: 0,
            direction,
            newton_size: 0,
            seconds: start.elapsed().as_secs_f64(),
        }
    };

    let eq_rows: Vec<(Vec<(usize, f64)>, f64)> = low
        .eq_rows
        .iter()
        .map(|r| (r.coeffs.clone(), r.rhs))
        .collect();
    let kept_eq = match independent_rows(&eq_rows, low.n_params) {
        Reduced::Kept(k) => k,
        Reduced::Inconsistent => return failure(Status::Infeasible, Direction::Lmi),
    };
    let (lmi_size, std_size) = newton_sizes(&low, kept_eq.len());
    let direction = opts.direction.unwrap_or(if std_size < lmi_size {
        Direction::Standard
    } else {
        Direction::Lmi
    });
    let compiled = match direction {
        Direction::Lmi => compile_lmi(&low, kept_eq),
        Direction::Standard => match compile_standard(&low, kept_eq) {
            Some(c) => c,
            None => return failure(Status::Unbounded, Direction::Standard),
        },
    };
    let newton_size = compiled.core.m() + compiled.core.p();
    let res = ipm::solve(
        &compiled.core,
        ipm::IpmSettings {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    );

    // Map the core iterate back to program coordinates.
    let mut theta = vec![0.0; low.n_params];
    let eq_count = target.eq_constraints().len();
    let mut eq_coords: Vec<Vec<f64>> = low.eq_sides.iter().map(|s| vec![0.0; s * s]).collect();
    let mut psd_mats: Vec<Mat<c64>> = Vec::with_capacity(low.psd.len());
    let dual_bound = match compiled.direction {
        Direction::Lmi => {
            theta.copy_from_slice(&res.y);
            for (col, &i) in compiled.kept_eq.iter().enumerate() {
                let r = &low.eq_rows[i];
                eq_coords[r.constraint][r.ggm_index] = res.w[col];
            }
            for j in 0..low.psd.len() {
                psd_mats.push(res.x[j].clone());
            }
            res.pobj
        }
        Direction::Standard => {
            for (v, blk) in compiled.cone_block.iter().enumerate() {
                if let Some(b) = blk {
                    let coords = low.bases[v].coords(&res.x[*b]);
                    let off = low.offsets[v];
                    theta[off..off + coords.len()].copy_from_slice(&coords);
                }
            }
            let mut coord_of_free = vec![0; compiled.free_index.len()];
            for (k, fi) in compiled.free_index.iter().enumerate() {
                if let Some(fi) = fi {
                    coord_of_free[*fi] = k;
                }
            }
            for (col, &fi) in compiled.kept_free.iter().enumerate() {
                theta[coord_of_free[fi]] = res.w[col];
            }
            for (row, &i) in compiled.kept_eq.iter().enumerate() {
                let r = &low.eq_rows[i];
                eq_coords[r.constraint][r.ggm_index] = res.y[row];
            }
            for j in 0..low.psd.len() {
                psd_mats.push(res.z[compiled.psd_block[j]].clone());
            }
            -res.dobj
        }
    };

    let values: Vec<HermitianOperator> = p
        .variables()
        .iter()
        .enumerate()
        .map(|(v, var)| {
            let off = low.offsets[v];
            let n = low.bases[v].len();
            herm_op(var.layout.clone(), low.bases[v].matrix(&theta[off..off + n]))
        })
        .collect();
    let psd_duals = target
        .psd_constraints()
        .iter()
        .zip(psd_mats)
        .map(|(c, m)| herm_op(c.expr.layout().clone(), m))
        .collect();
    let eq_duals = (0..eq_count)
        .map(|i| {
            let c = &target.eq_constraints()[i];
            let hb = compile::HermBasis::new(low.eq_sides[i]);
            herm_op(c.expr.layout().clone(), hb.ggm_matrix(&eq_coords[i]))
        })
        .collect();

    let primal_value = p.objective_value(&values);
    let dual_value = sign * (dual_bound + low.objective_const);
    let gap = (primal_value - dual_value).abs();
    let (psd_violation, eq_residual) = residuals(p, &values);

    let status = match (res.outcome, compiled.direction) {
        (IpmOutcome::PrimalInfeasible, Direction::Lmi) => Status::Unbounded,
        (IpmOutcome::DualInfeasible, Direction::Lmi) => Status::Infeasible,
        (IpmOutcome::PrimalInfeasible, Direction::Standard) => Status::Infeasible,
        (IpmOutcome::DualInfeasible, Direction::Standard) => Status::Unbounded,
        _ => {
            if gap <= GAP_TOL * primal_value.abs().max(1.0)
                && psd_violation >= -PSD_TOL
                && eq_residual <= EQ_TOL
            {
                Status::Optimal
            } else {
                Status::NumericalTrouble
            }
        }
    };

    Solution {
        status,
        primal_value,
        dual_value,
        gap,
        values,
        psd_duals,
        eq_duals,
        psd_violation,
        eq_residual,
        iterations: res.iterations,
        direction: compiled.direction,
        newton_size,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Worst PSD eigenvalue and worst equality entry of `p` at `values`.
pub fn residuals(p: &ConicProgram, values: &[HermitianOperator]) -> (f64, f64) {
    let psd = p
        .psd_constraints()
        .iter()
        .map(|c| c.expr.eval(values).min_eigenvalue())
        .fold(f64::INFINITY, f64::min);
    let eq = p
        .eq_constraints()
        .iter()
        .map(|c| c.expr.eval(values).max_abs_entry())
        .fold(0.0, f64::max);
    (psd, eq)
}

/// Largest `|<slack_j, multiplier_j>|` over the PSD constraints of an
/// optimal solution.
pub fn complementary_slackness(p: &ConicProgram, sol: &Solution) -> f64 {
    p.psd_constraints()
        .iter()
        .zip(&sol.psd_duals)
        .map(|(c, d)| {
            let s = c.expr.eval(&sol.values);
            if s.side() == d.side() {
                s.inner(&d.with_layout(s.layout().clone()).expect("same side"))
                    .expect("same layout")
                    .abs()
            } else {
                // Multipliers of an embedded constraint live on twice the side.
                let e = c.expr.real_embedding().eval(&sol.values);
                e.inner(d).map(|x| x.abs()).unwrap_or(f64::NAN)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{epr_projector, SubsystemLayout};

    fn both_directions(p: &ConicProgram) -> Vec<Solution> {
        [Direction::Lmi, Direction::Standard]
            .into_iter()
            .flat_map(|d| {
                [Embedding::Complex, Embedding::Real].into_iter().map(move |e| {
                    solve_with(
                        p,
                        &SolverOptions {
                            direction: Some(d),
                            embedding: e,
                            ..SolverOptions::default()
                        },
                    )
                })
            })
            .collect()
    }

    #[test]
    fn trace_above_identity() {
        let lay = SubsystemLayout::single("A", 2);
        let mut p = ConicProgram::new("t");
        let x = p.hermitian("X", lay.clone());
        p.add_le("X >= 1", Expr::identity(lay, 1.0), p.var(x)).unwrap();
        p.minimize(p.var(x).trace()).unwrap();
        for sol in both_directions(&p) {
            assert_eq!(sol.status, Status::Optimal, "{:?}", sol.direction);
            assert!((sol.primal_value - 2.0).abs() < 1e-6);
            assert!(complementary_slackness(&p, &sol) < 1e-6);
        }
    }

    #[test]
    fn ppt_overlap_with_epr_pair() {
        let lay = SubsystemLayout::new([("A", 2), ("B", 2)]).unwrap();
        let mut p = ConicProgram::new("ppt");
        let s = p.psd_variable("sigma", lay.clone());
        p.add_psd("sigma^TA >= 0", p.var(s).ptranspose(&["A"]).unwrap())
            .unwrap();
        p.add_eq_between("Tr sigma = 1", p.var(s).trace(), Expr::scalar(1.0))
            .unwrap();
        let phi = epr_projector("A", "B", 2).unwrap();
        p.maximize(p.var(s).inner(&phi).unwrap()).unwrap();
        for sol in both_directions(&p) {
            assert_eq!(sol.status, Status::Optimal, "{:?}", sol.direction);
            assert!((sol.primal_value - 0.5).abs() < 1e-6);
            assert!((sol.dual_value - 0.5).abs() < 1e-6);
            assert!(complementary_slackness(&p, &sol) < 1e-6);
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lay = SubsystemLayout::scalar();
        let mut p = ConicProgram::new("inf");
        let x = p.hermitian("x", lay);
        p.add_psd("x >= 1", p.var(x) - Expr::scalar(1.0)).unwrap();
        p.add_psd("-x >= 1", -p.var(x) - Expr::scalar(1.0)).unwrap();
        for sol in both_directions(&p) {
            assert_eq!(sol.status, Status::Infeasible, "{:?}", sol.direction);
        }
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = ConicProgram::new("inf-eq");
        let x = p.scalar("x");
        p.add_eq_between("x = 1", p.var(x), Expr::scalar(1.0)).unwrap();
        p.add_eq_between("2x = 3", 2.0 * p.var(x), Expr::scalar(3.0))
            .unwrap();
        p.maximize(p.var(x)).unwrap();
        assert_eq!(solve(&p).status, Status::Infeasible);
    }

    #[test]
    fn unbounded_objective_is_detected() {
        let mut p = ConicProgram::new("unb");
        let x = p.nonneg_scalar("x");
        p.maximize(p.var(x)).unwrap();
        for sol in both_directions(&p) {
            assert_eq!(sol.status, Status::Unbounded, "{:?}", sol.direction);
        }
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let lay = SubsystemLayout::new([("A", 2), ("B", 2)]).unwrap();
        let mut p = ConicProgram::new("redundant");
        let s = p.psd_variable("sigma", lay.clone());
        p.add_eq_between(
            "marginal",
            p.var(s).ptrace(&["B"]).unwrap(),
            Expr::identity(SubsystemLayout::single("A", 2), 0.5),
        )
        .unwrap();
        p.add_eq_between("trace", p.var(s).trace(), Expr::scalar(1.0))
            .unwrap();
        let phi = epr_projector("A", "B", 2).unwrap();
        p.maximize(p.var(s).inner(&phi).unwrap()).unwrap();
        for sol in both_directions(&p) {
            assert_eq!(sol.status, Status::Optimal);
            assert!((sol.primal_value - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn objective_recomputes_from_values() {
        let lay = SubsystemLayout::new([("A", 2), ("B", 2)]).unwrap();
        let mut p = ConicProgram::new("ppt");
        let s = p.psd_variable("sigma", lay);
        p.add_psd("sigma^TA >= 0", p.var(s).ptranspose(&["A"]).unwrap())
            .unwrap();
        p.add_eq_between("Tr sigma = 1", p.var(s).trace(), Expr::scalar(1.0))
            .unwrap();
        let phi = epr_projector("A", "B", 2).unwrap();
        p.maximize(p.var(s).inner(&phi).unwrap()).unwrap();
        let sol = solve(&p);
        let v = sol.value(s).inner(&phi).unwrap();
        assert!((v - sol.primal_value).abs() < 1e-8);
    }
}
