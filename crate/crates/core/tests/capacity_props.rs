//! Soundness of the capacity bounds and audits of the nonlinear programs.

use proptest::prelude::*;
use qbc::capacity::{
    error_floor, g_program_residual, gamma, gamma_dual_only, h_program_residual, one_shot_enumerate,
    solve_h_hat, solve_relaxation, solve_relaxation_with, strong_converse_residual, HPoint, MarginalRule,
    Relaxation,
};
use qbc::channels::{
    amplitude_damping_env, identity, random_qubit_broadcast, replacer, BroadcastChannel, BOB, CHARLIE, IN,
};
use qbc::fidelity::{solve_fidelity_full, CodeClass, TwirledBlocks};
use qbc::random::Rng;
use qbc::sdp::{solve, ConicProgram, Expr};
use qbc::tensor::{HermitianOperator, SubsystemLayout};

const TOL: f64 = 1e-6;

fn test_channels() -> Vec<BroadcastChannel> {
    vec![
        identity(2).unwrap(),
        replacer(2, 2, 2).unwrap(),
        amplitude_damping_env(0.3).unwrap(),
        random_qubit_broadcast(&mut Rng::seed(8)),
    ]
}

#[test]
fn enumeration_never_beats_a_bound() {
    for n in test_channels() {
        let q_gamma = gamma(&n).unwrap().q_gamma_bits;
        for eps in [0.0, 0.1, 0.25] {
            let bounds: Vec<f64> = Relaxation::ALL
                .iter()
                .map(|&w| solve_relaxation(&n, eps, w).unwrap().bound_bits)
                .collect();
            let converse = q_gamma - (1.0 - eps).log2();
            for class in CodeClass::ALL {
                let q1 = one_shot_enumerate(&n, eps, class, 2).unwrap().q1_sum;
                assert!(q1 <= converse + TOL, "{} eps={eps} {class}: {q1} > {converse}", n.name());
                // The relaxations use the no-signalling marginals, so they
                // say nothing about PPT codes that signal between receivers.
                if class == CodeClass::Ppt {
                    continue;
                }
                for (b, w) in bounds.iter().zip(Relaxation::ALL) {
                    assert!(q1 <= b + TOL, "{} eps={eps} {class}: {q1} > {w} {b}", n.name());
                }
            }
        }
    }
}

#[test]
fn gamma_primal_and_dual_agree() {
    for n in test_channels() {
        let g = gamma(&n).unwrap();
        let p = g.primal_value.unwrap();
        assert!((p - g.dual_value).abs() <= TOL * p.max(1.0), "{}: {p} vs {}", n.name(), g.dual_value);
        let dual = gamma_dual_only(&n).unwrap();
        assert!((dual.gamma - g.gamma).abs() <= TOL);
    }
}

#[test]
fn hat_iterates_never_loosen() {
    for n in test_channels() {
        for eps in [0.0, 0.1] {
            let r = solve_h_hat(&n, eps).unwrap();
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0] + TOL, "{} eps={eps}: {:?}", n.name(), r.history);
            }
        }
    }
}

/// With the marginal constants exactly as first displayed, the `h~`
/// program cannot be satisfied even by the identity channel.
#[test]
fn displayed_marginal_rule_is_infeasible() {
    let id = identity(2).unwrap();
    assert!(solve_relaxation_with(&id, 0.0, Relaxation::HTilde, MarginalRule::Displayed).is_err());
    let derived = solve_relaxation_with(&id, 0.0, Relaxation::HTilde, MarginalRule::Derived).unwrap();
    assert!(derived.bound_bits >= 1.0 - TOL);
}

/// Smallest `S^{A'}` with `|Lambda^{T_BC}| <= S ⊗ 1`.
fn tightest_s(lambda: &HermitianOperator) -> HermitianOperator {
    let lay = lambda.layout().clone();
    let mut p = ConicProgram::new("audit-s");
    let s = p.hermitian("S", SubsystemLayout::single(IN, lay.dim_of(IN).unwrap()));
    let x = Expr::constant(&lambda.ptranspose(&[BOB, CHARLIE]).unwrap());
    p.add_abs_le("|Lambda^T_BC| <= S", x, p.var(s).expand_to(&lay).unwrap()).unwrap();
    p.minimize(p.var(s).trace()).unwrap();
    let sol = solve(&p);
    assert!(sol.is_optimal());
    sol.value(s).clone()
}

fn audit_point(n: &BroadcastChannel, r1: usize, r2: usize) -> (TwirledBlocks, f64) {
    let r = solve_fidelity_full(n, r1, r2, CodeClass::NsPpt).unwrap();
    (r.blocks, r.value)
}

/// The optimal NS∩PPT code supplies a point of each nonlinear program.
#[test]
fn optimal_codes_satisfy_the_nonlinear_programs() {
    for n in test_channels() {
        for (r1, r2) in [(2, 1), (1, 2), (2, 2)] {
            let (b, f) = audit_point(&n, r1, r2);
            let eps = (1.0 - f).max(0.0) + 1e-7;
            let m = 1.0 / (r1 * r2) as f64;
            let s = tightest_s(&b.e1);
            let g = g_program_residual(&n, eps, &b.e1, &b.rho, &s, m).unwrap();
            assert!(g.holds(1e-6), "{} ({r1},{r2}) g: {g:?}", n.name());
            let sc = strong_converse_residual(&n, eps, &b.e1, &b.rho, m).unwrap();
            assert!(sc.holds(1e-6), "{} ({r1},{r2}) converse: {sc:?}", n.name());
            let lay = b.e1.layout().clone();
            let zero = HermitianOperator::zeros(lay);
            let e2 = b.e2.clone().unwrap_or_else(|| zero.clone());
            let e3 = b.e3.clone().unwrap_or(zero);
            let point = HPoint {
                e1: b.e1.clone(),
                s2: e2.ptrace(&[CHARLIE]).unwrap().scale((r2 * r2) as f64 - 1.0),
                s3: e3.ptrace(&[BOB]).unwrap().scale((r1 * r1) as f64 - 1.0),
                rho: b.rho.clone(),
                s,
            };
            let h = h_program_residual(&n, eps, &point, (r1, r2), MarginalRule::Derived).unwrap();
            assert!(h.holds(1e-6), "{} ({r1},{r2}) h: {h:?}", n.name());
            if r1 > 1 && r2 > 1 {
                let shown = h_program_residual(&n, eps, &point, (r1, r2), MarginalRule::Displayed).unwrap();
                assert!(!shown.holds(1e-6), "{} ({r1},{r2}) displayed rule unexpectedly holds", n.name());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn error_floor_is_a_probability(q in 0.0f64..3.0, n in 1u32..40, r1 in 0.0f64..3.0, r2 in 0.0f64..3.0) {
        let f = error_floor(q, n, r1, r2).unwrap();
        prop_assert!((0.0..1.0).contains(&f));
        if r1 + r2 <= q {
            prop_assert_eq!(f, 0.0);
        }
    }
}
