//! Structural properties of the channel-fidelity programs.

use proptest::prelude::*;
use qbc::channels::{
    amplitude_damping_env, dephasing, depolarizing, erasure, identity, random_qubit_broadcast, replacer,
    BroadcastChannel,
};
use qbc::fidelity::{
    solve_fidelity, solve_fidelity_full, twirl_code_choi, twirl_projection, CodeClass, FidelityForm,
};
use qbc::oracle::{code_choi_from_pair, induced_fidelity, random_pair, CodeChoi};
use qbc::random::{random_hermitian, Rng};

const TOL: f64 = 1e-6;

fn test_channels() -> Vec<BroadcastChannel> {
    let mut rng = Rng::seed(12);
    vec![
        identity(2).unwrap(),
        replacer(2, 2, 2).unwrap(),
        depolarizing(0.2).unwrap(),
        dephasing(0.3).unwrap(),
        erasure(0.25).unwrap(),
        amplitude_damping_env(0.3).unwrap(),
        random_qubit_broadcast(&mut rng),
        random_qubit_broadcast(&mut rng),
    ]
}

fn value(n: &BroadcastChannel, r1: usize, r2: usize, class: CodeClass) -> f64 {
    solve_fidelity_full(n, r1, r2, class).unwrap().value
}

#[test]
fn intersection_is_below_each_class() {
    for n in test_channels() {
        for (r1, r2) in [(2, 1), (1, 2), (2, 2)] {
            let both = value(&n, r1, r2, CodeClass::NsPpt);
            let ns = value(&n, r1, r2, CodeClass::Ns);
            let ppt = value(&n, r1, r2, CodeClass::Ppt);
            assert!(both <= ns + TOL && both <= ppt + TOL, "{} ({r1},{r2}): {both} {ns} {ppt}", n.name());
        }
    }
}

#[test]
fn larger_codes_are_harder() {
    for n in test_channels() {
        for class in CodeClass::ALL {
            let f11 = value(&n, 1, 1, class);
            let f21 = value(&n, 2, 1, class);
            let f31 = value(&n, 3, 1, class);
            let f12 = value(&n, 1, 2, class);
            let f22 = value(&n, 2, 2, class);
            assert!((f11 - 1.0).abs() <= TOL, "{} {class}: f(1,1) = {f11}", n.name());
            assert!(f31 <= f21 + TOL && f21 <= f11 + TOL, "{} {class}", n.name());
            assert!(f22 <= f12 + TOL && f22 <= f21 + TOL, "{} {class}", n.name());
        }
    }
}

#[test]
fn solved_blocks_respect_causality_and_recompute_the_value() {
    for n in test_channels() {
        for class in CodeClass::ALL {
            for (r1, r2) in [(2, 1), (1, 2), (2, 2)] {
                let r = solve_fidelity_full(&n, r1, r2, class).unwrap();
                let b = &r.blocks;
                assert!(b.causality_margin() >= -1e-7, "{} {class}: {}", n.name(), b.causality_margin());
                assert!((b.fidelity(&n) - r.value).abs() <= 1e-8, "{} {class}", n.name());
                assert_eq!(b.e2.is_none(), r2 == 1);
                assert_eq!(b.e3.is_none(), r1 == 1);
            }
        }
    }
}

/// With `r2 = 1` a no-signalling code cannot let Charlie's share reach Bob,
/// so the value equals that of Bob's marginal channel and never exceeds the
/// value with merged receivers.
#[test]
fn trivial_second_message_reduces_to_point_to_point() {
    for n in test_channels() {
        for class in CodeClass::ALL {
            let bc = value(&n, 2, 1, class);
            let merged = value(&n.merged(), 2, 1, class);
            assert!(bc <= merged + TOL, "{} {class}: {bc} > merged {merged}", n.name());
            if class != CodeClass::Ppt {
                let bob = value(&n.bob_marginal(), 2, 1, class);
                assert!((bc - bob).abs() <= TOL, "{} {class}: {bc} vs Bob marginal {bob}", n.name());
            }
        }
    }
}

#[test]
fn relaxation_dominates_the_full_value() {
    let mut rng = Rng::seed(31);
    for _ in 0..10 {
        let n = random_qubit_broadcast(&mut rng);
        for (r1, r2) in [(2, 1), (2, 2)] {
            let full = value(&n, r1, r2, CodeClass::NsPpt);
            let relaxed = solve_fidelity(&n, r1, r2, CodeClass::Ns, FidelityForm::Relaxed).unwrap().value;
            assert!(relaxed >= full - TOL, "({r1},{r2}): relaxed {relaxed} < full {full}");
        }
    }
    let rep = replacer(2, 2, 2).unwrap();
    let relaxed = solve_fidelity(&rep, 2, 2, CodeClass::Ns, FidelityForm::Relaxed).unwrap().value;
    assert!(relaxed >= 1.0 / 16.0 - TOL);
    let id = identity(2).unwrap();
    let relaxed = solve_fidelity(&id, 2, 1, CodeClass::Ns, FidelityForm::Relaxed).unwrap().value;
    assert!((relaxed - 1.0).abs() <= TOL);
}

#[test]
fn reduced_form_needs_no_class() {
    let n = amplitude_damping_env(0.5).unwrap();
    let a = solve_fidelity(&n, 2, 2, CodeClass::Ns, FidelityForm::Reduced).unwrap().value;
    let b = value(&n, 2, 2, CodeClass::Ns);
    assert!((a - b).abs() <= TOL);
    assert!(solve_fidelity(&n, 2, 2, CodeClass::Ns, FidelityForm::Fm).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn twirl_is_idempotent_and_keeps_fidelity(seed: u64, r1 in 1usize..=2, r2 in 1usize..=2) {
        let mut rng = Rng::seed(seed);
        let n = random_qubit_broadcast(&mut rng);
        let lay = qbc::fidelity::code_layout(r1, r2, &n.choi().layout().clone()).unwrap();
        let z = random_hermitian(&mut rng, lay);
        let once = twirl_projection(&z, r1, r2).unwrap();
        let twice = twirl_projection(&once, r1, r2).unwrap();
        prop_assert!(once.sub(&twice).unwrap().max_abs_entry() <= 1e-12);
        let f = |x| induced_fidelity(&CodeChoi::new(x, r1, r2).unwrap(), &n).unwrap();
        prop_assert!((f(z.clone()) - f(once.clone())).abs() <= 1e-10);
    }

    /// For a genuine code the causality relation fixes `E4`, so the blocks
    /// rebuild the projected Choi matrix.
    #[test]
    fn blocks_rebuild_the_twirl_of_a_code(seed: u64, r1 in 1usize..=2, r2 in 1usize..=2) {
        let mut rng = Rng::seed(seed);
        let dims = qbc::channels::Dims { a: 2, b: 2, c: 2 };
        let code = code_choi_from_pair(&random_pair(&mut rng, r1, r2, dims, 2).unwrap()).unwrap();
        let once = twirl_projection(&code.z, r1, r2).unwrap();
        let blocks = twirl_code_choi(&code.z, r1, r2).unwrap();
        if r1 == 1 || r2 == 1 {
            // Without E4 the causality relation holds with equality.
            prop_assert!(blocks.causality_margin().abs() <= 1e-9);
        }
        prop_assert!(blocks.twirled_choi().unwrap().sub(&once).unwrap().max_abs_entry() <= 1e-10);
    }
}
