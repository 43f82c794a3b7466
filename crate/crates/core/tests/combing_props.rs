//! Properties of the PPT combing program.

use qbc::channels::{BOB, CHARLIE, IN};
use qbc::combing::{ppt_combing_fidelity, validate_combing_choi, COMBING_CHECK_TOL};
use qbc::random::{haar_unitary, random_density, Rng};
use qbc::tensor::{kron, HermitianOperator, SubsystemLayout};

fn layout(a: usize, b: usize, c: usize) -> SubsystemLayout {
    SubsystemLayout::new([(IN, a), (BOB, b), (CHARLIE, c)]).unwrap()
}

#[test]
fn returned_combs_are_ppt_and_normalized() {
    let mut rng = Rng::seed(1);
    for (r1, r2, c) in [(2, 1, 1), (2, 1, 2), (2, 2, 1)] {
        let rho = random_density(&mut rng, layout(2, 2, c));
        let res = ppt_combing_fidelity(&rho, r1, r2).unwrap();
        let v = validate_combing_choi(&res.choi).unwrap();
        assert!(v.is_valid(), "({r1},{r2}): {v:?}");
        assert!(v.min_eigenvalue >= -COMBING_CHECK_TOL && v.tp_deviation <= COMBING_CHECK_TOL);
        assert!((0.0..=1.0 + 1e-6).contains(&res.fidelity));
    }
}

#[test]
fn local_unitaries_on_the_receivers_do_not_matter() {
    let mut rng = Rng::seed(2);
    let rho = random_density(&mut rng, layout(2, 2, 2));
    let base = ppt_combing_fidelity(&rho, 2, 1).unwrap().fidelity;
    let one = faer::Mat::<faer::c64>::identity(2, 2);
    for _ in 0..5 {
        let u = kron(&one, &kron(&haar_unitary(&mut rng, 2), &haar_unitary(&mut rng, 2)));
        let rotated = rho.conjugate_by(&u).unwrap();
        let f = ppt_combing_fidelity(&rotated, 2, 1).unwrap().fidelity;
        assert!((f - base).abs() <= 1e-6, "{f} vs {base}");
    }
}

/// Product inputs are PPT across `A' | BC`, so the fidelity cannot exceed
/// `1 / (r1 r2)`.
#[test]
fn ppt_inputs_respect_the_cap() {
    let mut rng = Rng::seed(3);
    for (r1, r2, c, samples) in [(2, 1, 2, 3), (2, 2, 1, 1)] {
        for _ in 0..samples {
            let mut acc = HermitianOperator::zeros(layout(2, 2, c));
            for _ in 0..3 {
                let a = random_density(&mut rng, SubsystemLayout::single(IN, 2));
                let bc = random_density(&mut rng, SubsystemLayout::new([(BOB, 2), (CHARLIE, c)]).unwrap());
                acc = acc.add(&a.tensor(&bc).unwrap().scale(1.0 / 3.0)).unwrap();
            }
            let f = ppt_combing_fidelity(&acc, r1, r2).unwrap().fidelity;
            assert!(f <= 1.0 / (r1 * r2) as f64 + 1e-6, "({r1},{r2}): {f}");
        }
    }
}

#[test]
fn oversized_inputs_are_rejected() {
    let rho = HermitianOperator::identity(layout(4, 4, 2)).scale(1.0 / 32.0);
    assert!(ppt_combing_fidelity(&rho, 2, 2).is_err());
    let not_a_state = HermitianOperator::identity(layout(2, 2, 1));
    assert!(ppt_combing_fidelity(&not_a_state, 2, 1).is_err());
}
