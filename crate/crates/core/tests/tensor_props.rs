//! Property tests for the tensor algebra.

use proptest::prelude::*;
use qbc::random::{random_complex_matrix, random_hermitian, Rng};
use qbc::tensor::{kron, max_entangled, HermitianOperator, SubsystemLayout};

fn layout3(d: [usize; 3]) -> SubsystemLayout {
    SubsystemLayout::new([("X", d[0]), ("Y", d[1]), ("Z", d[2])]).unwrap()
}

fn dims3() -> impl Strategy<Value = [usize; 3]> {
    [1usize..=3, 1usize..=3, 1usize..=3]
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn subsets() -> Vec<Vec<&'static str>> {
    vec![
        vec!["X"],
        vec!["Y"],
        vec!["Z"],
        vec!["X", "Y"],
        vec!["X", "Z"],
        vec!["Y", "Z"],
        vec!["X", "Y", "Z"],
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_trace_keeps_trace(seed: u64, d in dims3(), pick in 0usize..6) {
        let x = random_hermitian(&mut Rng::seed(seed), layout3(d));
        let drop = &subsets()[pick];
        let y = x.ptrace(drop).unwrap();
        prop_assert!((y.trace() - x.trace()).abs() <= 1e-12 * (1.0 + x.trace().abs()));
    }

    #[test]
    fn full_partial_transpose_keeps_spectrum(seed: u64, d in dims3()) {
        let x = random_hermitian(&mut Rng::seed(seed), layout3(d));
        let y = x.ptranspose(&["X", "Y", "Z"]).unwrap();
        for (a, b) in sorted(x.eigenvalues()).iter().zip(sorted(y.eigenvalues())) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        prop_assert!(y.sub(&x.transpose()).unwrap().max_abs_entry() <= 1e-15);
    }

    #[test]
    fn trace_and_transpose_commute_on_disjoint_sets(seed: u64, d in dims3(), pick in 0usize..3) {
        let x = random_hermitian(&mut Rng::seed(seed), layout3(d));
        let labels = ["X", "Y", "Z"];
        let traced = labels[pick];
        let others: Vec<&str> = labels.iter().copied().filter(|l| *l != traced).collect();
        for k in 0..others.len() {
            let t = &others[k..=k];
            let a = x.ptrace(&[traced]).unwrap().ptranspose(t).unwrap();
            let b = x.ptranspose(t).unwrap().ptrace(&[traced]).unwrap();
            prop_assert!(a.sub(&b).unwrap().max_abs_entry() <= 1e-12);
        }
    }

    #[test]
    fn permute_then_restore_is_identity(seed: u64, d in dims3()) {
        let x = random_hermitian(&mut Rng::seed(seed), layout3(d));
        let y = x.permute(&["Z", "X", "Y"]).unwrap().permute(&["X", "Y", "Z"]).unwrap();
        prop_assert_eq!(y.sub(&x).unwrap().max_abs_entry(), 0.0);
    }

    #[test]
    fn tensor_then_trace_recovers_factor(seed: u64, d in dims3()) {
        let mut rng = Rng::seed(seed);
        let a = random_hermitian(&mut rng, SubsystemLayout::single("X", d[0]));
        let b = qbc::random::random_density(&mut rng, SubsystemLayout::single("Y", d[1]));
        let back = a.tensor(&b).unwrap().ptrace(&["Y"]).unwrap();
        prop_assert!(back.sub(&a).unwrap().max_abs_entry() <= 1e-12);
    }
}

/// `(X ⊗ 1)|Φ> = (1 ⊗ Xᵀ)|Φ>` for an unnormalized maximally entangled `Φ`.
#[test]
fn transpose_trick_on_random_matrices() {
    let mut rng = Rng::seed(41);
    let d = 4;
    let phi = max_entangled(d, false).unwrap();
    let one = faer::Mat::<faer::c64>::identity(d, d);
    for _ in 0..100 {
        let x = random_complex_matrix(&mut rng, d, d);
        let lhs = phi.apply(&kron(&x, &one)).unwrap();
        let rhs = phi.apply(&kron(&one, &x.transpose().to_owned())).unwrap();
        let worst = lhs
            .amplitudes()
            .iter()
            .zip(rhs.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "transpose trick off by {worst:e}");
    }
}

#[test]
fn identity_trace_is_dimension() {
    let x = HermitianOperator::identity(layout3([2, 3, 2]));
    assert_eq!(x.trace(), 12.0);
    assert_eq!(x.ptrace(&["Y"]).unwrap().trace(), 12.0);
}
