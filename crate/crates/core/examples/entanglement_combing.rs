// PPT-preserving combing of a tripartite state into EPR pairs.
//
// Run with `cargo run --example entanglement_combing`.

use qbc::channels::{amplitude_damping_env, random_qubit_broadcast, BOB, CHARLIE, IN};
use qbc::combing::{check_code_from_combing, ppt_combing_fidelity, teleport_sim_identity};
use qbc::random::{random_density, Rng};
use qbc::tensor::{epr_projector, HermitianOperator, SubsystemLayout};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let trivial_c = HermitianOperator::identity(SubsystemLayout::single(CHARLIE, 1));
    let bell = epr_projector(IN, BOB, 2)?.tensor(&trivial_c)?;
    let mixed = HermitianOperator::identity(SubsystemLayout::new([(IN, 2), (BOB, 2), (CHARLIE, 1)])?).scale(0.25);
    for (name, rho) in [("Bell pair", &bell), ("maximally mixed", &mixed)] {
        let r = ppt_combing_fidelity(rho, 2, 1)?;
        let v = r.validate()?;
        println!("{name}: fidelity {:.6}, comb valid {}", r.fidelity, v.is_valid());
    }

    let n = amplitude_damping_env(0.3)?;
    let c = check_code_from_combing(&n, 2, 1)?;
    println!(
        "{}: PPT code fidelity {:.6} >= combing fidelity of its Choi state {:.6}",
        n.name(),
        c.code_fidelity,
        c.combing_fidelity
    );

    let mut rng = Rng::seed(4);
    let random = random_qubit_broadcast(&mut rng);
    let rho = random_density(&mut rng, SubsystemLayout::single(IN, 2));
    println!("teleportation simulation residual: {:.1e}", teleport_sim_identity(&random, &rho)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
