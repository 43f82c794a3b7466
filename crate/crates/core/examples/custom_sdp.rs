// Using the conic program model directly.
//
// Maximizes the overlap of a PPT two-qubit state with the EPR pair, whose
// optimum is 1/2.
//
// Run with `cargo run --example custom_sdp`.

use qbc::sdp::{solve, ConicProgram, Expr};
use qbc::tensor::{epr_projector, SubsystemLayout};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let lay = SubsystemLayout::new([("A", 2), ("B", 2)])?;
    let mut p = ConicProgram::new("ppt overlap");
    let rho = p.psd_variable("rho", lay);
    p.add_psd("rho^T_B >= 0", p.var(rho).ptranspose(&["B"])?)?;
    p.add_eq_between("Tr rho = 1", p.var(rho).trace(), Expr::scalar(1.0))?;
    p.maximize(p.var(rho).inner(&epr_projector("A", "B", 2)?)?)?;

    let sol = solve(&p);
    println!(
        "status {:?}, value {:.9}, gap {:.1e}, {} iterations",
        sol.status, sol.primal_value, sol.gap, sol.iterations
    );
    let opt = sol.value(rho);
    println!("optimal state: trace {:.6}, min eigenvalue {:.2e}", opt.trace(), opt.min_eigenvalue());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
