// One-shot sum-capacity by enumeration next to its SDP upper bounds.
//
// Run with `cargo run --example one_shot_bounds`.

use qbc::capacity::{compute_chain, one_shot_enumerate, solve_relaxation, Relaxation};
use qbc::channels::amplitude_damping_env;
use qbc::fidelity::CodeClass;
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = amplitude_damping_env(0.3)?;
    let eps = 0.1;

    let grid = one_shot_enumerate(&n, eps, CodeClass::NsPpt, 2)?;
    for p in &grid.grid {
        println!("({},{}) fidelity {:.6} feasible {}", p.r1, p.r2, p.fidelity, p.feasible);
    }
    println!("Q1 = {} bits, Pareto pairs {:?}", grid.q1_sum, grid.pareto_pairs);

    for which in Relaxation::ALL {
        let r = solve_relaxation(&n, eps, which)?;
        println!("{which}: {:.6} bits after {} solve(s)", r.bound_bits, r.iterations);
    }

    let chain = compute_chain(&n, eps)?;
    println!("first chain  Q1 <= h^ <= h~ <= g~: {:.4?}", chain.first_chain());
    println!("second chain Q1 <= h^ <= g^ <= g~: {:.4?}", chain.second_chain());
    println!("converse Q_Gamma - log2(1 - eps) = {:.4}", chain.converse);
    println!("violations: {:?}", chain.violations);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
