// Explicit encoder and decoder pairs checked against the SDP optimum.
//
// Run with `cargo run --example explicit_codes`.

use qbc::channels::amplitude_damping_env;
use qbc::fidelity::{solve_fidelity_full, CodeClass};
use qbc::oracle::{
    code_choi_from_pair, induced_fidelity, random_pair, random_unassisted_pair, simulated_fidelity, verify_ns,
};
use qbc::random::Rng;
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = amplitude_damping_env(0.3)?;
    let (r1, r2) = (2, 1);
    let optimum = solve_fidelity_full(&n, r1, r2, CodeClass::NsPpt)?.value;
    let mut rng = Rng::seed(2);

    let mut best: f64 = 0.0;
    for _ in 0..200 {
        let code = code_choi_from_pair(&random_unassisted_pair(&mut rng, r1, r2, n.dims())?)?;
        best = best.max(induced_fidelity(&code, &n)?);
    }
    println!("best of 200 random unassisted codes {best:.6} <= NS ∩ PPT optimum {optimum:.6}");

    let pair = random_unassisted_pair(&mut rng, r1, r2, n.dims())?;
    let code = code_choi_from_pair(&pair)?;
    println!(
        "Choi fidelity {:.12} matches simulated fidelity {:.12}",
        induced_fidelity(&code, &n)?,
        simulated_fidelity(&pair, &n)?
    );
    println!("unassisted code satisfies all six NS conditions: {}", verify_ns(&code)?.all());

    // Forward assistance carries the message through R, so the code
    // signals from Alice while staying causal.
    let assisted = code_choi_from_pair(&random_pair(&mut rng, r1, r2, n.dims(), 2)?)?;
    let report = verify_ns(&assisted)?;
    println!("assisted code: A->BC residual {:.3}, BC->A residual {:.1e}", report.a_to_bc, report.bc_to_a);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
