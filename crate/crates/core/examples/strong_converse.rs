// The strong-converse quantity Gamma, its additivity and the error floor.
//
// Run with `cargo run --example strong_converse`.

use qbc::capacity::{additivity_check, error_floor, gamma};
use qbc::channels::{amplitude_damping_env, identity};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = amplitude_damping_env(0.3)?;
    let g = gamma(&n)?;
    println!(
        "{}: Gamma = {:.9} (primal {:.9}, gap {:.1e}), Q_Gamma = {:.6} bits",
        n.name(),
        g.gamma,
        g.primal_value.unwrap_or(f64::NAN),
        g.gap.unwrap_or(f64::NAN),
        g.q_gamma_bits
    );

    let id = identity(2)?;
    let report = additivity_check(&id, &id)?;
    println!(
        "Gamma(id ⊗ id) = {:.9} vs Gamma(id)^2 = {:.9}",
        report.gamma12,
        report.gamma1 * report.gamma2
    );

    // Above Q_Gamma the error of n channel uses is pushed towards 1.
    for uses in [1, 5, 10, 20] {
        let floor = error_floor(g.q_gamma_bits, uses, 0.75, 0.75)?;
        println!("n = {uses:>2}: error >= {floor:.6}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
