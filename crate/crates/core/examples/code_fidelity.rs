// Optimal channel fidelity of NS, PPT and NS ∩ PPT codes.
//
// Run with `cargo run --example code_fidelity`.

use qbc::channels::amplitude_damping_env;
use qbc::fidelity::{solve_fidelity, solve_fidelity_full, CodeClass, FidelityForm};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = amplitude_damping_env(0.3)?;
    println!("channel: {}", n.name());
    for (r1, r2) in [(2, 1), (1, 2), (2, 2)] {
        print!("({r1},{r2})");
        for class in CodeClass::ALL {
            let r = solve_fidelity_full(&n, r1, r2, class)?;
            print!("  {class}: {:.6}", r.value);
        }
        println!();
    }

    // The reduced NS program and the FM-eliminated NS ∩ PPT program give
    // the same optima with fewer variables; the relaxed program bounds both.
    let full = solve_fidelity_full(&n, 2, 2, CodeClass::NsPpt)?;
    let fm = solve_fidelity(&n, 2, 2, CodeClass::NsPpt, FidelityForm::Fm)?;
    let reduced = solve_fidelity(&n, 2, 2, CodeClass::Ns, FidelityForm::Reduced)?;
    let relaxed = solve_fidelity(&n, 2, 2, CodeClass::Ns, FidelityForm::Relaxed)?;
    println!(
        "(2,2) full ns-ppt {:.6}, fm {:.6}, reduced ns {:.6}, relaxed {:.6}",
        full.value, fm.value, reduced.value, relaxed.value
    );

    let blocks = &full.blocks;
    println!(
        "optimal blocks: Tr E1 N^T = {:.6}, causality margin {:.2e}, Tr rho = {:.6}",
        blocks.fidelity(&n),
        blocks.causality_margin(),
        blocks.rho.trace()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
