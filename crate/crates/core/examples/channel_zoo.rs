// Building, validating and combining broadcast channels.
//
// Run with `cargo run --example channel_zoo`.

use qbc::channels::{
    amplitude_damping_env, apply_channel, kraus_from_choi, parse_builtin_spec, random_qubit_broadcast,
    tensor_channels, validate_channel, ChannelSpec, IN,
};
use qbc::random::Rng;
use qbc::tensor::{HermitianOperator, SubsystemLayout};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let damping = amplitude_damping_env(0.3)?;
    let report = validate_channel(&damping);
    println!(
        "{}: dims {:?}, min Choi eigenvalue {:.2e}, TP deviation {:.2e}",
        damping.name(),
        damping.dims(),
        report.min_eigenvalue,
        report.tp_deviation
    );

    // The excited state decays towards Bob and leaks into Charlie's share.
    let excited = HermitianOperator::from_real_fn(SubsystemLayout::single(IN, 2), |i, j| {
        if i == 1 && j == 1 { 1.0 } else { 0.0 }
    })?;
    let out = apply_channel(&damping, &excited)?;
    println!("output on |1><1|, diagonal: {:?}", (0..4).map(|k| out.entry(k, k).re).collect::<Vec<_>>());

    let kraus = kraus_from_choi(&damping)?;
    println!("recovered {} Kraus operators", kraus.operators().len());

    let from_text = parse_builtin_spec("builtin:depolarizing,p=0.25")?;
    let from_json = ChannelSpec::from_json(r#"{"builtin": "replacer", "params": {"a": 2, "b": 2, "c": 2}}"#)?.build()?;
    println!("parsed {} and {}", from_text.name(), from_json.name());

    let random = random_qubit_broadcast(&mut Rng::seed(1));
    let product = tensor_channels(&random, &damping)?;
    println!("{} has dims {:?} and is valid: {}", product.name(), product.dims(), validate_channel(&product).is_valid());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
