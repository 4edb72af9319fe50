//! Backpropagation against central finite differences on the reduced model,
//! plus parameter counts of the shipped architectures.
//!
//! cargo run --release --example gradient_check

use morph::neural::{grad_check, ModelSpec, Network, PARAM_BUDGET};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> morph::Result<()> {
    let spec = ModelSpec::tiny();
    let net = Network::<f64>::new(spec.clone(), 11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = 3;
    let input: Vec<f64> = (0..batch * spec.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gc = grad_check(&net, &input, &[0, 2, 3])?;
    println!(
        "checked {} parameters: max relative error {:.2e}, largest gradient {:.3}",
        gc.checked, gc.max_rel_err, gc.max_abs_grad
    );
    for (name, spec) in [("standard", ModelSpec::standard()), ("compact", ModelSpec::compact())] {
        let n = Network::<f32>::new(spec, 0)?.param_count();
        println!("{name:<9} {n:>9} parameters (budget {PARAM_BUDGET})");
    }
    Ok(())
}
