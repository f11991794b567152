//! Gradient descent, minibatch SGD and L-BFGS on one day of traffic.
//!
//! ```bash
//! cargo run --release --example optimizers
//! ```

use batchol::datagen::{generate_stream, StreamSpec};
use batchol::model::LogisticObjective;
use batchol::optim::{lbfgs_minimize, run_gd, run_sgd, GdConfig, LbfgsConfig, Objective, SgdConfig};

fn main() -> batchol::Result<()> {
    let spec = StreamSpec {
        dimension: 30,
        days: 1,
        examples_per_day: 4000,
        sparsity: 8,
        holiday_days: vec![],
        ..Default::default()
    };
    let (batches, _) = generate_stream(&spec)?;
    let f = LogisticObjective::new(&batches[0], spec.dimension)?;
    let w0 = vec![0.0; spec.dimension + 1];
    let mut g = vec![0.0; w0.len()];

    let best = lbfgs_minimize(&f, &w0, &LbfgsConfig::default())?;
    println!("lbfgs  {:>4} iterations   loss {:.4}  converged {}", best.iterations, best.value, best.converged);

    for k in [1, 10, 100] {
        let t = run_gd(&f, &w0, &GdConfig::new(2e-4, k))?;
        println!("gd     {k:>4} steps        loss {:.4}", f.value_grad(t.last(), &mut g));
    }

    let sgd = SgdConfig {
        learning_rate: 1e-2,
        epochs: 5,
        minibatch_size: 50,
        ..Default::default()
    };
    let t = run_sgd(&f, &w0, &sgd)?;
    println!("sgd    {:>4} epochs       loss {:.4}", t.steps(), f.value_grad(t.last(), &mut g));
    Ok(())
}
