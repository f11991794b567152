//! How close `k` gradient steps from the previous model land to the
//! proximal solution with `λ = 1/(αk)`, and what happens when the two
//! are mismatched.
//!
//! ```bash
//! cargo run --release --example es_vs_prox
//! ```

use batchol::datagen::{generate_stream, StreamSpec};
use batchol::learner::{train_full, TrainerConfig};
use batchol::model::LogisticObjective;
use batchol::theory::{default_solver, theorem1_check};

fn main() -> batchol::Result<()> {
    let spec = StreamSpec {
        dimension: 40,
        days: 6,
        examples_per_day: 3000,
        sparsity: 10,
        holiday_days: vec![],
        ..Default::default()
    };
    let (batches, _) = generate_stream(&spec)?;
    let prev = train_full(&batches[..5], spec.dimension, &TrainerConfig::default())?;
    let f = LogisticObjective::new(&batches[5], spec.dimension)?;
    let w0 = prev.params();

    println!("{:>8} {:>4} {:>8} {:>10}  {:>10} {:>10}  holds", "alpha", "k", "lambda", "mode", "lhs", "rhs");
    for (alpha, k, lambda) in [
        (1e-4, 5, 2e3),
        (1e-4, 20, 5e2),
        (5e-5, 10, 2e3),
        (1e-4, 20, 1e4),
        (1e-5, 50, 1e2),
    ] {
        let r = theorem1_check(&f, &w0, alpha, k, lambda, &default_solver())?;
        println!(
            "{alpha:>8.0e} {k:>4} {lambda:>8.0e} {:>10}  {:>10.3e} {:>10.3e}  {}",
            format!("{:?}", r.mode).to_lowercase(),
            r.lhs,
            r.rhs,
            r.holds
        );
    }
    Ok(())
}
