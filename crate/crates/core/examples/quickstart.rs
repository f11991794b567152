//! Train a click model on a week of synthetic traffic and score the next day.
//!
//! ```bash
//! cargo run --release --example quickstart
//! ```

use batchol::datagen::{generate_stream, StreamSpec};
use batchol::learner::{train_full, TrainerConfig};
use batchol::metrics::evaluate;

fn main() -> batchol::Result<()> {
    let spec = StreamSpec {
        dimension: 50,
        days: 8,
        examples_per_day: 5000,
        sparsity: 12,
        holiday_days: vec![],
        ..Default::default()
    };
    let (batches, truth) = generate_stream(&spec)?;

    let model = train_full(&batches[..7], spec.dimension, &TrainerConfig::default())?;
    let next = &batches[7];

    let rec = evaluate(&model, next)?;
    println!("day {}: {} examples, ctr {:.4}", rec.batch_id, rec.n_examples, rec.ctr);
    println!("  learned  logloss {:.5}  rig {:+.4}  auc {:.4}", rec.logloss_model, rec.rig.unwrap(), rec.auc.unwrap());

    // the generating weights of that day give a ceiling
    let best = evaluate(&truth.oracle(7).unwrap(), next)?;
    println!("  oracle   logloss {:.5}  rig {:+.4}  auc {:.4}", best.logloss_model, best.rig.unwrap(), best.auc.unwrap());

    let first = &next.examples[0];
    println!("p(click) for the first example: {:.4} (label {})", model.predict(&first.features)?, first.label);
    Ok(())
}
