//! How much a snapshot loses when it is deployed days after it was trained.
//!
//! ```bash
//! cargo run --release --example delay_study
//! ```

use batchol::datagen::{generate_stream, StreamSpec};
use batchol::learner::{run_delay_analysis, run_stream, train_full, ProxStrategy, TrainerConfig, UpdateStrategy};

fn main() -> batchol::Result<()> {
    let spec = StreamSpec {
        dimension: 50,
        days: 40,
        examples_per_day: 3000,
        sparsity: 12,
        holiday_days: vec![],
        drift_rate: 0.05,
        ..Default::default()
    };
    let (batches, _) = generate_stream(&spec)?;
    let trainer = TrainerConfig::default();
    let base = train_full(&batches[..5], spec.dimension, &trainer)?;
    let run = run_stream(&batches[5..35], &base, &UpdateStrategy::Prox(ProxStrategy::uniform(200.0)))?;

    let retrain = train_full(&batches[10..15], spec.dimension, &trainer)?;
    let table = run_delay_analysis(&run.snapshots, &batches[35..], &[1, 3, 7, 14, 21], Some(("retrain", &retrain)))?;

    println!("evaluated on days {}..={}", table.eval_start, table.eval_end);
    for row in &table.rows {
        match (row.mean_auc, row.pooled_rig) {
            (Some(a), Some(r)) => println!("{:<10} auc {a:.4}  rig {r:+.4}", row.label),
            _ => println!("{:<10} no snapshot", row.label),
        }
    }
    Ok(())
}
