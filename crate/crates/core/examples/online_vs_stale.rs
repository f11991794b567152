//! Daily online updates against a frozen base model and a 7-day
//! moving-window retrain, on a drifting stream.
//!
//! ```bash
//! cargo run --release --example online_vs_stale
//! ```

use batchol::datagen::{generate_stream, StreamSpec};
use batchol::learner::{
    run_moving_window, run_stale, run_stream, train_full, EsStrategy, MovingWindowConfig, ProxStrategy,
    TrainerConfig, UpdateStrategy,
};
use batchol::metrics::{mean_auc, pooled_rig, MetricRecord};

fn line(label: &str, recs: &[MetricRecord]) {
    println!("{label:<14} rig {:+.4}  auc {:.4}", pooled_rig(recs).unwrap(), mean_auc(recs).unwrap());
}

fn main() -> batchol::Result<()> {
    let spec = StreamSpec {
        dimension: 60,
        days: 40,
        examples_per_day: 4000,
        sparsity: 16,
        holiday_days: vec![25, 26],
        drift_rate: 0.05,
        ..Default::default()
    };
    let (batches, _) = generate_stream(&spec)?;
    let base = train_full(&batches[..7], spec.dimension, &TrainerConfig::default())?;
    let online = &batches[7..];

    line("stale", &run_stale(online, &base)?);

    let mw = MovingWindowConfig {
        first_eval: Some(7),
        ..Default::default()
    };
    line("moving window", &run_moving_window(&batches, spec.dimension, &mw)?.records);

    for (label, s) in [
        ("es", UpdateStrategy::Es(EsStrategy::gd(5e-4, 10))),
        ("prox", UpdateStrategy::Prox(ProxStrategy::uniform(200.0))),
        ("prox fisher", UpdateStrategy::Prox(ProxStrategy::fisher())),
    ] {
        let run = run_stream(online, &base, &s)?;
        line(label, &run.records);
    }
    Ok(())
}
