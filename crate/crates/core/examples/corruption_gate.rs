//! A day with flipped labels, caught by the data checks before the learner
//! trains on it.
//!
//! ```bash
//! cargo run --release --example corruption_gate
//! ```

use batchol::datagen::{generate_stream, inject_corruption, CorruptionMode, CorruptionSpec, StreamSpec};
use batchol::learner::{run_stream_from, run_stream_gated, train_full, ProxStrategy, Snapshot, TrainerConfig, UpdateStrategy};
use batchol::metrics::{evaluate, safeguard_check, SafeguardBaselines, SafeguardThresholds};

fn main() -> batchol::Result<()> {
    let spec = StreamSpec {
        dimension: 40,
        days: 24,
        examples_per_day: 3000,
        sparsity: 10,
        holiday_days: vec![],
        ..Default::default()
    };
    let (clean, _) = generate_stream(&spec)?;
    let bad_day = 15;
    let dirty = inject_corruption(
        &clean,
        &CorruptionSpec {
            day: bad_day,
            mode: CorruptionMode::LabelFlip { fraction: 0.4 },
        },
        1,
    )?;

    let base = train_full(&dirty[..5], spec.dimension, &TrainerConfig::default())?;
    let strategy = UpdateStrategy::Prox(ProxStrategy::uniform(100.0));
    let thresholds = SafeguardThresholds::default();

    let raw = run_stream_from(&dirty[5..], Snapshot::initial(base.clone()), &strategy)?;
    let gated = run_stream_gated(&dirty[5..], Snapshot::initial(base), &strategy, &thresholds)?;
    println!("quarantined: {:?}", gated.quarantined);

    let today = raw.record(bad_day).unwrap();
    let yesterday = raw.record(bad_day - 1).unwrap();
    let report = safeguard_check(today, yesterday, SafeguardBaselines::default(), &thresholds)?;
    for c in report.failed_checks() {
        println!("day {bad_day} fails {}: {:.3} vs {:.3}", c.name, c.observed, c.threshold);
    }

    // score both learners on the clean version of the days after the incident
    println!("{:>4} {:>10} {:>10}", "day", "raw rig", "gated rig");
    for day in bad_day + 1..bad_day + 6 {
        let r = evaluate(raw.model_before(day).unwrap(), &clean[day as usize])?;
        let g = evaluate(gated.model_before(day).unwrap(), &clean[day as usize])?;
        println!("{day:>4} {:>+10.4} {:>+10.4}", r.rig.unwrap(), g.rig.unwrap());
    }
    Ok(())
}
