//! Online runs started from base models trained on different weeks drift
//! towards the same quality.
//!
//! ```bash
//! cargo run --release --example init_study
//! ```

use batchol::datagen::{generate_stream, StreamSpec};
use batchol::learner::{run_initialization_study, EsStrategy, TrainerConfig, UpdateStrategy};

fn main() -> batchol::Result<()> {
    let spec = StreamSpec {
        dimension: 40,
        days: 45,
        examples_per_day: 3000,
        sparsity: 10,
        holiday_days: vec![],
        ..Default::default()
    };
    let (batches, _) = generate_stream(&spec)?;
    let study = run_initialization_study(
        &batches,
        &[5, 10, 15, 20],
        5,
        spec.dimension,
        &UpdateStrategy::Es(EsStrategy::gd(1e-3, 10)),
        &TrainerConfig::default(),
    )?;

    let first = study.first_common().unwrap();
    for day in (first..spec.days).step_by(4) {
        println!("day {day:>2}  rig spread {:.2e}", study.rig_spread(day).unwrap());
    }
    Ok(())
}
