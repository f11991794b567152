//! Write a synthetic stream and its generating weights to disk.
//!
//! ```bash
//! cargo run --release --example generate_data -- /tmp/stream
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use batchol::datagen::{generate_stream_parallel, write_ground_truth, StreamSpec};
use batchol::harness::{parse_examples, write_examples};

fn main() -> batchol::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("batchol-stream"));
    fs::create_dir_all(&dir)?;

    let spec = StreamSpec {
        dimension: 100,
        days: 14,
        examples_per_day: 2000,
        sparsity: 20,
        holiday_days: vec![10],
        ..Default::default()
    };
    let (batches, truth) = generate_stream_parallel(&spec, 2)?;

    let data = dir.join("data.txt");
    write_examples(BufWriter::new(File::create(&data)?), &batches)?;
    write_ground_truth(BufWriter::new(File::create(dir.join("ground_truth.csv"))?), &truth)?;

    for b in &batches {
        println!("day {:>2}  {} examples  ctr {:.4}", b.id, b.len(), b.ctr());
    }
    assert_eq!(parse_examples(&data)?, batches);
    println!("wrote {}", dir.display());
    Ok(())
}
