//! Run a whole configured experiment, check its outputs against the
//! manifest, and derive the report tables.
//!
//! ```bash
//! cargo run --release --example run_experiment -- configs/small.toml /tmp/small
//! ```

use std::path::PathBuf;

use batchol::harness::{report, run_experiment, verify, ExperimentConfig};

fn main() -> batchol::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/small.toml"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("batchol-run"));

    let cfg = ExperimentConfig::load(&config)?;
    let manifest = run_experiment(&cfg, &out)?;
    println!("config {}  exit code {}", &manifest.config_hash[..12], manifest.exit_code());
    for r in &manifest.runs {
        println!("  {:<16} {}", r.label, if r.ok { "ok" } else { "failed" });
    }

    let v = verify(&out)?;
    println!("verified {} records, {} mismatches", v.records_checked, v.mismatches.len());
    for p in report(&out)? {
        println!("  {}", p.display());
    }
    Ok(())
}
