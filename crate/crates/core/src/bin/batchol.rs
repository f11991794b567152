use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use batchol::datagen::{generate_stream_parallel, write_ground_truth};
use batchol::harness::{
    load_data, report, run_plan, train_base, verify, write_examples, DataSource, ExperimentConfig, Plan,
};
use batchol::learner::{write_snapshot, Snapshot};
use batchol::Error;

/// Batch online learning experiments.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "BATCHOL_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic stream in the text example format.
    GenData(Common),
    /// Fit the base model on the initial window.
    TrainBase(Common),
    /// Run the full experiment.
    Run(Common),
    /// Run the delay study only.
    Delay(Common),
    /// Run the initialization study only.
    InitStudy(Common),
    /// Run the bound checks only.
    VerifyTheorem(Common),
    /// Re-evaluate a finished run from its snapshots.
    Verify(Common),
    /// Collate a finished run into comparison tables.
    Report(Common),
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Toml(_) | Error::InvalidDay { .. } => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load(c: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Failure::Config(format!("{}: {io}", path.display())),
        other => other.into(),
    })?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    cfg.quiet |= c.quiet;
    let out = out_dir(c, cfg.out_dir.as_deref());
    cfg.validate()?;
    Ok((cfg, out))
}

fn out_dir(c: &Common, configured: Option<&Path>) -> PathBuf {
    c.out
        .clone()
        .or_else(|| configured.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn plan_run(c: &Common, plan: impl FnOnce(&ExperimentConfig) -> Result<Plan, Error>) -> Result<i32, Failure> {
    let (cfg, out) = load(c)?;
    let plan = plan(&cfg)?;
    let manifest = run_plan(&cfg, &out, &plan)?;
    for r in manifest.runs.iter().filter(|r| !r.ok) {
        eprintln!("run {} failed: {}", r.label, r.failure.as_deref().unwrap_or(""));
    }
    Ok(manifest.exit_code())
}

fn execute(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::GenData(c) => {
            let (cfg, out) = load(&c)?;
            let DataSource::Generated { stream } = &cfg.data else {
                return Err(Failure::Config("gen-data needs a generated data source".into()));
            };
            let mut spec = stream.clone();
            spec.seed = cfg.seed;
            let (batches, truth) = generate_stream_parallel(&spec, cfg.workers)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            write_examples(File::create(out.join("data.txt")).map_err(Error::from)?, &batches)?;
            write_ground_truth(
                BufWriter::new(File::create(out.join("ground_truth.csv")).map_err(Error::from)?),
                &truth,
            )?;
            Ok(0)
        }
        Command::TrainBase(c) => {
            let (cfg, out) = load(&c)?;
            let data = load_data(&cfg)?;
            let m = train_base(&data.range(cfg.base.start, cfg.base.days), data.dimension, &cfg.base.trainer)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            write_snapshot(
                BufWriter::new(File::create(out.join("base.snap")).map_err(Error::from)?),
                &Snapshot::initial(m),
            )?;
            Ok(0)
        }
        Command::Run(c) => plan_run(&c, |_| Ok(Plan::all())),
        Command::Delay(c) => plan_run(&c, Plan::delay_only),
        Command::InitStudy(c) => plan_run(&c, Plan::init_only),
        Command::VerifyTheorem(c) => plan_run(&c, Plan::theorem_only),
        Command::Verify(c) => {
            let out = out_dir(&c, None);
            let r = verify(&out)?;
            for m in &r.mismatches {
                eprintln!("{m}");
            }
            if !c.quiet {
                eprintln!("checked {} files, {} records", r.files_checked, r.records_checked);
            }
            Ok(if r.ok() { 0 } else { 1 })
        }
        Command::Report(c) => {
            let out = out_dir(&c, None);
            for p in report(&out)? {
                if !c.quiet {
                    println!("{}", p.display());
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
