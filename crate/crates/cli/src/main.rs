use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use glevy::cli::{parse_config, run};

/// Batch front-end for sublinear expectations of G-Lévy processes.
#[derive(Debug, Parser)]
#[command(name = "glevy", version)]
struct Args {
    /// Job description in `key = value` form.
    #[arg(long)]
    config: PathBuf,
    /// Seed for the randomised probes of `check` (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (overrides the config's `output`; stdout if neither).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            match e.downcast_ref::<glevy::Error>() {
                Some(err) => eprintln!("error[{}]: {err}", err.code()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}

fn execute(args: &Args) -> anyhow::Result<bool> {
    if let Some(n) = args.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut job = parse_config(&text)?;
    if let Some(seed) = args.seed {
        job.seed = seed;
    }
    let output = run(&job)?;
    match args.out.as_ref().or(job.output.as_ref()) {
        Some(path) => {
            fs::write(path, &output.text).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(output.text.as_bytes())?,
    }
    Ok(output.success)
}
