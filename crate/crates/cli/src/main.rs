use bbal::{run, ExperimentConfig};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Runs one bergman-balance experiment from an INI config.
#[derive(Debug, Parser)]
#[command(name = "bbal", version)]
struct Args {
    /// Experiment config (INI).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `task`.
    #[arg(long)]
    task: Option<String>,
    /// Output directory; defaults to `[output] dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid reductions.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match go(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bbal: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn go(args: &Args) -> Result<i32, bbal::CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| bbal::CliError::Input(format!("thread pool: {e}")))?;
    }
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(t) = &args.task {
        cfg.set("", "task", t.clone());
    }
    if let Some(s) = args.seed {
        cfg.set("", "seed", s.to_string());
    }
    let out = match &args.out {
        Some(p) => p.clone(),
        None => PathBuf::from(cfg.raw("output", "dir").unwrap_or("out")),
    };
    let summary = run(&cfg, &out)?;
    eprintln!(
        "bbal: {:?}, report at {}",
        summary.status,
        summary.report.display()
    );
    Ok(summary.status.exit_code())
}
