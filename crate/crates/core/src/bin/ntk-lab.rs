use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ntk_lab::cli::{parse_config_for, run_task, ExperimentError, Task};

/// Batch experiments with neural tangent kernel estimators and wide
/// one-hidden-layer ReLU networks.
#[derive(Debug, Parser)]
#[command(name = "ntk-lab", version)]
struct Args {
    /// simulate, rate-study, mnist, eigendecay or stopping-curve
    task: Task,
    /// Line-oriented `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// CSV output path (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `threads` in the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut config = match parse_config_for(&text, Some(args.task)) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("{}", ExperimentError::Config(errs));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(out) = args.out {
        config.output = out;
    }
    if let Some(t) = args.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        config.threads = Some(t);
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }

    match run_task(&config) {
        Ok(outcome) => {
            eprint!("{}", outcome.summary(&config));
            eprintln!("wrote {}", config.output.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
