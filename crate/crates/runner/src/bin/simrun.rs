use std::collections::HashSet;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seasim_runner::batch::{run_batch, BatchJob};
use seasim_runner::{run_scenario, validate_config, Diagnostic, Scenario};

const EXIT_INVALID: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "simrun", about = "Run seasim scenarios headless")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and report every problem found.
    Validate { config: PathBuf },
    /// Run one scenario and write its output tree.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Seconds; overrides the scenario duration.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run several scenarios in parallel, each into `<out>/<config stem>`.
    Batch {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Expose the scenario as a step/reset environment on a TCP address.
    Serve {
        config: PathBuf,
        #[arg(long)]
        listen: String,
    },
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    validate_config(path).map_err(|diags| {
        report(path, &diags);
        ExitCode::from(EXIT_INVALID)
    })
}

fn report(path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}: {d}", path.display());
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, out, seed, duration } => {
            let mut scenario = match load(&config) {
                Ok(s) => s,
                Err(code) => return code,
            };
            if let Some(d) = duration {
                if !(d > 0.0 && d.is_finite()) {
                    eprintln!("--duration: must be > 0");
                    return ExitCode::from(EXIT_INVALID);
                }
                scenario.duration = d;
            }
            let seed = seed.unwrap_or(scenario.seed);
            match run_scenario(&scenario, &out, seed) {
                Ok(m) => {
                    println!("{} ticks, {} files written to {}", m.ticks, m.all_files().count(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Batch { configs, jobs, out, seed } => {
            let mut invalid = false;
            for c in &configs {
                if let Err(d) = validate_config(c) {
                    report(c, &d);
                    invalid = true;
                }
            }
            let mut stems = HashSet::new();
            let mut batch = Vec::new();
            for c in &configs {
                let stem = c.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                if !stems.insert(stem.clone()) {
                    eprintln!("{}: duplicate config name `{stem}` in batch", c.display());
                    invalid = true;
                }
                batch.push(BatchJob { config: c.clone(), out: out.join(stem), seed });
            }
            if invalid {
                return ExitCode::from(EXIT_INVALID);
            }
            let results = match run_batch(&batch, jobs) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            let mut failed = false;
            for (job, r) in batch.iter().zip(results) {
                match r {
                    Ok(m) => println!("{}: {} ticks -> {}", job.config.display(), m.ticks, job.out.display()),
                    Err(e) => {
                        eprintln!("{}: run failed: {e}", job.config.display());
                        failed = true;
                    }
                }
            }
            if failed {
                ExitCode::from(EXIT_RUNTIME)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Serve { config, listen } => {
            let scenario = match load(&config) {
                Ok(s) => s,
                Err(code) => return code,
            };
            if scenario.environment.is_none() {
                eprintln!("{}: scenario has no environment block", config.display());
                return ExitCode::from(EXIT_INVALID);
            }
            let listener = match TcpListener::bind(&listen) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("cannot listen on {listen}: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            match listener.local_addr() {
                Ok(a) => println!("listening on {a}"),
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            std::io::stdout().flush().ok();
            match seasim_runner::env::serve(&scenario, listener) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("server failed: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
