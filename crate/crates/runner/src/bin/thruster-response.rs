use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use seasim::thrusters::{simulate_response, write_response_csv, Thruster};
use seasim_runner::config::ThrusterModelDecl;

/// Step-response experiment for one thruster model, written as CSV.
#[derive(Parser)]
#[command(name = "thruster-response")]
struct Cli {
    /// JSON file with `rotor` and `generation` objects.
    model: PathBuf,
    /// Input value after the step.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Input value before the step.
    #[arg(long, default_value_t = 0.0)]
    initial: f64,
    /// Seconds.
    #[arg(long, default_value_t = 0.0)]
    step_time: f64,
    /// Seconds.
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// m/s of inflow along the thrust axis.
    #[arg(long, default_value_t = 0.0)]
    advance_velocity: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let model = match ThrusterModelDecl::load(&cli.model) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{}: {e}", cli.model.display());
            return ExitCode::from(1);
        }
    };
    let thruster = match Thruster::new(model.0, model.1) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", cli.model.display());
            return ExitCode::from(1);
        }
    };
    let (a, b, ts) = (cli.initial, cli.amplitude, cli.step_time);
    let samples = match simulate_response(&thruster, |t| if t < ts { a } else { b }, cli.advance_velocity, cli.duration, cli.dt) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.out {
        Some(p) => File::create(p).map_err(seasim::Error::from).and_then(|f| {
            let mut w = BufWriter::new(f);
            write_response_csv(&samples, &mut w)?;
            w.flush().map_err(seasim::Error::from)
        }),
        None => write_response_csv(&samples, std::io::stdout().lock()),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
