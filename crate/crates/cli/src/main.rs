use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qwz_ness_cli::{load, run, validate, CliError, RunOptions};

/// Exact nonequilibrium steady states of the two-bath QWZ lattice.
#[derive(Debug, Parser)]
#[command(name = "qwz-ness", version)]
struct Args {
    /// TOML run configuration.
    config: PathBuf,

    /// Output directory, overriding `output.directory`.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Worker threads for independent points (0 = all cores).
    #[arg(short = 'j', long, default_value_t = 0)]
    workers: usize,

    /// More log output; repeat for debug level.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Validate the config, print diagnostics as JSON and exit.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = load(&args.config).and_then(|config| {
        if args.check {
            let diagnostics = validate(&config);
            println!("{}", serde_json::to_string_pretty(&diagnostics).expect("diagnostics serialize"));
            return if diagnostics.is_empty() { Ok(()) } else { Err(CliError::Invalid(diagnostics)) };
        }
        let manifest = run(&config, &RunOptions { output: args.output.clone(), workers: args.workers })?;
        for f in &manifest.files {
            println!("{}  {}", f.sha256, manifest.output_directory.join(&f.path).display());
        }
        Ok(())
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
