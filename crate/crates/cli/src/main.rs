use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};
use vnotch_cli::{run, RunConfig};

/// Runs a V-notch fracture benchmark configuration.
#[derive(Debug, Parser)]
#[command(name = "vnotch", version)]
struct Args {
    /// Run configuration (TOML).
    #[arg(short, long, conflicts_with = "bundled", required_unless_present_any = ["bundled", "list"])]
    config: Option<PathBuf>,

    /// Use a bundled configuration instead of a file.
    #[arg(short, long)]
    bundled: Option<String>,

    /// List the bundled configurations and exit.
    #[arg(long)]
    list: bool,

    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,

    /// Output directory.
    #[arg(short, long, env = "VNOTCH_OUTPUT_DIR", default_value = "vnotch-out")]
    output: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(short = 'j', long, default_value_t = 0)]
    workers: usize,

    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if args.list {
        for (name, _) in vnotch_cli::config::BUNDLED {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    if args.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.workers).build_global() {
            error!("could not size the worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let loaded = match (&args.config, &args.bundled) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(vnotch_cli::CliError::from)
            .and_then(|text| RunConfig::from_toml(&text))
            .map(|c| (c, path.parent().map(PathBuf::from).unwrap_or_default())),
        (None, Some(name)) => RunConfig::bundled(name).map(|c| (c, PathBuf::from("."))),
        (None, None) => unreachable!("clap enforces a config source"),
    };
    let (config, input_dir) = match loaded {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        match config.to_toml() {
            Ok(text) => {
                print!("{text}");
                return ExitCode::SUCCESS;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    info!("running '{}' into {}", config.name, args.output.display());
    match run(&config, &input_dir, &args.output) {
        Ok(summary) => {
            match summary.failure_load_kn {
                Some(f) => println!("{}: failure load {f:.4} kN at step {}", summary.name, summary.peak_step.unwrap_or(0)),
                None if summary.metrics.is_none() => println!("{}: no failure detected in {} steps", summary.name, summary.steps),
                None => {}
            }
            if let Some(m) = &summary.metrics {
                println!("{}: HD {:.4} mm, MHD {:.4} mm", summary.name, m.hd, m.mhd);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
