use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kuramoto_cli::{execute, parse_config, CliError, ConfigSource, Subcommand};

/// Controlled Kuramoto oscillators: mean-field, particle and N-body solvers
/// and the studies comparing them.
#[derive(Debug, Parser)]
#[command(name = "kuramoto-lab", version)]
struct Args {
    /// Subcommand; overrides the one in the config file.
    #[arg(value_parser = parse_subcommand)]
    subcommand: Option<Subcommand>,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted override such as `model.dt=0.01`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective config as TOML and exit without running.
    #[arg(long)]
    print_config: bool,
}

fn parse_subcommand(s: &str) -> Result<Subcommand, String> {
    Subcommand::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Subcommand::ALL.iter().map(|c| c.name()).collect();
        format!("unknown subcommand `{s}`; expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut overrides = args.set.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &args.out {
        overrides.push(format!("output_dir={}", toml::Value::String(out.display().to_string())));
    }
    let source = match &args.config {
        Some(p) => ConfigSource::File(p),
        None => ConfigSource::None,
    };
    let result = parse_config(source, args.subcommand, &overrides).and_then(|cfg| {
        if args.print_config {
            print!("{}", kuramoto_cli::config::to_toml(&cfg));
            return Ok(0);
        }
        execute(&cfg)
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
