use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use probode::cli::{self, presets};

#[derive(Parser)]
#[command(name = "probode", version, about = "Randomized ODE and finite-element experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON configuration.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List presets, or print the configuration of one.
    Presets { name: Option<String> },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

fn fail(e: probode::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(cli::exit_code(&e) as u8)
}

fn main() -> ExitCode {
    match Args::parse().command {
        Command::Run { config, seed, out } => {
            let cfg = match cli::load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let (cfg, dir) = cli::resolve(cfg, seed, out);
            match cli::run(&cfg, &dir) {
                Ok(_) => {
                    println!("wrote {}", dir.join("manifest.json").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Presets { name: None } => {
            for p in presets::PRESETS {
                println!("{:<20} {}", p.name, p.description);
            }
            ExitCode::SUCCESS
        }
        Command::Presets { name: Some(n) } => match presets::find(&n) {
            Some(p) => {
                println!("{}", serde_json::to_string_pretty(&p.config()).expect("presets serialize"));
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: unknown preset {n}");
                ExitCode::from(cli::EXIT_CONFIG as u8)
            }
        },
        Command::Validate { config } => match cli::load_config(&config) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
