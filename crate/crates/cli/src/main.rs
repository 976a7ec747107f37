use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chainotp::report::emit_cost_report;
use chainotp::scenario::{bundled, bundled_scenario, run_scenario, ScenarioConfig};

/// Run chainotp scenarios and print cost figures.
#[derive(Parser)]
#[command(name = "chainotp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a bundled scenario by name.
    Run {
        /// Path to a .scn file, or the name of a bundled scenario.
        scenario: String,
        /// Override the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the run as JSON.
        #[arg(long)]
        json: bool,
        /// Print only the action summary, without the transcript.
        #[arg(long)]
        quiet: bool,
        /// Write the final chain as a line-delimited block dump.
        #[arg(long, value_name = "PATH")]
        dump_chain: Option<PathBuf>,
    },
    /// Gas, throughput and storage figures for a scenario's user count.
    Report {
        /// Path to a .scn file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long)]
        json: bool,
    },
    /// List the bundled scenarios.
    List,
}

fn load(scenario: &str) -> Result<ScenarioConfig, String> {
    let text = match fs::read_to_string(scenario) {
        Ok(text) => text,
        Err(e) => match bundled_scenario(scenario) {
            Some(text) => text.to_owned(),
            None => return Err(format!("{scenario}: {e}")),
        },
    };
    ScenarioConfig::parse(&text).map_err(|e| format!("{scenario}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, _) in bundled() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Report { scenario, json } => {
            let config = match load(&scenario) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let report = emit_cost_report(config.users as u64);
            if json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                print!("{}", report.render_text());
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            seed,
            json,
            quiet,
            dump_chain,
        } => {
            let mut config = match load(&scenario) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                config.rng_seed = seed;
            }
            let run = run_scenario(&config);
            if let Some(path) = dump_chain {
                if let Err(e) = fs::write(&path, &run.chain_dump) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if json {
                print!("{}", run.to_json());
            } else {
                print!("{}", run.render_text(!quiet));
            }
            ExitCode::from(run.exit_status as u8)
        }
    }
}
