use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use edlab::{exit, parse_config, HarnessError, Overrides, Scenario};

#[derive(Parser)]
#[command(name = "edlab", version, about = "Entropic dynamics scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs.
    Run {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<String>,
        /// Overrides the config seed and EDLAB_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Check a config and print it with defaults applied.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(exit::RUNTIME_ERROR, HarnessError::exit_code);
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Validate { config } => {
            let cfg = parse_config(&config, &Overrides::default())?;
            print!("{}", cfg.to_toml());
            Ok(exit::PASS)
        }
        Command::Run { config, out_dir, seed, scenario } => {
            let scenario = scenario.as_deref().map(Scenario::from_name).transpose()?;
            let cfg = parse_config(&config, &Overrides { scenario, seed, out_dir })?;
            let report = edlab::execute(&cfg).with_context(|| format!("scenario `{}` failed", cfg.scenario))?;
            for (name, m) in &report.metrics {
                let value = m.value.map_or_else(|| "non-finite".to_string(), |v| format!("{v:.3e}"));
                let verdict = if m.pass { "pass" } else { "FAIL" };
                println!("{verdict:4} {name:26} {value:>12} (limit {:.3e})", m.limit);
            }
            println!("outputs in {}", cfg.outputs.dir);
            Ok(if report.pass { exit::PASS } else { exit::TOLERANCE_FAIL })
        }
    }
}
