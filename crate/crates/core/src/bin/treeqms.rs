use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use treeqms::scenario::{self, CheckName, RunOptions, ScenarioError};

#[derive(Parser)]
#[command(name = "treeqms", version, about = "Quantum Markov states on trees: decomposition and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config (a path, or the name of a bundled fixture).
    Run {
        config: String,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tolerance applied to every check.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of checks.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<CheckName>>,
    },
    /// List the bundled configs.
    ListFixtures,
}

fn load(config: &str) -> Result<scenario::ScenarioConfig, ScenarioError> {
    let path = PathBuf::from(config);
    if !path.exists() {
        if let Some(cfg) = scenario::fixture(config) {
            return Ok(cfg);
        }
    }
    let text = std::fs::read_to_string(&path).map_err(|e| ScenarioError::Config(format!("{config}: {e}")))?;
    scenario::parse_config(&text)
}

fn run(config: &str, out: Option<PathBuf>, opts: RunOptions) -> Result<bool, ScenarioError> {
    let cfg = load(config)?;
    let report = scenario::run_scenario(&cfg, &opts)?;
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    match out {
        Some(p) => std::fs::write(&p, json + "\n").map_err(|e| ScenarioError::Config(format!("{}: {e}", p.display())))?,
        None => println!("{json}"),
    }
    for c in &report.checks {
        let dev = c.max_deviation.map_or("-".to_string(), |d| format!("{d:.3e}"));
        eprintln!("{:<20} {:<8} max dev {dev} (tol {:.0e})", c.name.as_str(), format!("{:?}", c.status).to_lowercase(), c.tolerance);
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListFixtures => {
            for (name, desc) in scenario::list_fixtures() {
                println!("{name:<24} {desc}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out, tol, seed, checks } => match run(&config, out, RunOptions { tol, seed, checks }) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("treeqms: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
