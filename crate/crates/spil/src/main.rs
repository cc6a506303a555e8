use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spil::commands::{self, Grid};
use spil::error::EXIT_CONFIG;
use spil::{scenario_file, CliError, ExperimentConfig, Result};
use spil_core::envmodels::EnvId;

/// Safe policy training with separated proportional-integral multipliers.
///
/// Relative output directories are placed under $SPIL_OUTPUT_ROOT when set.
#[derive(Parser)]
#[command(name = "spil", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file; writes curve.csv and the final networks.
    Train { config: PathBuf },
    /// Roll out a saved actor without learning.
    Evaluate {
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 4096)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-episode CSV (episode, return, safe).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Directory of scenario TOML files replacing the built-in robot
        /// scenarios.
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
    /// Train every cell of a parameter grid over several seeds.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train each config in a directory with a shared seed.
    Compare {
        config_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset config for an environment.
    Preset { env: String },
    /// Write the built-in robot scenarios as TOML files.
    Scenarios { dir: PathBuf },
}

fn env_id(name: &str) -> Result<EnvId> {
    EnvId::from_name(name).ok_or_else(|| CliError::Config(format!("unknown env `{name}` (car, robot or toy)")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let (out, outcome) = commands::cmd_train(&config)?;
            let last = outcome.records.last();
            println!("output {}", out.display());
            println!(
                "iterations {} converged {}",
                outcome.records.len(),
                outcome.converged
            );
            if let Some(r) = last {
                println!("final J {:.6} p_s {:.6}", r.j, r.p_s);
            }
        }
        Command::Evaluate {
            checkpoint,
            env,
            episodes,
            seed,
            csv,
            scenarios,
        } => {
            let env = env_id(&env)?;
            let custom = scenarios.map(|d| commands::load_scenarios(&d)).transpose()?;
            let s = commands::cmd_evaluate(&checkpoint, env, episodes, seed, custom.as_deref(), csv.as_deref())?;
            println!("episodes {} mean J {:.6} safe rate {:.6}", s.episodes, s.mean_return, s.safe_rate);
            for r in &s.scenarios {
                println!(
                    "scenario {} safe rate {:.4} mean J {:.4} min distance {:.3}",
                    r.name,
                    r.safe_rate(),
                    r.mean_return,
                    r.min_distance
                );
            }
        }
        Command::Sweep { config, grid, out } => {
            let text = std::fs::read_to_string(&grid).map_err(|e| CliError::io(&grid, e))?;
            let grid = Grid::parse(&text, &grid)?;
            let out = out.unwrap_or_else(|| commands::default_out("sweep"));
            let cells = commands::cmd_sweep(&config, &grid, &out)?;
            for c in &cells {
                let keys: Vec<String> = c.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let (jm, js) = c.j();
                let (pm, ps) = c.p_s();
                println!(
                    "{} J {jm:.3}±{js:.3} p_s {pm:.4}±{ps:.4} failed {}",
                    keys.join(" "),
                    c.errors.len()
                );
                for e in &c.errors {
                    eprintln!("  {e}");
                }
            }
            println!("table {}", out.join("sweep.csv").display());
        }
        Command::Compare { config_dir, out } => {
            let out = out.unwrap_or_else(|| commands::default_out("compare"));
            let rows = commands::cmd_compare(&config_dir, &out)?;
            for r in &rows {
                println!(
                    "{} ({}) p_s iter0 {:.4} final {:.4} tail std {:.4} J {:.3} peak I {:.4}",
                    r.name, r.mode, r.p_s_first, r.p_s_final, r.p_s_tail_std, r.j_final, r.peak_integral
                );
            }
            let aligned = rows.windows(2).all(|w| w[0].p_s_first == w[1].p_s_first);
            println!("iteration-0 p_s aligned: {aligned}");
            println!("report {}", out.join("compare.csv").display());
        }
        Command::Preset { env } => {
            print!("{}", ExperimentConfig::preset(env_id(&env)?).to_toml());
        }
        Command::Scenarios { dir } => {
            for p in scenario_file::dump_builtin(&dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
