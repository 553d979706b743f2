use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::Utc;
use clap::{Parser, Subcommand};
use llmopt_cli::sweep::SweepAxis;
use llmopt_cli::{
    execute_run, load_config, render_report, run_sweep, CliError, LoadedConfig, SweepSpec,
};

#[derive(Debug, Parser)]
#[command(
    name = "llmopt",
    version,
    about = "Language-model driven evolutionary optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute one run and write its run directory.
    Run {
        config: PathBuf,
        /// Override a config value, e.g. `--set engine.p_exp=0.3`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Shorthand for `--set engine.seed=N`.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to `<runs-root>/<problem>-<timestamp>-s<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        runs_root: PathBuf,
        /// Suppress the per-generation progress line.
        #[arg(long)]
        quiet: bool,
    },
    /// Render metric tables and curves from one or more run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output directory; defaults to `<first run>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one configuration per value of a parameter and tabulate the results.
    Sweep {
        config: PathBuf,
        /// k_offspring, p_exp or selector.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run sub-runs concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Check a config file without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn with_seed(mut overrides: Vec<String>, seed: Option<u64>) -> Vec<String> {
    if let Some(s) = seed {
        overrides.push(format!("engine.seed={s}"));
    }
    overrides
}

fn default_run_dir(root: &Path, loaded: &LoadedConfig) -> PathBuf {
    root.join(format!(
        "{}-{}-s{}",
        loaded.config.problem_name(),
        Utc::now().format("%Y%m%d-%H%M%S"),
        loaded.config.engine.seed
    ))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            overrides,
            seed,
            out,
            runs_root,
            quiet,
        } => {
            let loaded = load_config(&config, &with_seed(overrides, seed))?;
            let dir = out.unwrap_or_else(|| default_run_dir(&runs_root, &loaded));
            let outcome = execute_run(&loaded, &dir, !quiet)?;
            let m = &outcome.manifest;
            println!(
                "finished ({}) after {} generations, {} oracle calls, {} backend calls; best F {}",
                m.stop_reason.map_or("-".into(), |r| r.to_string()),
                m.generations,
                m.cost.oracle_calls,
                m.cost.backend_calls,
                m.best
                    .as_ref()
                    .map_or("-".into(), |b| format!("{:.4}", b.fitness)),
            );
            println!("run directory: {}", outcome.dir.display());
            Ok(())
        }
        Command::Report { runs, out } => {
            let out = out.unwrap_or_else(|| runs[0].join("report"));
            let summary = render_report(&runs, &out)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", summary.table);
            for img in &summary.images {
                println!("wrote {}", img.display());
            }
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            values,
            repeats,
            overrides,
            out,
            parallel,
        } => {
            let axis: SweepAxis = axis.parse().map_err(CliError::Validation)?;
            let text = std::fs::read_to_string(&config).map_err(|e| {
                CliError::Validation(format!("cannot read {}: {e}", config.display()))
            })?;
            let out = out.unwrap_or_else(|| {
                PathBuf::from("sweeps").join(format!(
                    "{}-{}",
                    axis.key(),
                    Utc::now().format("%Y%m%d-%H%M%S")
                ))
            });
            let spec = SweepSpec {
                axis,
                values,
                repeats,
                parallel,
            };
            let summary = run_sweep(&text, &overrides, &spec, &out)?;
            print!("{}", summary.markdown);
            println!("sweep directory: {}", summary.dir.display());
            let failed: usize = summary.rows.iter().map(|r| r.failed).sum();
            if failed > 0 {
                eprintln!("warning: {failed} sub-run(s) failed");
            }
            Ok(())
        }
        Command::Validate { config, overrides } => {
            let loaded = load_config(&config, &overrides)?;
            let c = &loaded.config;
            println!(
                "ok: {} with {} backend, N={}, B={}, k={}",
                c.problem_name(),
                c.backend_name(),
                c.engine.population_size,
                c.engine.budget,
                c.engine.k_offspring
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let label = match e {
                CliError::Validation(_) => "validation error",
                CliError::Runtime(_) => "run failed",
            };
            eprintln!("{label}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
