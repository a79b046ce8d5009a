use clap::{Parser, Subcommand};
use reboot_kit::run::load_scenario;
use reboot_kit::{run, RunConfig, THREADS_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "reboot-kit", about = "Monte-Carlo comparison of one-shot distributed estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics.csv and figure.plot
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads, 0 for all CPUs [env: REBOOT_KIT_THREADS]
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated subset of methods; `full` is always included
        #[arg(long)]
        methods: Option<String>,
    },
    /// Parse and validate a scenario file without running it
    Validate { scenario: PathBuf },
    /// Print the version
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Version => {
            println!("reboot-kit {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Validate { scenario } => load_scenario(&scenario).map(|s| {
            println!(
                "{}: ok (N = {}, p = {}, {} grid points, {} replications)",
                s.name,
                s.n_total,
                s.p,
                s.m_grid.len(),
                s.replications
            );
        }),
        Command::Run {
            scenario,
            out,
            threads,
            seed,
            reps,
            methods,
        } => {
            let config = RunConfig {
                scenario_path: scenario,
                out_dir: out,
                methods,
                threads,
                replications: reps,
                seed,
            };
            let env = std::env::var(THREADS_ENV).ok();
            run(&config, env.as_deref()).map(|summary| {
                println!(
                    "{}: {} rows written to {}",
                    summary.scenario.name,
                    summary.rows.len(),
                    summary.metrics_path.display()
                );
            })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
