use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use carnot_homog::harness::{run, ExperimentConfig, RunOptions, TaskKind};
use carnot_homog::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    Action,
    Mu,
    EffectiveLagrangian,
    LimitSolve,
    Converge,
    Verify,
}

impl From<Task> for TaskKind {
    fn from(t: Task) -> Self {
        match t {
            Task::Action => TaskKind::Action,
            Task::Mu => TaskKind::Mu,
            Task::EffectiveLagrangian => TaskKind::EffectiveLagrangian,
            Task::LimitSolve => TaskKind::LimitSolve,
            Task::Converge => TaskKind::Converge,
            Task::Verify => TaskKind::Verify,
        }
    }
}

/// Stochastic homogenization experiments on Carnot groups.
///
/// Exit status: 0 success, 1 failed verification, 2 invalid input or
/// config (the message names the field), 3 solver infeasibility or
/// exhausted budget, 4 I/O failure.
#[derive(Debug, Parser)]
#[command(name = "carnot-homog", version)]
struct Cli {
    task: Task,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of environment seeds for Monte-Carlo tasks.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, env = "CARNOT_HOMOG_WORKERS")]
    workers: Option<usize>,
    /// Master seed; overrides `solver.master_seed`.
    #[arg(long, env = "CARNOT_HOMOG_SEED")]
    master_seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema { .. } | Error::Input(_) | Error::Range(_) => 2,
        Error::Infeasible(_) | Error::Budget(_) => 3,
        Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions { out_dir: cli.out, workers: cli.workers, seeds: cli.seeds, master_seed: cli.master_seed, plot: cli.plot };
    let result = ExperimentConfig::from_file(&cli.config).and_then(|cfg| run(cli.task.into(), &cfg, &opts));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("carnot-homog: verification failed: {}", outcome.manifest.summary);
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("carnot-homog: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
