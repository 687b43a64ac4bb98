//! `skillchain`: command-line front end of the skill-program toolchain.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "skillchain", version, about = "Synthesize, simulate, learn and optimize robot skill programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a skill program from a knowledge base.
    Synth(SynthArgs),
    /// Execute a program on the simulator.
    Exec(ExecArgs),
    /// Collect skill records for surrogate training.
    Collect(CollectArgs),
    /// Train one surrogate per skill type.
    Train(TrainArgs),
    /// Optimize the free parameters of a program through its surrogates.
    Optimize(OptimizeArgs),
    /// Monte-Carlo evaluation of a program.
    Evaluate(EvaluateArgs),
    /// Operation loop with fine-tuning, re-optimization and drift alarms.
    Lifecycle(LifecycleArgs),
    /// Prove or refuse a query against a knowledge base.
    Explain(ExplainArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub task: String,
    /// Synthesized program (canonical text).
    #[arg(long)]
    pub out: PathBuf,
    /// Include the proof trace; printed to stdout without --report.
    #[arg(long)]
    pub explain: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExecArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub episodes: u64,
    /// Skill records as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct CollectArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub episodes: u64,
    #[arg(long)]
    pub seed: u64,
    /// Skill records as JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Draw every free parameter uniformly within its bounds per episode.
    #[arg(long)]
    pub randomize_params: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Skill records as JSON lines.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long)]
    pub seed: u64,
    /// Model directory (one checkpoint per skill type).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long)]
    pub seed: u64,
    /// Optimized program (canonical text).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[arg(long)]
    pub episodes: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct LifecycleArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    /// World config; a `drift` entry moves the hole during operation.
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub loss: Option<PathBuf>,
    /// Lifecycle config JSON; flags below override its fields.
    #[arg(long)]
    pub lifecycle_config: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub finetune_every: Option<u64>,
    #[arg(long)]
    pub no_reoptimize: bool,
    /// Disable fine-tuning (and with it re-optimization).
    #[arg(long)]
    pub no_finetune: bool,
    #[arg(long)]
    pub seed: u64,
    /// Per-episode log as CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for the fine-tuned models at the end of the run.
    #[arg(long)]
    pub models_out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Atom to prove, e.g. `requires_search(t1)`; variables allowed.
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Exec(a) => commands::exec(a),
        Command::Collect(a) => commands::collect(a),
        Command::Train(a) => commands::train(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Lifecycle(a) => commands::lifecycle(a),
        Command::Explain(a) => commands::explain(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
