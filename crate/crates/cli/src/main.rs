use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fapnet_cli::{CliError, CliResult, Combo, Context, EvalTarget, RunConfig};

#[derive(Parser)]
#[command(name = "fapnet", version, about = "Traffic-aware flying access point placement experiments")]
struct Cli {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Base directory for scenarios, runs and results.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Evaluation threads. Outputs are identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Suppress progress lines.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario set.
    Generate {
        #[arg(long)]
        set: String,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        first_id: Option<u64>,
        /// Refuse ids shared with this set; ids start after its largest.
        #[arg(long)]
        disjoint_from: Option<String>,
    },
    /// Train an agent, checkpointing at the sweep points.
    Train {
        /// ddqn+spec, ddqn+gen, ddpg+spec or ddpg+gen.
        #[arg(long)]
        agent: String,
        /// Training set; spec defaults to the test set, gen to `train`.
        #[arg(long)]
        train_set: Option<String>,
        #[arg(long, default_value = "test")]
        test_set: String,
        /// Continue from the latest checkpoint of the run.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint directory, `baseline` or `oracle` on a test set.
    Evaluate {
        #[arg(long)]
        policy: String,
        #[arg(long, default_value = "test")]
        test_set: String,
        /// Results subdirectory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate every checkpoint of a run and tabulate median utility.
    Sweep {
        /// Run directory or agent combo such as ddqn+spec.
        #[arg(long)]
        run: String,
        #[arg(long, default_value = "test")]
        test_set: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Print the effective configuration.
    Config,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut ctx = Context::new(config, cli.out_dir);
    ctx.jobs = cli.jobs;
    ctx.verbose = !cli.quiet;
    match cli.command {
        Command::Generate { set, count, first_id, disjoint_from } => {
            fapnet_cli::generate(&ctx, &set, count, first_id, disjoint_from.as_deref())?;
        }
        Command::Train { agent, train_set, test_set, resume } => {
            let combo: Combo = agent.parse()?;
            fapnet_cli::train(&ctx, combo, train_set.as_deref(), &test_set, resume)?;
        }
        Command::Evaluate { policy, test_set, name } => {
            fapnet_cli::evaluate(&ctx, &EvalTarget::parse(&policy), &test_set, name.as_deref())?;
        }
        Command::Sweep { run, test_set, name } => {
            let dir = match run.parse::<Combo>() {
                Ok(combo) => ctx.run_dir(combo),
                Err(_) => PathBuf::from(run),
            };
            fapnet_cli::sweep(&ctx, &dir, &test_set, name.as_deref())?;
        }
        Command::Config => print!("{}", ctx.config.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fapnet: {e}");
            e.into()
        }
    }
}
