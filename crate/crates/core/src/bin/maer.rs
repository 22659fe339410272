use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maer::experiment::{parse_config_text, run_grid, summarize, ExperimentGrid};
use maer::Error;

/// Continual-learning benchmark runner.
///
/// Without a subcommand, runs an experiment grid. Settings come from
/// `--config FILE` (key = value lines) and are overridden by flags.
#[derive(Parser, Debug)]
#[command(name = "maer", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a methods × memory-size table from a results directory.
    Summarize { dir: PathBuf },
}

#[derive(clap::Args, Debug, Default)]
struct RunArgs {
    /// pmnist, rmnist, split-mnist or synthetic
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_name = "PATH")]
    mnist_dir: Option<String>,
    #[arg(long, value_name = "T")]
    tasks: Option<String>,
    #[arg(long, value_name = "N")]
    train_per_task: Option<String>,
    #[arg(long, value_name = "N")]
    test_per_task: Option<String>,
    /// Comma-separated method names
    #[arg(long, value_name = "NAME[,NAME...]")]
    method: Option<String>,
    #[arg(long, value_name = "K[,K...]")]
    mem_size: Option<String>,
    #[arg(long, value_name = "S1,S2,...")]
    seeds: Option<String>,
    #[arg(long, value_name = "E")]
    epochs: Option<String>,
    #[arg(long, value_name = "F")]
    lr: Option<String>,
    #[arg(long, value_name = "B")]
    batch_size: Option<String>,
    #[arg(long, value_name = "B")]
    replay_batch_size: Option<String>,
    /// exact, fast, or fast:<refresh interval>
    #[arg(long)]
    mes_mode: Option<String>,
    #[arg(long, value_name = "true|false")]
    task_aware_eval: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn pairs(&self) -> Vec<(String, String)> {
        let flags = [
            ("dataset", &self.dataset),
            ("mnist-dir", &self.mnist_dir),
            ("tasks", &self.tasks),
            ("train-per-task", &self.train_per_task),
            ("test-per-task", &self.test_per_task),
            ("method", &self.method),
            ("mem-size", &self.mem_size),
            ("seeds", &self.seeds),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("batch-size", &self.batch_size),
            ("replay-batch-size", &self.replay_batch_size),
            ("mes-mode", &self.mes_mode),
            ("task-aware-eval", &self.task_aware_eval),
            ("out", &self.out),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let mut grid = ExperimentGrid::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        grid.apply(&parse_config_text(&text)?)?;
    }
    grid.apply(&args.pairs())?;
    let records = run_grid(&grid)?;
    for r in &records {
        eprintln!(
            "{:<13} mem {:>4} seed {:>3}  ACC {:6.2}%  ({:.1}s)",
            r.method.name(),
            r.mem_size,
            r.seed,
            100.0 * r.acc,
            r.wall_time_s
        );
    }
    print!("{}", summarize(&grid.out_dir)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Some(Command::Summarize { dir }) => summarize(dir).map(|t| print!("{t}")),
        None => run(&cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
