use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forest_tuning::harness::{self, HarnessError, Overrides, RunConfig};
use forest_tuning::objective::CostMode;

#[derive(Parser)]
#[command(name = "forest-tune", version, about = "Tune random forests for accuracy, stability and cost")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Histogram prediction deltas between retrained forests.
    Stability(Common),
    /// Evaluate a (n_trees, max_depth) grid.
    Sweep(Common),
    /// Bayesian tuning per weight set, compared with the baseline forest.
    Tune(Common),
    /// Write the configured synthetic dataset as CSV.
    Generate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Wall,
    Model,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    cost_mode: Option<CostArg>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::from_json("{}")?,
        };
        config.apply(&Overrides {
            seed: self.seed,
            output_dir: self.out.clone(),
            cost_mode: self.cost_mode.map(|m| match m {
                CostArg::Wall => CostMode::WallClock,
                CostArg::Model => CostMode::Deterministic,
            }),
        });
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Stability(args) => {
            let config = args.resolve()?;
            for row in harness::cmd_stability(&config)? {
                println!("n_trees={} rmspd={:.6} mean_delta={:.6}", row.n_trees, row.rmspd, row.mean_delta);
            }
        }
        Command::Sweep(args) => {
            let config = args.resolve()?;
            let grid = harness::cmd_sweep(&config)?;
            for k in 0..grid.weights.len() {
                if let Some((nt, d)) = grid.argmin_loss(k) {
                    println!("weights {k}: loss argmin at n_trees={nt} max_depth={d}");
                }
            }
            if let Some((nt, d)) = grid.argmax_auc() {
                println!("auc argmax at n_trees={nt} max_depth={d}");
            }
            if grid.failed() > 0 {
                eprintln!("{} cell(s) failed", grid.failed());
            }
        }
        Command::Tune(args) => {
            let config = args.resolve()?;
            let report = harness::cmd_tune(&config)?;
            for row in &report.rows {
                println!(
                    "{:8} a={} b={} g={} n_trees={} max_depth={} p={:.3} auc={:.4} rmspd={:.4} runtime={:.4} loss={:.5}",
                    row.kind,
                    row.alpha,
                    row.beta,
                    row.gamma,
                    row.n_trees,
                    row.max_depth.map_or_else(|| "unlimited".to_owned(), |d| d.to_string()),
                    row.train_proportion,
                    row.auc,
                    row.rmspd,
                    row.runtime,
                    row.loss
                );
            }
        }
        Command::Generate(args) => {
            let config = args.resolve()?;
            let path = harness::cmd_generate(&config)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
