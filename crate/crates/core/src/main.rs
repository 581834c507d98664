use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hybeam::cli;
use hybeam::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Dual-band hybrid beamforming workbench.
#[derive(Parser)]
#[command(name = "hybeam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration (desk-scale defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config entry, e.g. --set scenario.noise=0.05 (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
    /// Override both the data and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the artifacts directory.
    #[arg(long)]
    out: Option<String>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let config = RunConfig::load(
            self.config.as_deref(),
            &self.sets,
            self.seed,
            self.out.as_deref(),
        )?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/test channel datasets of a run.
    GenData(CommonArgs),
    /// Train the configured model and write checkpoint + learning curve.
    Train(CommonArgs),
    /// Evaluate the trained checkpoint under the configured experiment.
    Eval(CommonArgs),
    /// Run the classical baselines on the run's test set.
    Baseline(CommonArgs),
    /// Train and evaluate the 2x2 attention/residual ablation grid.
    Ablate(CommonArgs),
    /// Merge all results*.csv under an output directory into merged.csv
    /// plus plot-ready series files.
    Report {
        /// Directory holding run artifact directories.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(args) => {
            let config = args.load()?;
            let dir = cli::cmd_gen_data(&config)?;
            println!("datasets written to {}", dir.display());
        }
        Command::Train(args) => {
            let config = args.load()?;
            let outcome = cli::cmd_train(&config)?;
            let last = outcome.report.curve.last().expect("at least one epoch");
            println!(
                "trained {} epochs; final train/test sum SE {:.4}/{:.4}; checkpoint {}",
                outcome.report.curve.len(),
                last.train_sum_se,
                last.test_sum_se,
                outcome.checkpoint.display()
            );
        }
        Command::Eval(args) => {
            let config = args.load()?;
            let rows = cli::cmd_eval(&config)?;
            for row in &rows {
                println!("{}", row.to_csv());
            }
        }
        Command::Baseline(args) => {
            let config = args.load()?;
            let rows = cli::cmd_baseline(&config)?;
            for row in &rows {
                println!("{}", row.to_csv());
            }
        }
        Command::Ablate(args) => {
            let config = args.load()?;
            let rows = cli::cmd_ablate(&config)?;
            for row in &rows {
                println!("{}", row.to_csv());
            }
        }
        Command::Report { out } => {
            let merged = cli::cmd_report(&out)?;
            println!("merged results at {}", merged.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
