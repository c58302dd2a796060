use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use glimpsekit::config::ExperimentConfig;
use glimpsekit::experiment;

#[derive(Parser)]
#[command(name = "glimpsekit", about = "Budgeted glimpse selection and tile search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-set or open-set experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate scene JSON files plus objectness and gist maps.
    GenScenes {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score an external detections CSV against scene files.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let outcome = experiment::run_experiment(&cfg, &out_dir)?;
            eprintln!("processed {} scenes", outcome.scenes);
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        Command::GenScenes { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let files = experiment::generate_scene_files(&cfg, &out_dir)?;
            eprintln!("wrote {} files to {}", files.len(), out_dir.display());
        }
        Command::Eval {
            detections,
            scenes,
            out,
        } => {
            let n = experiment::eval_external(&detections, &scenes, &out)?;
            eprintln!("evaluated {n} scenes");
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
