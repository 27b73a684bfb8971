use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jessi_core::cli::{cmd_ablate, cmd_eval, cmd_stability, cmd_synth, cmd_train, exit_code, RunConfig};
use jessi_core::{Error, Result};

#[derive(Parser)]
#[command(name = "jessi", version, about = "Suggestion mining with joint sentence encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `outputDir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus splits as CSV files.
    Synth,
    /// Train the fold models and write the ensemble manifest.
    Train,
    /// Score a trained ensemble on a labeled dataset.
    Eval {
        /// Manifest written by `train`; defaults to `<outputDir>/manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Labeled CSV to score; defaults to `test`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Summarize score spread across repeated runs per variant.
    Stability {
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Train and score the preset's ablation variants.
    Ablate,
}

fn run(cli: Cli) -> Result<()> {
    let path = cli.config.ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(out) = cli.out {
        cfg.paths.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    match cli.command {
        Command::Synth => {
            for (name, n, positives) in cmd_synth(&cfg, &cfg.paths.output_dir)? {
                println!("{name}: {n} sentences, {positives} suggestions");
            }
        }
        Command::Train => {
            let manifest = cmd_train(&cfg)?;
            for m in &manifest.members {
                println!("member fold {} score {:.4}", m.fold, m.score);
            }
        }
        Command::Eval { manifest, data } => {
            let manifest = manifest.unwrap_or_else(|| cfg.paths.output_dir.join("manifest.json"));
            let data = data
                .or_else(|| cfg.paths.test.clone())
                .ok_or_else(|| Error::Config("no dataset: set `test` or pass --data".into()))?;
            if !data.is_file() {
                return Err(Error::Config(format!("{} is not a readable file", data.display())));
            }
            let report = cmd_eval(&manifest, &data, cfg.test_domain(), cfg.length_bucket_width, &cfg.paths.output_dir)?;
            let p = &report.prf;
            println!("P={:.4} R={:.4}", p.precision, p.recall);
            println!("F1={:.4}", p.f1);
        }
        Command::Stability { runs } => {
            let report = cmd_stability(&cfg, runs)?;
            for r in &report.rows {
                println!("{}: min {:.4} max {:.4} mean {:.4} std {:.4}", r.model, r.min, r.max, r.mean, r.std);
            }
        }
        Command::Ablate => {
            let table = cmd_ablate(&cfg)?;
            for r in &table.rows {
                match r.f_score {
                    Some(f) => println!("{}: {f:.4}", r.model),
                    None => println!("{}: failed", r.model),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
