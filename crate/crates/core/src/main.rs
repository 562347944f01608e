use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use queuelab::config::{parse_config_at, ExperimentConfig, Model};
use queuelab::runner::{self, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "queuelab",
    version,
    about = "Monte-Carlo experiments on queueing stability and tails"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write <model>.csv plus manifest.json.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u32>,
        /// Output directory; falls back to the config's `output`, then the
        /// environment variable, then ./queuelab-out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// List the available models.
    ListModels,
    /// Check the CSV digests recorded in a manifest.
    Verify { manifest: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_at(&text, base).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ListModels => {
            for m in Model::ALL {
                println!("{:<14} {}", m.name(), m.describe());
            }
            Ok(())
        }
        Command::Validate { config } => load(&config).map(|cfg| {
            println!(
                "{}: ok ({}, {} replication(s), {} row(s) each)",
                config.display(),
                cfg.model,
                cfg.replications,
                runner::rows_per_replication(&cfg.params)
            );
        }),
        Command::Verify { manifest } => runner::verify(&manifest)
            .map(|m| {
                for o in &m.outputs {
                    println!("{}: ok ({} rows)", o.file, o.rows);
                }
            })
            .map_err(|e| e.to_string()),
        Command::Run {
            config,
            seed,
            reps,
            out,
            threads,
        } => load(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                if r == 0 {
                    return Err("--reps must be ≥ 1".to_string());
                }
                cfg.replications = r;
            }
            if let Some(t) = threads {
                cfg.threads = Some(t).filter(|&t| t > 0);
            }
            let dir = out
                .or_else(|| cfg.output.clone())
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("queuelab-out"));
            let manifest = runner::run(&cfg, &dir).map_err(|e| e.to_string())?;
            for o in &manifest.outputs {
                println!("{}: {} rows", dir.join(&o.file).display(), o.rows);
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
