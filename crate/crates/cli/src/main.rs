use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vistim_cli::commands::{cmd_extract, cmd_rank, cmd_run, cmd_synth};
use vistim_cli::config::{ExperimentConfig, Overrides};
use vistim_cli::CliError;
use vistim_core::synthetic::{SyntheticConfig, Variant};

#[derive(Parser)]
#[command(name = "vistim", version, about = "Shape, color and texture influence experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and cache descriptors for every manifest entry.
    Extract,
    /// Run the training-fraction sweep and write reports.
    Run,
    /// Rank stimuli from one or more summary CSVs.
    Rank {
        /// Reference training fraction (default: rank.fraction from the config, else 0.5).
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Generate a synthetic isolation dataset with a matching configuration.
    Synth {
        #[arg(long, value_parser = |s: &str| s.parse::<Variant>().map_err(|e| e.to_string()))]
        variant: Variant,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 128)]
        size: u32,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out.clone(),
    });
    Ok(cfg)
}

fn init_threads(jobs: usize) -> Result<(), CliError> {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Extract => {
            let cfg = load_config(&cli)?;
            init_threads(cfg.jobs)?;
            let s = cmd_extract(cfg)?;
            println!("{} written, {} cached, {} failed", s.written, s.reused, s.failures.len());
            if !s.failures.is_empty() {
                for (path, descriptor, msg) in &s.failures {
                    eprintln!("  {} [{descriptor}]: {msg}", path.display());
                }
                return Err(CliError::Data(format!("{} extractions failed", s.failures.len())));
            }
            Ok(())
        }
        Command::Run => {
            let cfg = load_config(&cli)?;
            init_threads(cfg.jobs)?;
            let out = cmd_run(cfg)?;
            println!("wrote {} and {}", out.summary_csv.display(), out.svg.display());
            Ok(())
        }
        Command::Rank { fraction, reports } => {
            let cfg = match &cli.config {
                Some(_) => Some(load_config(&cli)?),
                None => None,
            };
            let fraction = fraction.or(cfg.as_ref().map(|c| c.rank.fraction)).unwrap_or(0.5);
            let out = cli
                .out
                .clone()
                .or(cfg.map(|c| c.out))
                .unwrap_or_else(|| PathBuf::from("."));
            cmd_rank(reports, fraction, &out)?;
            Ok(())
        }
        Command::Synth {
            variant,
            per_class,
            size,
        } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::Validation("synth needs --out".into()))?;
            let config = SyntheticConfig {
                per_class: *per_class,
                size: *size,
                seed: cli.seed.unwrap_or(SyntheticConfig::default().seed),
            };
            let path = cmd_synth(*variant, &config, &out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vistim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
