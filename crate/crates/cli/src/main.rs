use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qrt::commands;
use qrt::config::{Preset, RunConfig};
use qrt::error::CliError;
use qrt_core::Backend;

#[derive(Parser)]
#[command(name = "qrt", version, about = "Dispersive readout simulation and discriminator evaluation")]
struct Cli {
    /// TOML run configuration
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Preset used when no config file is given
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Base seed; every nested seed is derived from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// More logging (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize train, test and Rabi datasets
    Synth,
    /// Find the noise level giving a target raw assignment fidelity
    CalibrateNoise {
        #[arg(long)]
        target: Option<f64>,
    },
    /// Fit discriminators on a labelled dataset
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// raw, fnn, trmnn or all; repeatable
        #[arg(long = "backend", default_value = "all")]
        backends: Vec<String>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Assignment fidelity on the test set
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Rabi curves, fidelities and variances
    Rabi {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Print tables from existing reports
    Report,
    /// synth, train, eval, rabi and report in sequence
    Run,
    /// Demodulate every shot of a dataset to CSV
    Demod {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Raw discriminant summary on a labelled dataset
    RawEval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
}

fn parse_backends(names: &[String]) -> Result<Vec<Backend>, CliError> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(Backend::ALL);
        } else {
            out.push(n.parse::<Backend>().map_err(|e| CliError::Config(e.to_string()))?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("QRT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("QRT_THREADS={v} is not a positive integer")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::info!("sequential build, QRT_THREADS={n} ignored");
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("--preset and --config are mutually exclusive".into()))
        }
        (Some(path), None) => RunConfig::load(path)?,
        (None, p) => RunConfig::preset(p.unwrap_or_default()),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::CalibrateNoise { target } => commands::calibrate_noise(&cfg, target),
        Command::Train { dataset, backends, models } => {
            let which = parse_backends(&backends)?;
            let dataset = commands::dataset_path(&cfg, dataset, commands::TRAIN_FILE);
            commands::train(&cfg, &dataset, &which, &commands::models_dir(&cfg, models))
        }
        Command::Eval { dataset, models } => {
            let dataset = commands::dataset_path(&cfg, dataset, commands::TEST_FILE);
            commands::eval(&cfg, &dataset, &commands::models_dir(&cfg, models))
        }
        Command::Rabi { dataset, models } => {
            let dataset = commands::dataset_path(&cfg, dataset, commands::RABI_FILE);
            commands::rabi(&cfg, &dataset, &commands::models_dir(&cfg, models))
        }
        Command::Report => commands::report(&cfg),
        Command::Run => commands::run_all(&cfg),
        Command::Demod { dataset, output } => commands::demod(&dataset, output.as_deref()),
        Command::RawEval { dataset, models } => {
            let dataset = commands::dataset_path(&cfg, dataset, commands::TEST_FILE);
            commands::raw_eval(&cfg, &dataset, &commands::models_dir(&cfg, models))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qrt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
