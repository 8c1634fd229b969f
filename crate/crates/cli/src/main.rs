//! `ccg`: data generation, posterior training, calibration, experiments and
//! the API server.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures.

use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccg_core::abduction::{generate_training_triplets, train_amortized_posterior, NpeConfig};
use ccg_core::envsim::FidelityLevel;
use ccg_core::harness::{
    calibrate_dataset, run_on, CalibrationFile, ExperimentConfig, Workbench, EXPERIMENTS,
};
use ccg_core::pipeline::{generate_dataset, write_dataset, write_hidden_noise, DatasetConfig};
use ccg_core::policy::PolicyTables;
use ccg_core::rng::derived;
use ccg_core::{Error, Result};
use ccg_service::ServiceConfig;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ccg", version, about = "Counterfactual and conformal counterfactual generation")]
struct Cli {
    /// Experiment configuration (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true, default_value_t = 11)]
    seed: u64,
    /// Directory for outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the factual / counterfactual dataset and its hidden-noise file.
    GenerateData,
    /// Train the amortized noise posterior for the configured twin.
    TrainPosterior,
    /// Calibrate the standard rule grid and write calibration.json.
    Calibrate,
    /// Run one experiment, or `all`.
    RunExperiment { name: String },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// A calibration.json written by `ccg calibrate`.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Append-only episode log; defaults to <out-dir>/episodes.jsonl.
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn generate_data(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let tables = PolicyTables::default();
    // Same stream as the experiment workbench, so the files reproduce it.
    let d = generate_dataset(cfg.dataset.records, &tables, &DatasetConfig::default(), &mut derived(seed, "dataset", 0))?;
    let data = out.join("dataset.jsonl");
    let hidden = out.join("hidden_noise.jsonl");
    write_dataset(&d.records, BufWriter::new(File::create(&data)?))?;
    write_hidden_noise(&d.hidden, BufWriter::new(File::create(&hidden)?))?;
    println!("wrote {} records to {} and {}", d.records.len(), data.display(), hidden.display());
    Ok(())
}

fn train_posterior(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let twin: FidelityLevel = cfg.generation.twin;
    let level = u64::from(twin.level());
    let data = generate_training_triplets(cfg.abduction.npe_triplets, twin, &mut derived(seed, "npe-data", level))?;
    let npe = NpeConfig {
        epochs: cfg.abduction.npe_epochs,
        ..NpeConfig::default()
    };
    let (model, report) = train_amortized_posterior(&data, &npe, &mut derived(seed, "npe-train", level))?;
    let path = out.join("posterior.json");
    model.save(&path)?;
    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!("trained on {} triplets, final loss {last:.4}; wrote {}", data.len(), path.display());
    Ok(())
}

fn calibrate(cfg: ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let wb = Workbench::new(cfg, seed)?;
    let cal = calibrate_dataset(&wb)?;
    let path = out.join("calibration.json");
    cal.save(&path)?;
    match cal.lambda() {
        Some(l) => println!(
            "certified {} of {} configurations; chosen {:?}; wrote {}",
            cal.outcome.valid.len(),
            cal.grid.configs.len(),
            l,
            path.display()
        ),
        None => println!(
            "abstained: no configuration certified (smallest p-value {:.4}); wrote {}",
            cal.min_p_value().unwrap_or(1.0),
            path.display()
        ),
    }
    Ok(())
}

fn run_experiments(cfg: ExperimentConfig, seed: u64, name: &str, out: &Path) -> Result<()> {
    let names: Vec<&str> = if name == "all" { EXPERIMENTS.to_vec() } else { vec![name] };
    if let Some(bad) = names.iter().find(|n| !EXPERIMENTS.contains(n)) {
        return Err(Error::Usage(format!(
            "unknown experiment {bad:?}; expected one of {} or all",
            EXPERIMENTS.join(", ")
        )));
    }
    let wb = Workbench::new(cfg, seed)?;
    for n in names {
        let m = run_on(&wb, n, out)?;
        println!("{n}: {} rows in {:.1} s -> {}", m.rows, m.wall_time_s, m.files.join(", "));
    }
    Ok(())
}

fn serve(cfg: ExperimentConfig, seed: u64, out: &Path, addr: SocketAddr, cal: Option<PathBuf>, store: Option<PathBuf>) -> Result<()> {
    let config = ServiceConfig {
        seed,
        store: Some(store.unwrap_or_else(|| out.join("episodes.jsonl"))),
        calibration: cal.as_deref().map(CalibrationFile::load).transpose()?,
        abduction: cfg.abduction,
        twin: cfg.generation.twin,
        k_max: cfg.generation.k_max,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(ccg_service::serve(addr, config))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::GenerateData => generate_data(&cfg, cli.seed, out),
        Command::TrainPosterior => train_posterior(&cfg, cli.seed, out),
        Command::Calibrate => calibrate(cfg, cli.seed, out),
        Command::RunExperiment { name } => run_experiments(cfg, cli.seed, &name, out),
        Command::Serve { addr, calibration, store } => serve(cfg, cli.seed, out, addr, calibration, store),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Usage(_)) { 2 } else { 1 })
        }
    }
}
