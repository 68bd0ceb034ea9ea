#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fedmod::accountant::{
    calibrate_noise, default_orders, epsilons_per_order, rdp_subsampled_gaussian, rdp_to_epsilon, CalibrationOptions,
    Conversion,
};
use fedmod::experiment::{
    build_partition, load_dataset, run_experiment, supported_clients, training_plan, ExperimentConfig,
};
use fedmod::fedavg::evaluate;
use fedmod::model::{load_checkpoint, local_train, FeatureSet};
use fedmod::monitor::{monitor_resources, samples_csv, write_samples};
use fedmod::partition::write_manifest;
use fedmod::synth::{generate_records, write_csv, SynthSpec};

#[derive(Parser)]
#[command(name = "fedmod", version, about = "Federated harmful-content classifier simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one repetition's partition and write its manifest.
    Partition {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        /// Manifest path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every repetition of an experiment.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Report (epsilon, delta) for a subsampled Gaussian mechanism.
    Account {
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long)]
        noise_multiplier: f64,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        #[arg(long, default_value = "tight")]
        conversion: Conversion,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Find the smallest noise multiplier meeting a target epsilon.
    Calibrate {
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long)]
        target_epsilon: f64,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        #[arg(long, default_value = "tight")]
        conversion: Conversion,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Score a checkpoint on a repetition's test split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Sample CPU and memory of a local training run or of another process.
    Monitor(MonitorArgs),
    /// Write a synthetic two-class corpus as `id,text,label` CSV.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_examples: usize,
        #[arg(long, default_value_t = 0.4)]
        harmful_fraction: f64,
        #[arg(long, default_value_t = 200)]
        vocab_size: usize,
        #[arg(long, default_value_t = 0.1)]
        overlap: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SamplingArgs {
    /// Per-round sampling probability.
    #[arg(long, conflicts_with_all = ["expected_cohort", "population"])]
    q: Option<f64>,
    /// Mean cohort size under Poisson sampling (with --population).
    #[arg(long, requires = "population")]
    expected_cohort: Option<f64>,
    #[arg(long, requires = "expected_cohort")]
    population: Option<usize>,
}

impl SamplingArgs {
    fn q(&self) -> Result<f64> {
        match (self.q, self.expected_cohort, self.population) {
            (Some(q), _, _) => Ok(q),
            (None, Some(k), Some(n)) if n > 0 => Ok(k / n as f64),
            _ => bail!("give either --q or both --expected-cohort and --population"),
        }
    }
}

#[derive(Args)]
struct MonitorArgs {
    /// Experiment config whose first client is trained locally.
    #[arg(long, required_unless_present = "pid")]
    config: Option<PathBuf>,
    /// Monitor an existing process instead.
    #[arg(long, conflicts_with = "config")]
    pid: Option<u32>,
    /// Number of back-to-back local training runs.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Seconds between samples.
    #[arg(long, default_value_t = 2.0)]
    interval: f64,
    /// CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Kv,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("reading config {}", path.display()))
}

fn cmd_partition(config: PathBuf, repetition: usize, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&config)?;
    let corpus = load_dataset(&cfg)?;
    let max = supported_clients(&cfg, &corpus)?;
    let fd = build_partition(&cfg, corpus, repetition)?;
    let harmful_test = fd
        .test_set
        .iter()
        .filter(|&&i| fd.corpus.examples()[i].label.is_harmful())
        .count();
    eprintln!(
        "corpus {} examples; test {} ({} harmful); {} clients of {} (max {})",
        fd.corpus.len(),
        fd.test_set.len(),
        harmful_test,
        fd.clients.len(),
        fd.spec.client_size,
        max
    );
    match out {
        Some(p) => write_manifest(&fd, &p)?,
        None => print!("{}", fedmod::partition::manifest(&fd)),
    }
    Ok(())
}

fn cmd_train(config: PathBuf, output_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(d) = output_dir {
        cfg.run.output_dir = d;
    }
    let summary = run_experiment(&cfg)?;
    println!("setup,metric,mean,std");
    for r in &summary.rows {
        println!("{},{},{:.4},{:.4}", r.setup, r.metric, r.mean, r.std);
    }
    if let Some(p) = summary.privacy {
        println!(
            "epsilon = {:.4} at delta = {} (order {})",
            p.epsilon, p.delta, p.optimal_order
        );
    }
    eprintln!("results in {}", summary.output_dir.display());
    Ok(())
}

fn cmd_account(q: f64, z: f64, steps: u64, delta: f64, conversion: Conversion, format: Format) -> Result<()> {
    let orders = default_orders();
    let rdp = rdp_subsampled_gaussian(q, z, steps, &orders)?;
    let best = rdp_to_epsilon(&rdp, &orders, delta, conversion)?;
    match format {
        Format::Kv => {
            println!("q = {q}");
            println!("noise_multiplier = {z}");
            println!("steps = {steps}");
            println!("delta = {delta}");
            println!("conversion = {conversion}");
            println!("epsilon = {}", best.epsilon);
            println!("optimal_order = {}", best.optimal_order);
        }
        Format::Table => {
            let eps = epsilons_per_order(&rdp, &orders, delta, conversion);
            println!("{:>8}  {:>14}  {:>12}", "order", "rdp", "epsilon");
            for ((a, r), e) in orders.iter().zip(&rdp).zip(&eps) {
                let mark = if *a == best.optimal_order { "  *" } else { "" };
                println!("{a:>8}  {r:>14.6}  {e:>12.6}{mark}");
            }
            println!(
                "epsilon = {:.4}, delta = {}, order = {} (q = {q:.6}, z = {z}, steps = {steps}, {conversion})",
                best.epsilon, delta, best.optimal_order
            );
        }
    }
    Ok(())
}

fn cmd_calibrate(target: f64, q: f64, steps: u64, delta: f64, conversion: Conversion, format: Format) -> Result<()> {
    let opts = CalibrationOptions {
        conversion,
        ..Default::default()
    };
    let z = calibrate_noise(target, delta, q, steps, &opts)?;
    match format {
        Format::Kv => println!("noise_multiplier = {z}"),
        Format::Table => println!("noise_multiplier = {z:.4} for epsilon <= {target} at delta = {delta} (q = {q:.6}, steps = {steps}, {conversion})"),
    }
    Ok(())
}

fn cmd_evaluate(config: PathBuf, checkpoint: PathBuf, repetition: usize) -> Result<()> {
    let cfg = load_config(&config)?;
    let (params, spec) = load_checkpoint(&checkpoint)?;
    let corpus = load_dataset(&cfg)?;
    let fd = build_partition(&cfg, corpus, repetition)?;
    let spec = match spec {
        Some(s) => s,
        None => training_plan(&cfg, &fd, repetition)?.model,
    };
    let features = FeatureSet::from_corpus(&fd.corpus, &spec);
    let report = evaluate(&params, &fd, &features, &spec, cfg.run.threshold)?;
    for (name, v) in report.named_values() {
        println!("{name} = {v}");
    }
    println!("n_examples = {}", report.n_examples);
    Ok(())
}

fn cmd_monitor(args: MonitorArgs) -> Result<()> {
    if !(args.interval > 0.0) {
        bail!("--interval must be positive");
    }
    let interval = Duration::from_secs_f64(args.interval);
    let samples = match args.pid {
        Some(pid) => monitor_resources(pid, interval, None)?,
        None => {
            let cfg = load_config(args.config.as_ref().expect("clap enforces --config"))?;
            let corpus = load_dataset(&cfg)?;
            let fd = build_partition(&cfg, corpus, 0)?;
            let plan = training_plan(&cfg, &fd, 0)?;
            let features = FeatureSet::from_corpus(&fd.corpus, &plan.model);
            let global = fedmod::model::init_params(&plan.model);
            let shard = fd.clients.first().context("partition built no clients")?;
            let stop = AtomicBool::new(false);
            std::thread::scope(|s| -> Result<_> {
                let watcher = s.spawn(|| monitor_resources(std::process::id(), interval, Some(&stop)));
                let started = std::time::Instant::now();
                let trained = (0..args.repeat.max(1))
                    .try_for_each(|_| local_train(&global, shard, &features, &plan.train, &plan.model).map(|_| ()));
                let secs = started.elapsed().as_secs_f64();
                stop.store(true, Ordering::Relaxed);
                let samples = watcher.join().expect("monitor thread panicked")?;
                trained?;
                eprintln!("local training took {secs:.2} s");
                Ok(samples)
            })?
        }
    };
    match &args.out {
        Some(p) => write_samples(&samples, p)?,
        None => print!("{}", samples_csv(&samples)),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Partition {
            config,
            repetition,
            out,
        } => cmd_partition(config, repetition, out),
        Command::Train { config, output_dir } => cmd_train(config, output_dir),
        Command::Account {
            sampling,
            noise_multiplier,
            steps,
            delta,
            conversion,
            format,
        } => cmd_account(sampling.q()?, noise_multiplier, steps, delta, conversion, format),
        Command::Calibrate {
            sampling,
            target_epsilon,
            steps,
            delta,
            conversion,
            format,
        } => cmd_calibrate(target_epsilon, sampling.q()?, steps, delta, conversion, format),
        Command::Evaluate {
            config,
            checkpoint,
            repetition,
        } => cmd_evaluate(config, checkpoint, repetition),
        Command::Monitor(args) => cmd_monitor(args),
        Command::SynthData {
            out,
            n_examples,
            harmful_fraction,
            vocab_size,
            overlap,
            seed,
        } => {
            let spec = SynthSpec {
                n_examples,
                harmful_fraction,
                vocab_size,
                overlap,
                seed,
                ..Default::default()
            };
            write_csv(&generate_records(&spec)?, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
