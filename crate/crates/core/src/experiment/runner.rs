use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::config::{ClientCount, ClipChoice, DatasetKind, ExperimentConfig, SamplingChoice};
use crate::accountant::{report_epsilon, AccountantInput, PrivacySpec};
use crate::dp::{DivisorMode, DpConfig};
use crate::error::{Error, Result};
use crate::fedavg::{run_training, SamplingKind, SamplingPolicy, TrainingHistory, TrainingPlan};
use crate::ingest::{build_corpus, load_corpus, Corpus};
use crate::model::{save_checkpoint, FeatureSet, ModelSpec, TrainConfig};
use crate::partition::{
    max_clients, partition, round_count, split_test, write_manifest, ClientShard, FederatedDataset, PartitionSpec, Pool,
};
use crate::rng::{derive_seed, substream};
use crate::synth;

/// Loads (or generates) the corpus named by the dataset section.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Corpus> {
    let d = &config.dataset;
    match d.kind {
        DatasetKind::Synthetic => synth::generate_corpus(&d.synthetic),
        DatasetKind::Csv => {
            let path = d.path.as_ref().ok_or(Error::Config {
                key: "dataset.path".into(),
                reason: "required for csv datasets".into(),
            })?;
            let schema = d.schema()?;
            let raw = load_corpus(path, &schema, &d.mapping)?;
            let stopwords = d.stopwords.load()?;
            Ok(build_corpus(&raw, &schema, &stopwords, d.remove_hapax)?.0)
        }
    }
}

/// Seeds of one repetition, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepetitionSeeds {
    pub partition: u64,
    pub init: u64,
    pub train: u64,
    pub sampling: u64,
    pub noise: u64,
    pub centralized: u64,
}

impl RepetitionSeeds {
    pub fn derive(master_seed: u64, repetition: usize) -> Self {
        let rep = derive_seed(master_seed, "repetition", repetition as u64);
        Self {
            partition: derive_seed(rep, "partition", 0),
            init: derive_seed(rep, "init", 0),
            train: derive_seed(rep, "train", 0),
            sampling: derive_seed(rep, "sampling", 0),
            noise: derive_seed(rep, "noise", 0),
            centralized: derive_seed(rep, "centralized", 0),
        }
    }
}

fn partition_spec(config: &ExperimentConfig, seeds: &RepetitionSeeds) -> PartitionSpec {
    PartitionSpec {
        seed: seeds.partition,
        ..config.partition.clone()
    }
}

fn model_spec(config: &ExperimentConfig, seeds: &RepetitionSeeds) -> ModelSpec {
    ModelSpec {
        init_seed: seeds.init,
        ..config.model.clone()
    }
}

/// Builds this repetition's partition.
pub fn build_partition(config: &ExperimentConfig, corpus: Corpus, repetition: usize) -> Result<FederatedDataset> {
    let seeds = RepetitionSeeds::derive(config.run.master_seed, repetition);
    let n = match config.n_clients {
        ClientCount::Fixed(n) => Some(n),
        ClientCount::Max => None,
    };
    partition(corpus, &partition_spec(config, &seeds), n)
}

/// The federated training plan of one repetition.
pub fn training_plan(config: &ExperimentConfig, fd: &FederatedDataset, repetition: usize) -> Result<TrainingPlan> {
    let seeds = RepetitionSeeds::derive(config.run.master_seed, repetition);
    let s = &config.sampling;
    let kind = match s.kind {
        SamplingChoice::FixedCohort => SamplingKind::FixedCohort(s.cohort.clone().unwrap_or_else(|| fd.client_ids())),
        SamplingChoice::Uniform => SamplingKind::Uniform(s.k),
        SamplingChoice::Poisson => SamplingKind::Poisson(s.mean),
    };
    let dp = config.dp.enabled.then(|| DpConfig {
        noise_multiplier: config.dp.noise_multiplier,
        clip: config.dp.clip_mode(),
        delta: config.dp.delta,
        divisor_mode: config.dp.divisor_mode.unwrap_or(match s.kind {
            SamplingChoice::Poisson => DivisorMode::ExpectedCohort,
            _ => DivisorMode::ActualCohort,
        }),
        noise_seed: seeds.noise,
    });
    Ok(TrainingPlan {
        model: model_spec(config, &seeds),
        train: TrainConfig {
            seed: seeds.train,
            ..config.train.clone()
        },
        policy: SamplingPolicy {
            kind,
            seed: seeds.sampling,
        },
        dp,
        rounds: config.run.rounds,
        eval_every: config.run.eval_every,
        threshold: config.run.threshold,
    })
}

/// Draws a class-balanced centralized training set from the post-test pool.
pub fn draw_training_set(pool: &Pool, size: usize, harmful_ratio: f64, seed: u64) -> Result<Vec<usize>> {
    let h = round_count(harmful_ratio * size as f64).min(size);
    let n = size - h;
    for (class, need, have) in [("harmful", h, pool.harmful.len()), ("normal", n, pool.normal.len())] {
        if need > have {
            return Err(Error::InsufficientExamples {
                class,
                needed: need,
                available: have,
            });
        }
    }
    let mut harmful = pool.harmful.clone();
    let mut normal = pool.normal.clone();
    harmful.shuffle(&mut substream(seed, "centralized-harmful", 0));
    normal.shuffle(&mut substream(seed, "centralized-normal", 0));
    let mut out: Vec<usize> = harmful[..h].iter().chain(&normal[..n]).copied().collect();
    out.sort_unstable();
    Ok(out)
}

/// Centralized counterpart of `fd`: same test split, one data holder with
/// the drawn training set, no DP, same rounds and local epochs.
pub fn centralized_dataset(
    config: &ExperimentConfig,
    fd: &FederatedDataset,
    repetition: usize,
) -> Result<FederatedDataset> {
    let seeds = RepetitionSeeds::derive(config.run.master_seed, repetition);
    let (test_set, pool) = split_test(&fd.corpus, &fd.spec)?;
    let size = match config.run.centralized_train_size {
        0 => fd.clients.len() * fd.spec.client_size,
        n => n,
    };
    let ratio = config
        .run
        .centralized_harmful_ratio
        .unwrap_or(config.partition.client_harmful_ratio);
    let indices = draw_training_set(&pool, size, ratio, seeds.centralized)?;
    let harmful_count = indices
        .iter()
        .filter(|&&i| fd.corpus.examples()[i].label.is_harmful())
        .count();
    Ok(FederatedDataset {
        corpus: fd.corpus.clone(),
        test_set,
        clients: vec![ClientShard {
            client_id: 0,
            indices,
            harmful_count,
        }],
        spec: fd.spec.clone(),
    })
}

/// Privacy guarantee of a DP plan over `population` clients.
///
/// Fixed cohorts get no sampling amplification (q = 1); uniform sampling of
/// `k` clients is accounted as Poisson with q = k / population.
pub fn plan_privacy(plan: &TrainingPlan, population: usize, config: &ExperimentConfig) -> Result<Option<PrivacySpec>> {
    let Some(dp) = &plan.dp else { return Ok(None) };
    let q = match plan.policy.kind {
        SamplingKind::FixedCohort(_) => 1.0,
        _ => plan.policy.sampling_probability(population),
    };
    let input = AccountantInput {
        sampling_probability: q,
        noise_multiplier: dp.noise_multiplier,
        steps: plan.rounds,
        orders: crate::accountant::default_orders(),
    };
    report_epsilon(&input, dp.delta, config.dp.conversion).map(Some)
}

pub const METRICS: [&str; 8] = [
    "auc",
    "accuracy",
    "precision_weighted",
    "recall_weighted",
    "f1_weighted",
    "precision_harmful",
    "recall_harmful",
    "f1_harmful",
];

/// Per-round CSV log. Metric cells are empty on rounds without evaluation.
pub fn round_log_csv(history: &TrainingHistory, wall_time: bool) -> String {
    let mut out = String::from(
        "round,n_participants,skipped,mean_delta_norm,max_delta_norm,clipped_fraction,update_norm,\
         clip_norm,noise_multiplier,divisor,noise_seed",
    );
    for m in METRICS {
        out.push(',');
        out.push_str(m);
    }
    if wall_time {
        out.push_str(",wall_time_s");
    }
    out.push('\n');
    for r in &history.rounds {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.round_index,
            r.participant_ids.len(),
            r.skipped,
            r.mean_delta_norm(),
            r.max_delta_norm(),
            r.clipped_fraction,
            r.update_norm
        );
        match &r.dp {
            Some(d) => {
                let _ = write!(
                    out,
                    ",{},{},{},{}",
                    d.clip_norm, d.noise_multiplier, d.divisor, d.noise_seed
                );
            }
            None => out.push_str(",,,,"),
        }
        match &r.eval {
            Some(e) => {
                for (_, v) in e.named_values() {
                    let _ = write!(out, ",{v}");
                }
            }
            None => out.push_str(&",".repeat(METRICS.len())),
        }
        if wall_time {
            let _ = write!(out, ",{:.6}", r.wall_time);
        }
        out.push('\n');
    }
    out
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `federated` or `centralized`.
    pub setup: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    /// Final-evaluation value of each repetition.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub federated: Vec<TrainingHistory>,
    pub centralized: Vec<TrainingHistory>,
    pub rows: Vec<SummaryRow>,
    pub privacy: Option<PrivacySpec>,
    pub output_dir: PathBuf,
}

impl Summary {
    pub fn row(&self, setup: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.setup == setup && r.metric == metric)
    }
}

fn summary_rows(setup: &str, histories: &[TrainingHistory]) -> Vec<SummaryRow> {
    let finals: Vec<[(&str, f64); 8]> = histories
        .iter()
        .filter_map(|h| h.last_eval().map(|e| e.named_values()))
        .collect();
    METRICS
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let values: Vec<f64> = finals.iter().map(|f| f[k].1).collect();
            let (mean, std) = mean_std(&values);
            SummaryRow {
                setup: setup.into(),
                metric: (*m).into(),
                mean,
                std,
                values,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("setup,metric,mean,std,values\n");
    for r in rows {
        let values: Vec<String> = r.values.iter().map(f64::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.setup,
            r.metric,
            r.mean,
            r.std,
            values.join(";")
        );
    }
    out
}

fn accountant_report(config: &ExperimentConfig, plan: &TrainingPlan, population: usize, p: &PrivacySpec) -> String {
    let mut out = String::new();
    let q = match plan.policy.kind {
        SamplingKind::FixedCohort(_) => 1.0,
        _ => plan.policy.sampling_probability(population),
    };
    let _ = writeln!(out, "population = {population}");
    let _ = writeln!(out, "sampling_probability = {q}");
    let _ = writeln!(out, "noise_multiplier = {}", config.dp.noise_multiplier);
    let _ = writeln!(out, "steps = {}", plan.rounds);
    let _ = writeln!(out, "delta = {}", p.delta);
    let _ = writeln!(out, "conversion = {}", config.dp.conversion);
    let _ = writeln!(out, "epsilon = {}", p.epsilon);
    let _ = writeln!(out, "optimal_order = {}", p.optimal_order);
    if config.dp.clip == ClipChoice::Adaptive {
        out.push_str("# epsilon excludes clip-adaptation cost\n");
    }
    if let SamplingKind::Uniform(_) = plan.policy.kind {
        out.push_str("# uniform fixed-size sampling accounted as Poisson with q = k / population\n");
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_context<T>(context: impl FnOnce() -> String, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Run {
        context: context(),
        source: Box::new(e),
    })
}

/// Runs every repetition and writes the results under `run.output_dir`.
///
/// Files: `config.txt`, `rep{r}_partition.txt`, `rep{r}_rounds.csv`,
/// `rep{r}_model.bin` (when checkpoints are on), `rep{r}_centralized_rounds.csv`
/// (baseline only), `summary.csv`, and `accountant.txt` (DP only).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    let out_dir = config.run.output_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write(&out_dir.join("config.txt"), &config.to_text())?;

    let corpus = with_context(|| "loading dataset".into(), load_dataset(config))?;
    let features = FeatureSet::from_corpus(&corpus, &config.model);

    let mut federated = Vec::with_capacity(config.run.repetitions);
    let mut centralized = Vec::new();
    let mut privacy = None;
    for rep in 0..config.run.repetitions {
        let ctx = |what: &str| format!("repetition {rep}: {what}");
        let fd = with_context(|| ctx("partition"), build_partition(config, corpus.clone(), rep))?;
        write_manifest(&fd, &out_dir.join(format!("rep{rep}_partition.txt")))?;
        let plan = with_context(|| ctx("plan"), training_plan(config, &fd, rep))?;
        let history = with_context(|| ctx("federated training"), run_training(&fd, &features, &plan))?;
        write(
            &out_dir.join(format!("rep{rep}_rounds.csv")),
            &round_log_csv(&history, config.run.wall_time),
        )?;
        if config.run.save_checkpoints {
            save_checkpoint(
                &out_dir.join(format!("rep{rep}_model.bin")),
                &history.final_params,
                &plan.model,
            )?;
        }
        if rep == 0 {
            privacy = with_context(|| ctx("accounting"), plan_privacy(&plan, fd.clients.len(), config))?;
            if let Some(p) = &privacy {
                write(
                    &out_dir.join("accountant.txt"),
                    &accountant_report(config, &plan, fd.clients.len(), p),
                )?;
            }
        }
        if config.run.centralized_baseline {
            let cd = with_context(|| ctx("centralized split"), centralized_dataset(config, &fd, rep))?;
            let cplan = TrainingPlan {
                policy: SamplingPolicy {
                    kind: SamplingKind::FixedCohort(vec![0]),
                    seed: plan.policy.seed,
                },
                dp: None,
                ..plan.clone()
            };
            let ch = with_context(|| ctx("centralized training"), run_training(&cd, &features, &cplan))?;
            write(
                &out_dir.join(format!("rep{rep}_centralized_rounds.csv")),
                &round_log_csv(&ch, config.run.wall_time),
            )?;
            centralized.push(ch);
        }
        federated.push(history);
    }

    let mut rows = summary_rows("federated", &federated);
    if config.run.centralized_baseline {
        rows.extend(summary_rows("centralized", &centralized));
    }
    write(&out_dir.join("summary.csv"), &summary_csv(&rows))?;
    Ok(Summary {
        federated,
        centralized,
        rows,
        privacy,
        output_dir: out_dir,
    })
}

/// Largest client count `config` supports on `corpus` (first repetition's split).
pub fn supported_clients(config: &ExperimentConfig, corpus: &Corpus) -> Result<usize> {
    let seeds = RepetitionSeeds::derive(config.run.master_seed, 0);
    let spec = partition_spec(config, &seeds);
    let (_, pool) = split_test(corpus, &spec)?;
    max_clients(&pool, &spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        let text = format!(
            "dataset.kind = synthetic\n\
             synthetic.n_examples = 2000\n\
             partition.n_clients = 5\n\
             partition.client_size = 40\n\
             model.hash_dimension = 256\n\
             train.epochs = 2\n\
             train.learning_rate = 0.05\n\
             run.rounds = 3\n\
             run.repetitions = 2\n\
             run.wall_time = false\n\
             run.output_dir = {}\n",
            dir.display()
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seeds_differ_by_repetition_and_purpose() {
        let a = RepetitionSeeds::derive(0, 0);
        let b = RepetitionSeeds::derive(0, 1);
        assert_ne!(a, b);
        assert_ne!(a.train, a.sampling);
        assert_eq!(a, RepetitionSeeds::derive(0, 0));
    }

    #[test]
    fn writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.run.centralized_baseline = true;
        cfg.dp.enabled = true;
        cfg.dp.clip = ClipChoice::Adaptive;
        let s = run_experiment(&cfg).unwrap();
        for f in [
            "config.txt",
            "summary.csv",
            "accountant.txt",
            "rep0_rounds.csv",
            "rep1_rounds.csv",
            "rep0_partition.txt",
            "rep0_model.bin",
            "rep1_centralized_rounds.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let acct = fs::read_to_string(dir.path().join("accountant.txt")).unwrap();
        assert!(acct.contains("excludes clip-adaptation"));
        assert_eq!(s.row("federated", "auc").unwrap().values.len(), 2);
        assert_eq!(s.row("centralized", "auc").unwrap().values.len(), 2);
        let log = fs::read_to_string(dir.path().join("rep0_rounds.csv")).unwrap();
        assert_eq!(log.lines().count(), 4);
    }

    #[test]
    fn centralized_set_has_requested_shape() {
        let corpus = synth::generate_corpus(&synth::SynthSpec {
            n_examples: 1000,
            ..Default::default()
        })
        .unwrap();
        let pool = Pool::whole(&corpus);
        let idx = draw_training_set(&pool, 200, 0.3, 9).unwrap();
        assert_eq!(idx.len(), 200);
        let h = idx.iter().filter(|&&i| corpus.examples()[i].label.is_harmful()).count();
        assert_eq!(h, 60);
        assert!(draw_training_set(&pool, 1000, 0.5, 9).is_err());
    }
}
