use std::fs;
use std::path::Path;

use fedmod::accountant::{calibrate_noise, CalibrationOptions};
use fedmod::experiment::{mean_std, run_experiment, ClientCount, ExperimentConfig, SamplingChoice, METRICS};
use proptest::prelude::*;

fn config(dir: &Path, extra: &str) -> ExperimentConfig {
    let text = format!(
        "dataset.kind = synthetic\n\
         synthetic.n_examples = 3000\n\
         synthetic.overlap = 0.6\n\
         partition.n_clients = 12\n\
         partition.client_size = 50\n\
         model.hash_dimension = 256\n\
         train.epochs = 2\n\
         train.learning_rate = 0.02\n\
         run.rounds = 6\n\
         run.eval_every = 2\n\
         run.output_dir = {}\n{extra}",
        dir.display()
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn summary_matches_round_logs() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&config(dir.path(), "run.repetitions = 3\n")).unwrap();
    for (k, metric) in METRICS.iter().enumerate() {
        let mut finals = Vec::new();
        for rep in 0..3 {
            let log = read(dir.path(), &format!("rep{rep}_rounds.csv"));
            let last = log.lines().last().unwrap();
            let cells: Vec<&str> = last.split(',').collect();
            finals.push(cells[11 + k].parse::<f64>().unwrap());
        }
        let row = s.row("federated", metric).unwrap();
        let (mean, std) = mean_std(&finals);
        assert_eq!(row.values, finals);
        assert_eq!((row.mean, row.std), (mean, std));
    }
    let summary = read(dir.path(), "summary.csv");
    assert_eq!(summary.lines().count(), 1 + METRICS.len());
    assert!(!dir.path().join("accountant.txt").exists());
}

#[test]
fn logs_are_byte_identical_across_executions() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = "sampling.kind = poisson\nsampling.mean = 4\ndp.enabled = true\ndp.noise_multiplier = 0.8\n\
                 dp.clip = adaptive\nrun.wall_time = false\nrun.repetitions = 3\n";
    run_experiment(&config(a.path(), extra)).unwrap();
    run_experiment(&config(b.path(), extra)).unwrap();
    for rep in 0..3 {
        let name = format!("rep{rep}_rounds.csv");
        assert_eq!(read(a.path(), &name), read(b.path(), &name));
        let name = format!("rep{rep}_partition.txt");
        assert_eq!(read(a.path(), &name), read(b.path(), &name));
    }
    assert_ne!(read(a.path(), "rep0_rounds.csv"), read(a.path(), "rep1_rounds.csv"));
    assert_eq!(read(a.path(), "summary.csv"), read(b.path(), "summary.csv"));
}

#[test]
fn wall_time_is_the_only_varying_column() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config(a.path(), "run.repetitions = 1\n")).unwrap();
    run_experiment(&config(b.path(), "run.repetitions = 1\n")).unwrap();
    let strip = |s: String| -> Vec<String> { s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect() };
    let la = read(a.path(), "rep0_rounds.csv");
    assert!(la.lines().next().unwrap().ends_with("wall_time_s"));
    assert_eq!(strip(la), strip(read(b.path(), "rep0_rounds.csv")));
}

#[test]
fn single_repetition_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&config(
        dir.path(),
        "run.repetitions = 1\nrun.centralized_baseline = true\n",
    ))
    .unwrap();
    for r in &s.rows {
        assert_eq!(r.std, 0.0, "{} {}", r.setup, r.metric);
        assert_eq!(r.values.len(), 1);
    }
    let c = &s.centralized[0];
    assert_eq!(c.rounds[0].participant_ids, vec![0]);
}

#[test]
fn poisson_dp_setup_is_accepted_and_accounted() {
    let text = "dataset.path = data/abusive.csv\n\
                partition.n_clients = 628\n\
                run.rounds = 100\n\
                run.eval_every = 10\n\
                sampling.kind = poisson\n\
                sampling.mean = 25\n\
                dp.enabled = true\n\
                dp.noise_multiplier = 0.875\n\
                dp.delta = 1e-3\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    assert_eq!(cfg.n_clients, ClientCount::Fixed(628));
    assert_eq!(cfg.sampling.kind, SamplingChoice::Poisson);
    let input = fedmod::accountant::AccountantInput::poisson(25.0, 628, 0.875, 100);
    let eps = fedmod::accountant::report_epsilon(&input, 1e-3, cfg.dp.conversion)
        .unwrap()
        .epsilon;
    assert!((eps - 3.0).abs() <= 0.45, "epsilon {eps}");
    let z = calibrate_noise(eps, 1e-3, 25.0 / 628.0, 100, &CalibrationOptions::default()).unwrap();
    assert!((z - 0.875).abs() < 1e-3, "{z}");
}

#[test]
fn missing_dataset_reports_context() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "run.repetitions = 1\n");
    cfg.dataset.kind = fedmod::experiment::DatasetKind::Csv;
    cfg.dataset.path = Some(dir.path().join("absent.csv"));
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("loading dataset") && err.contains("absent.csv"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(
        rounds in 1u64..500,
        lr in 1e-5f64..1.0,
        ratio in 0.01f64..=1.0,
        z in 0.0f64..5.0,
        mean in 0.0f64..100.0,
        seed in any::<u64>(),
        adaptive in any::<bool>(),
        poisson in any::<bool>(),
        clients in prop::option::of(1usize..1000),
    ) {
        let mut c = ExperimentConfig::parse("dataset.kind = synthetic").unwrap();
        c.run.rounds = rounds;
        c.run.master_seed = seed;
        c.train.learning_rate = lr;
        c.partition.client_harmful_ratio = ratio;
        c.dp.enabled = true;
        c.dp.noise_multiplier = z;
        c.dp.clip = if adaptive { fedmod::experiment::ClipChoice::Adaptive } else { fedmod::experiment::ClipChoice::Fixed };
        c.sampling.kind = if poisson { SamplingChoice::Poisson } else { SamplingChoice::Uniform };
        c.sampling.mean = mean;
        c.n_clients = clients.map_or(ClientCount::Max, ClientCount::Fixed);
        prop_assume!(c.validate().is_ok());
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        prop_assert_eq!(back, c);
    }
}
