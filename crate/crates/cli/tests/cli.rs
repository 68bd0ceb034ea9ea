use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedmod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn kv(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn account_kv_and_table() {
    let o = fedmod(&[
        "account",
        "--expected-cohort",
        "25",
        "--population",
        "628",
        "--noise-multiplier",
        "0.875",
        "--steps",
        "100",
        "--format",
        "kv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eps = kv(&stdout(&o), "epsilon");
    assert!((eps - 3.0).abs() < 0.45, "{eps}");

    let o = fedmod(&[
        "account",
        "--q",
        "0.0398",
        "--noise-multiplier",
        "0.875",
        "--steps",
        "100",
        "--conversion",
        "classic",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(
        out.contains("order") && out.contains('*') && out.contains("classic"),
        "{out}"
    );
}

#[test]
fn calibrate_inverts_account() {
    let o = fedmod(&[
        "calibrate",
        "--expected-cohort",
        "66",
        "--population",
        "628",
        "--target-epsilon",
        "5",
        "--steps",
        "100",
        "--format",
        "kv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let z = kv(&stdout(&o), "noise_multiplier");
    assert!((z - 1.1).abs() / 1.1 < 0.1, "{z}");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "dataset.kind = synthetic\npartition.client_harmful_ratio = 1.5\n").unwrap();
    let o = fedmod(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("partition.client_harmful_ratio"), "{}", stderr(&o));

    let o = fedmod(&["account", "--noise-multiplier", "1", "--steps", "10"]);
    assert!(!o.status.success());
    let o = fedmod(&[
        "calibrate",
        "--q",
        "0.5",
        "--target-epsilon",
        "0.0001",
        "--steps",
        "1000",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unreachable"), "{}", stderr(&o));
}

fn write_config(dir: &Path, csv: &Path) -> String {
    let cfg = dir.join("exp.cfg");
    fs::write(
        &cfg,
        format!(
            "dataset.path = {}\n\
             dataset.id_column = id\n\
             dataset.harmful_labels = harmful\n\
             dataset.normal_labels = normal\n\
             dataset.dropped_labels =\n\
             partition.n_clients = 10\n\
             model.hash_dimension = 512\n\
             run.rounds = 3\n\
             run.repetitions = 2\n\
             run.output_dir = {}\n",
            csv.display(),
            dir.join("out").display()
        ),
    )
    .unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn csv_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("corpus.csv");
    let o = fedmod(&[
        "synth-data",
        "--out",
        csv.to_str().unwrap(),
        "--n-examples",
        "3000",
        "--overlap",
        "0.3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = write_config(dir.path(), &csv);

    let manifest = dir.path().join("manifest.txt");
    let o = fedmod(&["partition", "--config", &cfg, "--out", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&manifest).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("client ")).count(), 10);

    let o = fedmod(&["train", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("federated,auc,"));
    let out = dir.path().join("out");
    assert_eq!(
        fs::read_to_string(out.join("rep0_partition.txt")).unwrap(),
        text,
        "partition subcommand and train agree"
    );

    let o = fedmod(&[
        "evaluate",
        "--config",
        &cfg,
        "--checkpoint",
        out.join("rep1_model.bin").to_str().unwrap(),
        "--repetition",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let auc = kv(&stdout(&o), "auc");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = summary.lines().find(|l| l.starts_with("federated,auc,")).unwrap();
    let last: f64 = row
        .rsplit(',')
        .next()
        .unwrap()
        .split(';')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(auc, last);
}

#[test]
fn monitor_local_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.cfg");
    fs::write(
        &cfg,
        "dataset.kind = synthetic\nsynthetic.n_examples = 2000\npartition.n_clients = 1\npartition.client_size = 1000\n",
    )
    .unwrap();
    let samples = dir.path().join("samples.csv");
    let o = fedmod(&[
        "monitor",
        "--config",
        cfg.to_str().unwrap(),
        "--repeat",
        "20",
        "--interval",
        "0.1",
        "--out",
        samples.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(samples).unwrap();
    assert!(text.starts_with("elapsed_s,cpu_percent,resident_memory_mb"));
    assert!(stderr(&o).contains("local training took"));
}
