//! Flat `key = value` experiment configuration.
//!
//! Keys carry dotted section prefixes (`dp.noise_multiplier`). Blank lines
//! and lines starting with `#` are ignored. Unknown keys are an error.
//! Every key has a default except `dataset.path`, which is required when
//! `dataset.kind = csv`. See the README for the full key reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::accountant::Conversion;
use crate::dp::{AdaptiveClipParams, ClipMode, DivisorMode};
use crate::error::{Error, Result};
use crate::ingest::{ColumnMapping, LabelSchema, StopWords};
use crate::model::{ModelSpec, TrainConfig};
use crate::partition::PartitionSpec;
use crate::synth::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Csv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopwordSource {
    English,
    None,
    File(PathBuf),
}

impl StopwordSource {
    pub fn load(&self) -> Result<StopWords> {
        match self {
            Self::English => Ok(StopWords::english()),
            Self::None => Ok(StopWords::none()),
            Self::File(p) => StopWords::from_file(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub path: Option<PathBuf>,
    pub mapping: ColumnMapping,
    pub harmful_labels: Vec<String>,
    pub normal_labels: Vec<String>,
    pub dropped_labels: Vec<String>,
    pub stopwords: StopwordSource,
    pub remove_hapax: bool,
    pub synthetic: SynthSpec,
}

impl DatasetConfig {
    pub fn schema(&self) -> Result<LabelSchema> {
        LabelSchema::new(
            self.harmful_labels.clone(),
            self.normal_labels.clone(),
            self.dropped_labels.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientCount {
    Fixed(usize),
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingChoice {
    FixedCohort,
    Uniform,
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub kind: SamplingChoice,
    /// `None` means every built client.
    pub cohort: Option<Vec<usize>>,
    pub k: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipChoice {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSettings {
    pub enabled: bool,
    pub noise_multiplier: f64,
    pub clip: ClipChoice,
    pub clip_norm: f64,
    pub adaptive: AdaptiveClipParams,
    pub delta: f64,
    /// `None` picks expected-cohort under Poisson sampling, actual otherwise.
    pub divisor_mode: Option<DivisorMode>,
    pub conversion: Conversion,
}

impl DpSettings {
    pub fn clip_mode(&self) -> ClipMode {
        match self.clip {
            ClipChoice::Fixed => ClipMode::Fixed(self.clip_norm),
            ClipChoice::Adaptive => ClipMode::Adaptive(self.adaptive.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub rounds: u64,
    pub repetitions: usize,
    pub eval_every: u64,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub threshold: f64,
    /// Adds a wall-time column to the round logs.
    pub wall_time: bool,
    pub save_checkpoints: bool,
    pub centralized_baseline: bool,
    /// 0 means `n_clients * client_size`.
    pub centralized_train_size: usize,
    /// `None` means `partition.client_harmful_ratio`.
    pub centralized_harmful_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// `seed` is ignored; partition seeds derive from `run.master_seed`.
    pub partition: PartitionSpec,
    pub n_clients: ClientCount,
    /// `init_seed` is ignored; derived per repetition.
    pub model: ModelSpec,
    /// `seed` is ignored; derived per repetition.
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
    pub dp: DpSettings,
    pub run: RunSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig {
                kind: DatasetKind::Csv,
                path: None,
                mapping: ColumnMapping::default(),
                harmful_labels: vec!["Abusive".into(), "Hate".into()],
                normal_labels: vec!["Normal".into()],
                dropped_labels: vec!["Spam".into()],
                stopwords: StopwordSource::English,
                remove_hapax: true,
                synthetic: SynthSpec::default(),
            },
            partition: PartitionSpec::default(),
            n_clients: ClientCount::Fixed(50),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            sampling: SamplingConfig {
                kind: SamplingChoice::FixedCohort,
                cohort: None,
                k: 10,
                mean: 25.0,
            },
            dp: DpSettings {
                enabled: false,
                noise_multiplier: 1.0,
                clip: ClipChoice::Fixed,
                clip_norm: 1.0,
                adaptive: AdaptiveClipParams::default(),
                delta: 1e-3,
                divisor_mode: None,
                conversion: Conversion::Tight,
            },
            run: RunSettings {
                rounds: 20,
                repetitions: 5,
                eval_every: 1,
                output_dir: PathBuf::from("results"),
                master_seed: 0,
                threshold: 0.5,
                wall_time: true,
                save_checkpoints: true,
                centralized_baseline: false,
                centralized_train_size: 0,
                centralized_harmful_ratio: None,
            },
        }
    }
}

fn cfg_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(&format!("line {}", n + 1), "expected `key = value`"))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(cfg_err(&k, "key given twice"));
            }
        }
        Ok(Self(map))
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.raw(key) {
            *slot = v.parse().map_err(|e: T::Err| cfg_err(key, format!("`{v}`: {e}")))?;
        }
        Ok(())
    }

    fn with<T>(
        &mut self,
        key: &str,
        slot: &mut T,
        f: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Result<()> {
        if let Some(v) = self.raw(key) {
            *slot = f(&v).map_err(|e| cfg_err(key, e))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.0.into_keys().next() {
            Some(k) => Err(cfg_err(&k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn optional(v: &str) -> Option<&str> {
    match v {
        "" | "auto" | "none" => None,
        other => Some(other),
    }
}

fn parse_delimiter(v: &str) -> std::result::Result<u8, String> {
    match v {
        "tab" | "\\t" => Ok(b'\t'),
        "comma" => Ok(b','),
        s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        other => Err(format!("`{other}` is not a single ASCII character, `comma` or `tab`")),
    }
}

fn show_delimiter(d: u8) -> String {
    match d {
        b'\t' => "tab".into(),
        b',' => "comma".into(),
        other => (other as char).to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let mut c = Self::default();

        let d = &mut c.dataset;
        e.with("dataset.kind", &mut d.kind, |v| match v {
            "csv" => Ok(DatasetKind::Csv),
            "synthetic" => Ok(DatasetKind::Synthetic),
            o => Err(format!("`{o}`: expected csv or synthetic")),
        })?;
        if let Some(p) = e.raw("dataset.path") {
            d.path = Some(PathBuf::from(p));
        }
        e.with("dataset.delimiter", &mut d.mapping.delimiter, parse_delimiter)?;
        e.set("dataset.text_column", &mut d.mapping.text_column)?;
        e.set("dataset.label_column", &mut d.mapping.label_column)?;
        e.with("dataset.id_column", &mut d.mapping.id_column, |v| {
            Ok(optional(v).map(String::from))
        })?;
        e.with("dataset.harmful_labels", &mut d.harmful_labels, |v| Ok(list(v)))?;
        e.with("dataset.normal_labels", &mut d.normal_labels, |v| Ok(list(v)))?;
        e.with("dataset.dropped_labels", &mut d.dropped_labels, |v| Ok(list(v)))?;
        e.with("dataset.stopwords", &mut d.stopwords, |v| {
            Ok(match v {
                "english" => StopwordSource::English,
                "none" => StopwordSource::None,
                path => StopwordSource::File(PathBuf::from(path)),
            })
        })?;
        e.set("dataset.remove_hapax", &mut d.remove_hapax)?;
        let s = &mut d.synthetic;
        e.set("synthetic.n_examples", &mut s.n_examples)?;
        e.set("synthetic.harmful_fraction", &mut s.harmful_fraction)?;
        e.set("synthetic.vocab_size", &mut s.vocab_size)?;
        e.set("synthetic.overlap", &mut s.overlap)?;
        e.set("synthetic.min_len", &mut s.min_len)?;
        e.set("synthetic.max_len", &mut s.max_len)?;
        e.set("synthetic.seed", &mut s.seed)?;

        let p = &mut c.partition;
        e.set("partition.test_fraction", &mut p.test_fraction)?;
        e.set("partition.test_harmful_ratio", &mut p.test_harmful_ratio)?;
        e.set("partition.client_size", &mut p.client_size)?;
        e.set("partition.client_harmful_ratio", &mut p.client_harmful_ratio)?;
        e.with("partition.n_clients", &mut c.n_clients, |v| match v {
            "max" => Ok(ClientCount::Max),
            n => n.parse().map(ClientCount::Fixed).map_err(|e| format!("`{n}`: {e}")),
        })?;

        let m = &mut c.model;
        e.set("model.kind", &mut m.kind)?;
        e.set("model.hash_dimension", &mut m.hash_dimension)?;
        e.set("model.hidden_units", &mut m.hidden_units)?;
        e.set("model.dropout", &mut m.dropout)?;

        let t = &mut c.train;
        e.set("train.epochs", &mut t.epochs)?;
        e.set("train.batch_size", &mut t.batch_size)?;
        e.set("train.learning_rate", &mut t.learning_rate)?;
        e.set("train.adam_beta1", &mut t.adam_beta1)?;
        e.set("train.adam_beta2", &mut t.adam_beta2)?;
        e.set("train.adam_epsilon", &mut t.adam_epsilon)?;

        let sm = &mut c.sampling;
        e.with("sampling.kind", &mut sm.kind, |v| match v {
            "fixed_cohort" => Ok(SamplingChoice::FixedCohort),
            "uniform" => Ok(SamplingChoice::Uniform),
            "poisson" => Ok(SamplingChoice::Poisson),
            o => Err(format!("`{o}`: expected fixed_cohort, uniform or poisson")),
        })?;
        e.with("sampling.cohort", &mut sm.cohort, |v| match v {
            "all" => Ok(None),
            ids => list(ids)
                .iter()
                .map(|s| s.parse::<usize>().map_err(|e| format!("`{s}`: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some),
        })?;
        e.set("sampling.k", &mut sm.k)?;
        e.set("sampling.mean", &mut sm.mean)?;

        let dp = &mut c.dp;
        e.set("dp.enabled", &mut dp.enabled)?;
        e.set("dp.noise_multiplier", &mut dp.noise_multiplier)?;
        e.with("dp.clip", &mut dp.clip, |v| match v {
            "fixed" => Ok(ClipChoice::Fixed),
            "adaptive" => Ok(ClipChoice::Adaptive),
            o => Err(format!("`{o}`: expected fixed or adaptive")),
        })?;
        e.set("dp.clip_norm", &mut dp.clip_norm)?;
        e.set("dp.delta", &mut dp.delta)?;
        e.with("dp.divisor_mode", &mut dp.divisor_mode, |v| match v {
            "auto" => Ok(None),
            "expected_cohort" => Ok(Some(DivisorMode::ExpectedCohort)),
            "actual_cohort" => Ok(Some(DivisorMode::ActualCohort)),
            o => Err(format!("`{o}`: expected auto, expected_cohort or actual_cohort")),
        })?;
        e.set("dp.conversion", &mut dp.conversion)?;
        let a = &mut dp.adaptive;
        e.set("dp.adaptive.initial_clip", &mut a.initial_clip)?;
        e.set("dp.adaptive.target_quantile", &mut a.target_quantile)?;
        e.set("dp.adaptive.clip_learning_rate", &mut a.clip_learning_rate)?;
        e.with("dp.adaptive.quantile_noise", &mut a.quantile_noise, |v| {
            optional(v)
                .map(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
                .transpose()
        })?;

        let r = &mut c.run;
        e.set("run.rounds", &mut r.rounds)?;
        e.set("run.repetitions", &mut r.repetitions)?;
        e.set("run.eval_every", &mut r.eval_every)?;
        e.set("run.output_dir", &mut r.output_dir)?;
        e.set("run.master_seed", &mut r.master_seed)?;
        e.set("run.threshold", &mut r.threshold)?;
        e.set("run.wall_time", &mut r.wall_time)?;
        e.set("run.save_checkpoints", &mut r.save_checkpoints)?;
        e.set("run.centralized_baseline", &mut r.centralized_baseline)?;
        e.set("run.centralized_train_size", &mut r.centralized_train_size)?;
        e.with("run.centralized_harmful_ratio", &mut r.centralized_harmful_ratio, |v| {
            optional(v)
                .map(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
                .transpose()
        })?;

        e.finish()?;
        c.validate()?;
        Ok(c)
    }

    /// Checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.kind == DatasetKind::Csv && d.path.is_none() {
            return Err(cfg_err("dataset.path", "required for csv datasets"));
        }
        d.schema()
            .map_err(|e| cfg_err("dataset.harmful_labels", e.to_string()))?;
        let rekey = |prefix: &str, e: Error| match e {
            Error::InvalidParameter { name, reason } => cfg_err(&format!("{prefix}.{name}"), reason),
            other => cfg_err(prefix, other.to_string()),
        };
        if d.kind == DatasetKind::Synthetic {
            d.synthetic.validate().map_err(|e| rekey("synthetic", e))?;
        }
        self.partition.validate().map_err(|e| rekey("partition", e))?;
        if self.partition.harmful_per_client() == 0 {
            return Err(cfg_err(
                "partition.client_harmful_ratio",
                "rounds to zero harmful examples per client",
            ));
        }
        self.model.validate().map_err(|e| rekey("model", e))?;
        self.train.validate().map_err(|e| rekey("train", e))?;
        if !(self.sampling.mean >= 0.0) {
            return Err(cfg_err("sampling.mean", "must be non-negative"));
        }
        if self.dp.enabled {
            let dp = &self.dp;
            if !(dp.noise_multiplier >= 0.0 && dp.noise_multiplier.is_finite()) {
                return Err(cfg_err("dp.noise_multiplier", "must be finite and non-negative"));
            }
            if !(dp.delta > 0.0 && dp.delta < 1.0) {
                return Err(cfg_err("dp.delta", "must lie in (0, 1)"));
            }
            if !(dp.clip_norm > 0.0) {
                return Err(cfg_err("dp.clip_norm", "must be positive"));
            }
            dp.adaptive.validate().map_err(|e| rekey("dp.adaptive", e))?;
        }
        let r = &self.run;
        if r.rounds == 0 {
            return Err(cfg_err("run.rounds", "must be at least 1"));
        }
        if r.repetitions == 0 {
            return Err(cfg_err("run.repetitions", "must be at least 1"));
        }
        if !(r.threshold > 0.0 && r.threshold < 1.0) {
            return Err(cfg_err("run.threshold", "must lie in (0, 1)"));
        }
        if let Some(h) = r.centralized_harmful_ratio {
            if !(h > 0.0 && h <= 1.0) {
                return Err(cfg_err("run.centralized_harmful_ratio", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Full key listing; [`ExperimentConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(o, "{k} = {v}");
        };
        let d = &self.dataset;
        kv(
            "dataset.kind",
            &match d.kind {
                DatasetKind::Csv => "csv",
                DatasetKind::Synthetic => "synthetic",
            },
        );
        if let Some(p) = &d.path {
            kv("dataset.path", &p.display());
        }
        kv("dataset.delimiter", &show_delimiter(d.mapping.delimiter));
        kv("dataset.text_column", &d.mapping.text_column);
        kv("dataset.label_column", &d.mapping.label_column);
        kv("dataset.id_column", &d.mapping.id_column.as_deref().unwrap_or("none"));
        kv("dataset.harmful_labels", &d.harmful_labels.join(","));
        kv("dataset.normal_labels", &d.normal_labels.join(","));
        kv("dataset.dropped_labels", &d.dropped_labels.join(","));
        kv(
            "dataset.stopwords",
            &match &d.stopwords {
                StopwordSource::English => "english".to_string(),
                StopwordSource::None => "none".to_string(),
                StopwordSource::File(p) => p.display().to_string(),
            },
        );
        kv("dataset.remove_hapax", &d.remove_hapax);
        let s = &d.synthetic;
        kv("synthetic.n_examples", &s.n_examples);
        kv("synthetic.harmful_fraction", &s.harmful_fraction);
        kv("synthetic.vocab_size", &s.vocab_size);
        kv("synthetic.overlap", &s.overlap);
        kv("synthetic.min_len", &s.min_len);
        kv("synthetic.max_len", &s.max_len);
        kv("synthetic.seed", &s.seed);
        let p = &self.partition;
        kv("partition.test_fraction", &p.test_fraction);
        kv("partition.test_harmful_ratio", &p.test_harmful_ratio);
        kv("partition.client_size", &p.client_size);
        kv("partition.client_harmful_ratio", &p.client_harmful_ratio);
        kv(
            "partition.n_clients",
            &match self.n_clients {
                ClientCount::Fixed(n) => n.to_string(),
                ClientCount::Max => "max".into(),
            },
        );
        let m = &self.model;
        kv("model.kind", &m.kind);
        kv("model.hash_dimension", &m.hash_dimension);
        kv("model.hidden_units", &m.hidden_units);
        kv("model.dropout", &m.dropout);
        let t = &self.train;
        kv("train.epochs", &t.epochs);
        kv("train.batch_size", &t.batch_size);
        kv("train.learning_rate", &t.learning_rate);
        kv("train.adam_beta1", &t.adam_beta1);
        kv("train.adam_beta2", &t.adam_beta2);
        kv("train.adam_epsilon", &t.adam_epsilon);
        let sm = &self.sampling;
        kv(
            "sampling.kind",
            &match sm.kind {
                SamplingChoice::FixedCohort => "fixed_cohort",
                SamplingChoice::Uniform => "uniform",
                SamplingChoice::Poisson => "poisson",
            },
        );
        kv(
            "sampling.cohort",
            &match &sm.cohort {
                None => "all".to_string(),
                Some(ids) => ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            },
        );
        kv("sampling.k", &sm.k);
        kv("sampling.mean", &sm.mean);
        let dp = &self.dp;
        kv("dp.enabled", &dp.enabled);
        kv("dp.noise_multiplier", &dp.noise_multiplier);
        kv(
            "dp.clip",
            &match dp.clip {
                ClipChoice::Fixed => "fixed",
                ClipChoice::Adaptive => "adaptive",
            },
        );
        kv("dp.clip_norm", &dp.clip_norm);
        kv("dp.delta", &dp.delta);
        kv(
            "dp.divisor_mode",
            &match dp.divisor_mode {
                None => "auto",
                Some(DivisorMode::ExpectedCohort) => "expected_cohort",
                Some(DivisorMode::ActualCohort) => "actual_cohort",
            },
        );
        kv("dp.conversion", &dp.conversion);
        kv("dp.adaptive.initial_clip", &dp.adaptive.initial_clip);
        kv("dp.adaptive.target_quantile", &dp.adaptive.target_quantile);
        kv("dp.adaptive.clip_learning_rate", &dp.adaptive.clip_learning_rate);
        kv(
            "dp.adaptive.quantile_noise",
            &match dp.adaptive.quantile_noise {
                None => "auto".to_string(),
                Some(v) => v.to_string(),
            },
        );
        let r = &self.run;
        kv("run.rounds", &r.rounds);
        kv("run.repetitions", &r.repetitions);
        kv("run.eval_every", &r.eval_every);
        kv("run.output_dir", &r.output_dir.display());
        kv("run.master_seed", &r.master_seed);
        kv("run.threshold", &r.threshold);
        kv("run.wall_time", &r.wall_time);
        kv("run.save_checkpoints", &r.save_checkpoints);
        kv("run.centralized_baseline", &r.centralized_baseline);
        kv("run.centralized_train_size", &r.centralized_train_size);
        kv(
            "run.centralized_harmful_ratio",
            &match r.centralized_harmful_ratio {
                None => "auto".to_string(),
                Some(v) => v.to_string(),
            },
        );
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse("dataset.path = data/abusive.csv\n").unwrap();
        let mut expected = ExperimentConfig::default();
        expected.dataset.path = Some("data/abusive.csv".into());
        assert_eq!(c, expected);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.batch_size, 10);
        assert_eq!(c.partition.test_harmful_ratio, 0.08);
        assert_eq!(c.model.hash_dimension, 1 << 15);
    }

    #[test]
    fn path_is_required() {
        let err = ExperimentConfig::parse("run.rounds = 3").unwrap_err();
        assert!(err.to_string().contains("dataset.path"), "{err}");
        assert!(ExperimentConfig::parse("dataset.kind = synthetic").is_ok());
    }

    #[test]
    fn validation_names_key() {
        let err = ExperimentConfig::parse("dataset.path = x\npartition.client_harmful_ratio = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("partition.client_harmful_ratio") && msg.contains("(0, 1]"),
            "{msg}"
        );
        let err = ExperimentConfig::parse("dataset.path = x\ndp.noise_multipler = 1\n").unwrap_err();
        assert!(err.to_string().contains("dp.noise_multipler"));
        let err = ExperimentConfig::parse("dataset.path = x\ntrain.epochs = seven\n").unwrap_err();
        assert!(err.to_string().contains("train.epochs"));
        let err = ExperimentConfig::parse("dataset.path = x\nrun.rounds = 1\nrun.rounds = 2\n").unwrap_err();
        assert!(err.to_string().contains("twice"));
    }

    #[test]
    fn round_trip() {
        let text = "dataset.kind = synthetic\n\
                    dataset.delimiter = tab\n\
                    dataset.id_column = id\n\
                    dataset.stopwords = /tmp/sw.txt\n\
                    partition.n_clients = max\n\
                    sampling.kind = poisson\n\
                    sampling.cohort = 1,2,5\n\
                    dp.enabled = true\n\
                    dp.clip = adaptive\n\
                    dp.adaptive.quantile_noise = 0.5\n\
                    dp.divisor_mode = actual_cohort\n\
                    dp.conversion = classic\n\
                    run.centralized_harmful_ratio = 0.3\n\
                    model.kind = one_hidden_layer\n";
        let c = ExperimentConfig::parse(text).unwrap();
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        let d = ExperimentConfig::parse("dataset.path = a b.csv").unwrap();
        assert_eq!(ExperimentConfig::parse(&d.to_text()).unwrap(), d);
    }
}
