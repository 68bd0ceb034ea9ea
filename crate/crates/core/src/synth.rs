//! Synthetic two-class corpus.
//!
//! Each class draws tokens uniformly from its own vocabulary of
//! `vocab_size` pseudo-words. A fraction `overlap` of each vocabulary is
//! shared between the classes; the rest is class-specific, so a document
//! is ambiguous only when every one of its tokens is a shared word.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::{Corpus, ExampleRecord, Label, LabelSchema, RawRecord};
use crate::partition::round_count;
use crate::rng::substream;

pub const HARMFUL_LABEL: &str = "harmful";
pub const NORMAL_LABEL: &str = "normal";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_examples: usize,
    pub harmful_fraction: f64,
    pub vocab_size: usize,
    pub overlap: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_examples: 10_000,
            harmful_fraction: 0.4,
            vocab_size: 200,
            overlap: 0.1,
            min_len: 6,
            max_len: 14,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.harmful_fraction) {
            return Err(Error::param("harmful_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::param("overlap", "must lie in [0, 1]"));
        }
        if self.vocab_size == 0 {
            return Err(Error::param("vocab_size", "must be positive"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::param("min_len", "need 1 <= min_len <= max_len"));
        }
        Ok(())
    }
}

/// Label schema matching the generated labels.
pub fn schema() -> LabelSchema {
    LabelSchema::new(vec![HARMFUL_LABEL], vec![NORMAL_LABEL], vec![]).expect("valid schema")
}

/// Lowercase pseudo-word: two-letter prefix followed by `i` in base 26.
fn word(prefix: &str, mut i: usize) -> String {
    let mut s = String::from(prefix);
    loop {
        s.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    s
}

fn vocabulary(spec: &SynthSpec, label: Label) -> Vec<String> {
    let shared = round_count(spec.overlap * spec.vocab_size as f64).min(spec.vocab_size);
    let own = if label.is_harmful() { "hx" } else { "nx" };
    (0..shared)
        .map(|i| word("sx", i))
        .chain((0..spec.vocab_size - shared).map(|i| word(own, i)))
        .collect()
}

/// Tokenized examples with ids `s0, s1, ...`; classes are interleaved at random.
pub fn generate_examples(spec: &SynthSpec) -> Result<Vec<ExampleRecord>> {
    spec.validate()?;
    let n_harm = round_count(spec.harmful_fraction * spec.n_examples as f64);
    let mut labels: Vec<Label> = (0..spec.n_examples)
        .map(|i| if i < n_harm { Label::Harmful } else { Label::Normal })
        .collect();
    labels.shuffle(&mut substream(spec.seed, "synth-labels", 0));
    let vocab_h = vocabulary(spec, Label::Harmful);
    let vocab_n = vocabulary(spec, Label::Normal);
    let mut rng = substream(spec.seed, "synth-tokens", 0);
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let vocab = if label.is_harmful() { &vocab_h } else { &vocab_n };
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let tokens = (0..len)
                .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
                .collect();
            ExampleRecord {
                id: format!("s{i}"),
                tokens,
                label,
            }
        })
        .collect())
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    Corpus::new(generate_examples(spec)?)
}

/// Generated examples as raw rows (`harmful` / `normal` labels).
pub fn generate_records(spec: &SynthSpec) -> Result<Vec<RawRecord>> {
    Ok(generate_examples(spec)?
        .into_iter()
        .map(|e| RawRecord {
            id: e.id,
            text: e.tokens.join(" "),
            original_label: if e.label.is_harmful() {
                HARMFUL_LABEL
            } else {
                NORMAL_LABEL
            }
            .into(),
        })
        .collect())
}

/// Writes `id,text,label` CSV.
pub fn write_csv(records: &[RawRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "text", "label"])?;
    for r in records {
        w.write_record([&r.id, &r.text, &r.original_label])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
