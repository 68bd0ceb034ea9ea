//! Corpus loading, label binarization and text preprocessing.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};

/// A row as read from the source file, before any processing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub original_label: String,
}

/// Binary class of an example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal = 0,
    Harmful = 1,
}

impl Label {
    pub fn is_harmful(self) -> bool {
        self == Label::Harmful
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Label::Normal => 0.0,
            Label::Harmful => 1.0,
        }
    }
}

/// Maps dataset-specific labels onto the harmful/normal classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    harmful: BTreeSet<String>,
    normal: BTreeSet<String>,
    dropped: BTreeSet<String>,
}

impl LabelSchema {
    pub fn new<I, S>(harmful: I, normal: I, dropped: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let harmful: BTreeSet<String> = harmful.into_iter().map(Into::into).collect();
        let normal: BTreeSet<String> = normal.into_iter().map(Into::into).collect();
        let dropped: BTreeSet<String> = dropped.into_iter().map(Into::into).collect();
        if harmful.is_empty() || normal.is_empty() {
            return Err(Error::InvalidSchema(
                "harmful and normal label sets must be non-empty".into(),
            ));
        }
        for (a, b, what) in [
            (&harmful, &normal, "harmful/normal"),
            (&harmful, &dropped, "harmful/dropped"),
            (&normal, &dropped, "normal/dropped"),
        ] {
            if let Some(l) = a.intersection(b).next() {
                return Err(Error::InvalidSchema(format!("label `{l}` appears in both {what} sets")));
            }
        }
        Ok(Self {
            harmful,
            normal,
            dropped,
        })
    }

    /// Abusive/Hate vs Normal, with Spam removed.
    pub fn abusive() -> Self {
        Self::new(vec!["Abusive", "Hate"], vec!["Normal"], vec!["Spam"]).expect("valid preset")
    }

    /// Racism/Sexism vs None.
    pub fn hateful() -> Self {
        Self::new(vec!["Racism", "Sexism"], vec!["Normal", "None"], vec![]).expect("valid preset")
    }

    pub fn sarcastic() -> Self {
        Self::new(vec!["Sarcastic"], vec!["Normal", "Not sarcastic"], vec![]).expect("valid preset")
    }

    pub fn harmful_labels(&self) -> &BTreeSet<String> {
        &self.harmful
    }

    pub fn normal_labels(&self) -> &BTreeSet<String> {
        &self.normal
    }

    pub fn dropped_labels(&self) -> &BTreeSet<String> {
        &self.dropped
    }

    pub fn is_dropped(&self, label: &str) -> bool {
        self.dropped.contains(label)
    }

    /// Returns `None` for labels outside every set.
    pub fn classify(&self, label: &str) -> Option<Label> {
        if self.harmful.contains(label) {
            Some(Label::Harmful)
        } else if self.normal.contains(label) {
            Some(Label::Normal)
        } else {
            None
        }
    }
}

/// Column mapping and dialect of a delimiter-separated corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub text_column: String,
    pub label_column: String,
    /// When absent, ids are the 1-based data row numbers.
    pub id_column: Option<String>,
    pub delimiter: u8,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            text_column: "text".into(),
            label_column: "label".into(),
            id_column: None,
            delimiter: b',',
        }
    }
}

/// One preprocessed, binary-labelled example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub harmful: usize,
    pub normal: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.harmful + self.normal
    }

    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Harmful => self.harmful,
            Label::Normal => self.normal,
        }
    }
}

/// A collection of examples with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    examples: Vec<ExampleRecord>,
    class_counts: ClassCounts,
}

impl Corpus {
    pub fn new(examples: Vec<ExampleRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        let mut counts = ClassCounts::default();
        for (row, ex) in examples.iter().enumerate() {
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::InvalidRecord {
                    row: row + 1,
                    reason: format!("duplicate id `{}`", ex.id),
                });
            }
            match ex.label {
                Label::Harmful => counts.harmful += 1,
                Label::Normal => counts.normal += 1,
            }
        }
        Ok(Self {
            examples,
            class_counts: counts,
        })
    }

    pub fn examples(&self) -> &[ExampleRecord] {
        &self.examples
    }

    pub fn class_counts(&self) -> ClassCounts {
        self.class_counts
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Indices of all examples with the given label, in corpus order.
    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn into_examples(self) -> Vec<ExampleRecord> {
        self.examples
    }
}

/// Stop-word set used by [`preprocess`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

impl StopWords {
    pub fn none() -> Self {
        Self::default()
    }

    /// Bundled English list (one word per line).
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn parse(list: &str) -> Self {
        list.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Reads a corpus file, keeping rows whose label is harmful or normal.
pub fn load_corpus(path: &Path, schema: &LabelSchema, format: &ColumnMapping) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file, schema, format)
}

pub fn read_records<R: Read>(reader: R, schema: &LabelSchema, format: &ColumnMapping) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let text_col = column(&format.text_column)?;
    let label_col = column(&format.label_column)?;
    let id_col = format.id_column.as_deref().map(column).transpose()?;

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let label = row.get(label_col).unwrap_or_default().trim();
        if schema.is_dropped(label) {
            continue;
        }
        if schema.classify(label).is_none() {
            return Err(Error::UnknownLabel {
                label: label.to_string(),
                row: row_no,
            });
        }
        let text = row.get(text_col).unwrap_or_default();
        if text.trim().is_empty() {
            return Err(Error::InvalidRecord {
                row: row_no,
                reason: "empty text".into(),
            });
        }
        let id = match id_col {
            Some(c) => row.get(c).unwrap_or_default().to_string(),
            None => row_no.to_string(),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::InvalidRecord {
                row: row_no,
                reason: format!("duplicate id `{id}`"),
            });
        }
        out.push(RawRecord {
            id,
            text: text.to_string(),
            original_label: label.to_string(),
        });
    }
    Ok(out)
}

static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S*").unwrap());
static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9]+").unwrap());

/// Normalizes a raw text into tokens.
///
/// Steps, in order: drop @-mentions and the `#` marker of hashtags, drop
/// URLs, drop digit runs, turn ASCII punctuation into spaces, delete
/// non-ASCII characters, lowercase, split on whitespace, drop stop words.
pub fn preprocess(text: &str, stopwords: &StopWords) -> Vec<String> {
    let s = MENTION.replace_all(text, " ");
    let s = s.replace('#', " ");
    let s = URL.replace_all(&s, " ");
    let s = DIGITS.replace_all(&s, " ");
    let cleaned: String = s
        .chars()
        .filter(char::is_ascii)
        .map(|c| {
            if c.is_ascii_punctuation() || c.is_ascii_control() {
                ' '
            } else {
                c.to_ascii_lowercase()
            }
        })
        .collect();
    cleaned
        .split_ascii_whitespace()
        .filter(|t| !stopwords.contains(t))
        .map(str::to_string)
        .collect()
}

/// Removes tokens that occur exactly once across the whole corpus.
///
/// Frequencies are counted once on the input; removal does not cascade.
pub fn remove_hapax(corpus: Corpus) -> Corpus {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in corpus.examples.iter().flat_map(|e| e.tokens.iter()) {
        *freq.entry(t.as_str()).or_default() += 1;
    }
    let hapax: HashSet<String> = freq
        .into_iter()
        .filter(|&(_, n)| n == 1)
        .map(|(t, _)| t.to_string())
        .collect();
    if hapax.is_empty() {
        return corpus;
    }
    let Corpus {
        mut examples,
        class_counts,
    } = corpus;
    for ex in &mut examples {
        ex.tokens.retain(|t| !hapax.contains(t));
    }
    Corpus { examples, class_counts }
}

pub fn binarize_label(label: &str, schema: &LabelSchema) -> Result<Label> {
    schema.classify(label).ok_or_else(|| Error::UnknownLabel {
        label: label.to_string(),
        row: 0,
    })
}

/// Maps the record's label to a binary class and tokenizes its text.
pub fn binarize(record: &RawRecord, schema: &LabelSchema, stopwords: &StopWords) -> Result<ExampleRecord> {
    Ok(ExampleRecord {
        id: record.id.clone(),
        label: binarize_label(&record.original_label, schema)?,
        tokens: preprocess(&record.text, stopwords),
    })
}

/// Summary of an ingest pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub records: usize,
    pub empty_after_preprocessing: usize,
}

/// Binarizes and preprocesses every record, optionally removing hapax tokens.
pub fn build_corpus(
    records: &[RawRecord],
    schema: &LabelSchema,
    stopwords: &StopWords,
    drop_hapax: bool,
) -> Result<(Corpus, IngestStats)> {
    let examples = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            binarize(r, schema, stopwords).map_err(|e| match e {
                Error::UnknownLabel { label, .. } => Error::UnknownLabel { label, row: i + 1 },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = Corpus::new(examples)?;
    if drop_hapax {
        corpus = remove_hapax(corpus);
    }
    let stats = IngestStats {
        records: corpus.len(),
        empty_after_preprocessing: corpus.examples().iter().filter(|e| e.tokens.is_empty()).count(),
    };
    Ok((corpus, stats))
}
