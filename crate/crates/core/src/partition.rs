//! Held-out test set and homogeneous artificial clients.
//!
//! The test set takes `round(test_fraction * N)` examples with a fixed
//! harmful ratio. The remaining pool is cut into clients that all hold the
//! same number of examples and the same number of harmful examples.
//!
//! Sampling streams (see [`crate::rng`]):
//! * `"test-harmful"` / `"test-normal"`: shuffles each class of the corpus
//!   before the test draw;
//! * `"client-harmful"` / `"client-normal"`: one permutation per class of
//!   the pool; client `i` takes the `i`-th contiguous chunk of each, so any
//!   client can be materialized independently of the others.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ingest::{Corpus, Label};
use crate::rng::substream;

pub type ClientId = usize;

/// Round half away from zero, as used for every class count.
pub fn round_count(x: f64) -> usize {
    x.round().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub test_fraction: f64,
    pub test_harmful_ratio: f64,
    pub client_size: usize,
    pub client_harmful_ratio: f64,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.10,
            test_harmful_ratio: 0.08,
            client_size: 100,
            client_harmful_ratio: 0.5,
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::param("test_fraction", "must lie in (0, 1)"));
        }
        if !(self.test_harmful_ratio > 0.0 && self.test_harmful_ratio < 1.0) {
            return Err(Error::param("test_harmful_ratio", "must lie in (0, 1)"));
        }
        if self.client_size < 2 {
            return Err(Error::param("client_size", "must be at least 2"));
        }
        if !(self.client_harmful_ratio > 0.0 && self.client_harmful_ratio <= 1.0) {
            return Err(Error::param("client_harmful_ratio", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Harmful examples per client.
    pub fn harmful_per_client(&self) -> usize {
        round_count(self.client_harmful_ratio * self.client_size as f64)
    }
}

/// One artificial client: indices into the corpus the partition was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientShard {
    pub client_id: ClientId,
    pub indices: Vec<usize>,
    pub harmful_count: usize,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Test split plus client population. Indices refer to `corpus`.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub corpus: Corpus,
    pub test_set: Vec<usize>,
    pub clients: Vec<ClientShard>,
    pub spec: PartitionSpec,
}

impl FederatedDataset {
    pub fn client_ids(&self) -> Vec<ClientId> {
        self.clients.iter().map(|c| c.client_id).collect()
    }

    pub fn client(&self, id: ClientId) -> Option<&ClientShard> {
        self.clients.iter().find(|c| c.client_id == id)
    }
}

/// Indices of the pool left after the test split, per class, in corpus order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pool {
    pub harmful: Vec<usize>,
    pub normal: Vec<usize>,
}

impl Pool {
    /// All indices of `corpus`.
    pub fn whole(corpus: &Corpus) -> Self {
        Self {
            harmful: corpus.indices_of(Label::Harmful),
            normal: corpus.indices_of(Label::Normal),
        }
    }

    pub fn len(&self) -> usize {
        self.harmful.len() + self.normal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn sample_without_replacement(mut idx: Vec<usize>, n: usize, seed: u64, stream: &str) -> (Vec<usize>, Vec<usize>) {
    idx.shuffle(&mut substream(seed, stream, 0));
    let rest = idx.split_off(n);
    (idx, rest)
}

/// Splits off the held-out test set.
///
/// Returns the test indices (sorted) and the remaining pool.
pub fn split_test(corpus: &Corpus, spec: &PartitionSpec) -> Result<(Vec<usize>, Pool)> {
    spec.validate()?;
    let n_test = round_count(spec.test_fraction * corpus.len() as f64);
    let n_harm = round_count(spec.test_harmful_ratio * n_test as f64);
    let n_norm = n_test - n_harm;
    let all = Pool::whole(corpus);
    if all.harmful.len() < n_harm {
        return Err(Error::InsufficientExamples {
            class: "harmful",
            needed: n_harm,
            available: all.harmful.len(),
        });
    }
    if all.normal.len() < n_norm {
        return Err(Error::InsufficientExamples {
            class: "normal",
            needed: n_norm,
            available: all.normal.len(),
        });
    }
    let (test_h, mut pool_h) = sample_without_replacement(all.harmful, n_harm, spec.seed, "test-harmful");
    let (test_n, mut pool_n) = sample_without_replacement(all.normal, n_norm, spec.seed, "test-normal");
    let mut test: Vec<usize> = test_h.into_iter().chain(test_n).collect();
    test.sort_unstable();
    pool_h.sort_unstable();
    pool_n.sort_unstable();
    Ok((
        test,
        Pool {
            harmful: pool_h,
            normal: pool_n,
        },
    ))
}

/// Largest number of clients the pool can supply under `spec`.
pub fn max_clients(pool: &Pool, spec: &PartitionSpec) -> Result<usize> {
    let h = spec.harmful_per_client();
    if h == 0 && spec.client_harmful_ratio > 0.0 {
        return Err(Error::param(
            "client_harmful_ratio",
            format!(
                "ratio {} rounds to zero harmful examples at client_size {}",
                spec.client_harmful_ratio, spec.client_size
            ),
        ));
    }
    let normal_per_client = spec.client_size - h.min(spec.client_size);
    let by_harmful = pool.harmful.len().checked_div(h).unwrap_or(usize::MAX);
    let by_normal = pool.normal.len().checked_div(normal_per_client).unwrap_or(usize::MAX);
    Ok(by_harmful.min(by_normal))
}

/// Cuts `n_clients` disjoint shards out of the pool.
pub fn build_clients(pool: &Pool, spec: &PartitionSpec, n_clients: usize) -> Result<Vec<ClientShard>> {
    spec.validate()?;
    let max = max_clients(pool, spec)?;
    if n_clients > max {
        return Err(Error::TooManyClients {
            requested: n_clients,
            max,
        });
    }
    let h = spec.harmful_per_client();
    let n = spec.client_size - h;
    let mut harmful = pool.harmful.clone();
    let mut normal = pool.normal.clone();
    harmful.shuffle(&mut substream(spec.seed, "client-harmful", 0));
    normal.shuffle(&mut substream(spec.seed, "client-normal", 0));
    Ok((0..n_clients)
        .map(|id| {
            let mut indices: Vec<usize> = harmful[id * h..(id + 1) * h]
                .iter()
                .chain(&normal[id * n..(id + 1) * n])
                .copied()
                .collect();
            indices.sort_unstable();
            ClientShard {
                client_id: id,
                indices,
                harmful_count: h,
            }
        })
        .collect())
}

/// Test split followed by client construction. `None` builds the maximum.
pub fn partition(corpus: Corpus, spec: &PartitionSpec, n_clients: Option<usize>) -> Result<FederatedDataset> {
    let (test_set, pool) = split_test(&corpus, spec)?;
    let n = match n_clients {
        Some(n) => n,
        None => max_clients(&pool, spec)?,
    };
    let clients = build_clients(&pool, spec, n)?;
    Ok(FederatedDataset {
        corpus,
        test_set,
        clients,
        spec: spec.clone(),
    })
}

/// Serializes the partition as a line-oriented text manifest.
///
/// ```text
/// # fedmod partition manifest v1
/// seed = 42
/// test_fraction = 0.1
/// ...
/// test = id id id
/// client 0 = id id id
/// ```
pub fn manifest(fd: &FederatedDataset) -> String {
    let ids = |idx: &[usize]| {
        idx.iter()
            .map(|&i| fd.corpus.examples()[i].id.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let s = &fd.spec;
    let mut out = String::from("# fedmod partition manifest v1\n");
    let _ = writeln!(out, "seed = {}", s.seed);
    let _ = writeln!(out, "test_fraction = {}", s.test_fraction);
    let _ = writeln!(out, "test_harmful_ratio = {}", s.test_harmful_ratio);
    let _ = writeln!(out, "client_size = {}", s.client_size);
    let _ = writeln!(out, "client_harmful_ratio = {}", s.client_harmful_ratio);
    let _ = writeln!(out, "n_clients = {}", fd.clients.len());
    let _ = writeln!(out, "test = {}", ids(&fd.test_set));
    for c in &fd.clients {
        let _ = writeln!(out, "client {} = {}", c.client_id, ids(&c.indices));
    }
    out
}

pub fn write_manifest(fd: &FederatedDataset, path: &Path) -> Result<()> {
    std::fs::write(path, manifest(fd)).map_err(|e| Error::io(path, e))
}

/// Rebuilds a partition of `corpus` from a manifest produced by [`manifest`].
pub fn from_manifest(corpus: Corpus, text: &str) -> Result<FederatedDataset> {
    let bad = |reason: String| Error::Format {
        what: "partition manifest",
        reason,
    };
    let by_id: HashMap<&str, usize> = corpus
        .examples()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();
    let resolve = |list: &str| -> Result<Vec<usize>> {
        let mut v = list
            .split_ascii_whitespace()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| bad(format!("unknown example id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        v.sort_unstable();
        Ok(v)
    };
    let mut spec = PartitionSpec::default();
    let mut test_set = None;
    let mut clients = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line without `=`: {line}")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
        let int = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{key}: {e}")));
        match key {
            "seed" => spec.seed = int(value)?,
            "test_fraction" => spec.test_fraction = num(value)?,
            "test_harmful_ratio" => spec.test_harmful_ratio = num(value)?,
            "client_size" => spec.client_size = int(value)? as usize,
            "client_harmful_ratio" => spec.client_harmful_ratio = num(value)?,
            "n_clients" => {}
            "test" => test_set = Some(resolve(value)?),
            k if k.starts_with("client ") => {
                let client_id = int(k["client ".len()..].trim())? as usize;
                let indices = resolve(value)?;
                let harmful_count = indices
                    .iter()
                    .filter(|&&i| corpus.examples()[i].label.is_harmful())
                    .count();
                clients.push(ClientShard {
                    client_id,
                    indices,
                    harmful_count,
                });
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let test_set = test_set.ok_or_else(|| bad("missing `test` line".into()))?;
    Ok(FederatedDataset {
        corpus,
        test_set,
        clients,
        spec,
    })
}
