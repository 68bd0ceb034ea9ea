use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_update, AdamState};
use super::{batch_gradient_into, bce_from_logit, featurize, forward, FeatureVector, ModelSpec, ParameterVector};
use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::partition::ClientShard;
use crate::rng::substream;

/// Local optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Parent seed of the per-epoch shuffle streams.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 7,
            batch_size: 10,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be finite and non-negative"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(name, "must lie in [0, 1)"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::param("adam_epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Featurized corpus, index-aligned with the corpus it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<f64>,
}

impl FeatureSet {
    pub fn from_corpus(corpus: &Corpus, spec: &ModelSpec) -> Self {
        let features = corpus
            .examples()
            .par_iter()
            .map(|e| featurize(&e.tokens, spec))
            .collect();
        let labels = corpus.examples().iter().map(|e| e.label.as_f64()).collect();
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalStats {
    pub n_examples: usize,
    /// Mean loss over the shard after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl LocalStats {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mean BCE of `params` over the given examples.
pub fn evaluate_loss(params: &[f64], data: &FeatureSet, indices: &[usize], spec: &ModelSpec) -> f64 {
    let total: f64 = indices
        .iter()
        .map(|&i| bce_from_logit(forward(params, &data.features[i], spec, None).score, data.labels[i]))
        .sum();
    total / indices.len().max(1) as f64
}

/// Runs `epochs` passes of mini-batch Adam over the shard, starting from
/// `global` with a fresh optimizer. Returns `final - global`.
pub fn local_train(
    global: &ParameterVector,
    shard: &ClientShard,
    data: &FeatureSet,
    config: &TrainConfig,
    spec: &ModelSpec,
) -> Result<(ParameterVector, LocalStats)> {
    let wrap = |e: Error| Error::Client {
        client_id: shard.client_id,
        source: Box::new(e),
    };
    if shard.is_empty() {
        return Err(wrap(Error::param("shard", "client holds no examples")));
    }
    if global.dimension() != spec.param_count() {
        return Err(wrap(Error::DimensionMismatch {
            expected: spec.param_count(),
            actual: global.dimension(),
        }));
    }
    let mut params = global.to_vec();
    let mut state = AdamState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut order = shard.indices.clone();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut substream(config.seed, "shuffle", epoch as u64));
        let mut dropout_rng = substream(config.seed, "dropout", epoch as u64);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&FeatureVector, f64)> =
                chunk.iter().map(|&i| (&data.features[i], data.labels[i])).collect();
            let rng: Option<&mut ChaCha8Rng> = if spec.dropout > 0.0 {
                Some(&mut dropout_rng)
            } else {
                None
            };
            batch_gradient_into(&params, &batch, spec, &mut grad, rng).map_err(wrap)?;
            adam_update(&mut params, &grad, &mut state, config);
        }
        let loss = evaluate_loss(&params, data, &shard.indices, spec);
        if !loss.is_finite() {
            return Err(wrap(Error::NonFinite(format!("local loss at epoch {epoch}"))));
        }
        epoch_losses.push(loss);
    }
    let delta: Vec<f64> = params.iter().zip(global.iter()).map(|(p, g)| p - g).collect();
    Ok((
        ParameterVector::new(delta),
        LocalStats {
            n_examples: shard.len(),
            epoch_losses,
        },
    ))
}
