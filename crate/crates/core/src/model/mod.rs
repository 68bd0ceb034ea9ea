//! Trainable text classifier over hashed bag-of-words features.
//!
//! Every model exposes the same contract over a flat [`ParameterVector`]:
//! [`init_params`], [`predict`] and the binary cross-entropy [`gradient`].
//! The federated and DP layers only ever see the flat vector.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{evaluate_loss, local_train, FeatureSet, LocalStats, TrainConfig};

use std::collections::BTreeMap;
use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, substream};

/// Flat model parameters; the unit exchanged between clients and server.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self + other`, element-wise.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// `self - other`, element-wise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dimension() != other.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: other.dimension(),
            });
        }
        Ok(())
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Sparse input vector: sorted `(index, weight)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
    dimension: usize,
}

impl FeatureVector {
    /// Builds a vector from arbitrary entries; duplicates are summed.
    pub fn from_entries(dimension: usize, entries: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, w) in entries {
            if i as usize >= dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: i as usize + 1,
                });
            }
            if !w.is_finite() {
                return Err(Error::NonFinite("feature weight".into()));
            }
            *map.entry(i).or_default() += w;
        }
        Ok(Self {
            entries: map.into_iter().collect(),
            dimension,
        })
    }

    pub fn zeros(dimension: usize) -> Self {
        Self {
            entries: Vec::new(),
            dimension,
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&(_, w)| w == 0.0)
    }

    fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| dense[i as usize] * w).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LogisticRegression,
    /// One tanh hidden layer feeding a single sigmoid output.
    OneHiddenLayer,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "logistic_regression" => Ok(Self::LogisticRegression),
            "one_hidden_layer" => Ok(Self::OneHiddenLayer),
            other => Err(format!(
                "unknown model kind `{other}` (expected logistic_regression or one_hidden_layer)"
            )),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LogisticRegression => "logistic_regression",
            Self::OneHiddenLayer => "one_hidden_layer",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hash_dimension: usize,
    pub hidden_units: usize,
    /// Dropout on the hidden layer during training; ignored by the linear model.
    pub dropout: f64,
    pub init_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            hash_dimension: 1 << 15,
            hidden_units: 32,
            dropout: 0.0,
            init_seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.hash_dimension.is_power_of_two() || self.hash_dimension > u32::MAX as usize {
            return Err(Error::param("hash_dimension", "must be a power of two below 2^32"));
        }
        if self.kind == ModelKind::OneHiddenLayer && self.hidden_units == 0 {
            return Err(Error::param("hidden_units", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let d = self.hash_dimension;
        match self.kind {
            ModelKind::LogisticRegression => d + 1,
            ModelKind::OneHiddenLayer => {
                let h = self.hidden_units;
                h * d + 2 * h + 1
            }
        }
    }
}

/// Bucket of a token: FNV-1a 64 of its UTF-8 bytes modulo `dimension`.
pub fn hash_bucket(token: &str, dimension: usize) -> u32 {
    (fnv1a64(token.as_bytes()) % dimension as u64) as u32
}

/// Hashed term frequencies, L2-normalized when non-zero.
pub fn featurize<S: AsRef<str>>(tokens: &[S], spec: &ModelSpec) -> FeatureVector {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for t in tokens {
        *counts.entry(hash_bucket(t.as_ref(), spec.hash_dimension)).or_default() += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let entries = if norm > 0.0 {
        counts.into_iter().map(|(i, c)| (i, c / norm)).collect()
    } else {
        Vec::new()
    };
    FeatureVector {
        entries,
        dimension: spec.hash_dimension,
    }
}

/// Linear model: zeros. Hidden layer: weights uniform in ±1/sqrt(fan_in), biases zero.
pub fn init_params(spec: &ModelSpec) -> ParameterVector {
    let mut p = ParameterVector::zeros(spec.param_count());
    if spec.kind == ModelKind::OneHiddenLayer {
        let d = spec.hash_dimension;
        let h = spec.hidden_units;
        let mut rng = substream(spec.init_seed, "init", 0);
        let b1 = 1.0 / (d as f64).sqrt();
        for w in &mut p[..h * d] {
            *w = rng.random_range(-b1..=b1);
        }
        let b2 = 1.0 / (h as f64).sqrt();
        for w in &mut p[h * d + h..h * d + 2 * h] {
            *w = rng.random_range(-b2..=b2);
        }
    }
    p
}

fn check_shapes(params: &ParameterVector, x: &FeatureVector, spec: &ModelSpec) -> Result<()> {
    if params.dimension() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            actual: params.dimension(),
        });
    }
    if x.dimension() != spec.hash_dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.hash_dimension,
            actual: x.dimension(),
        });
    }
    Ok(())
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 label.
pub fn bce_from_logit(score: f64, label: f64) -> f64 {
    let softplus = score.max(0.0) + (-score.abs()).exp().ln_1p();
    softplus - label * score
}

struct Forward {
    score: f64,
    /// Hidden activations after dropout scaling (hidden-layer model only).
    hidden: Vec<f64>,
    /// Dropout scale per unit: 0 for dropped units, 1/(1-p) otherwise.
    keep: Vec<f64>,
}

fn forward(params: &[f64], x: &FeatureVector, spec: &ModelSpec, dropout_rng: Option<&mut ChaCha8Rng>) -> Forward {
    let d = spec.hash_dimension;
    match spec.kind {
        ModelKind::LogisticRegression => Forward {
            score: x.dot(&params[..d]) + params[d],
            hidden: Vec::new(),
            keep: Vec::new(),
        },
        ModelKind::OneHiddenLayer => {
            let h = spec.hidden_units;
            let keep: Vec<f64> = match dropout_rng {
                Some(rng) if spec.dropout > 0.0 => (0..h)
                    .map(|_| {
                        if rng.random::<f64>() < spec.dropout {
                            0.0
                        } else {
                            1.0 / (1.0 - spec.dropout)
                        }
                    })
                    .collect(),
                _ => vec![1.0; h],
            };
            let hidden: Vec<f64> = (0..h)
                .map(|j| {
                    let a = x.dot(&params[j * d..(j + 1) * d]) + params[h * d + j];
                    a.tanh() * keep[j]
                })
                .collect();
            let w2 = &params[h * d + h..h * d + 2 * h];
            let score = hidden.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + params[h * d + 2 * h];
            Forward { score, hidden, keep }
        }
    }
}

/// Raw logit of the model for one input.
pub fn score(params: &ParameterVector, x: &FeatureVector, spec: &ModelSpec) -> Result<f64> {
    check_shapes(params, x, spec)?;
    Ok(forward(params, x, spec, None).score)
}

/// Probability of the harmful class, kept strictly inside (0, 1).
pub fn predict(params: &ParameterVector, x: &FeatureVector, spec: &ModelSpec) -> Result<f64> {
    let p = sigmoid(score(params, x, spec)?);
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Accumulates `scale * dLoss/dParams` for one example into `grad`.
/// Returns the example's loss.
fn accumulate_gradient(
    params: &[f64],
    x: &FeatureVector,
    label: f64,
    spec: &ModelSpec,
    scale: f64,
    grad: &mut [f64],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> f64 {
    let d = spec.hash_dimension;
    let fwd = forward(params, x, spec, dropout_rng);
    let dscore = (sigmoid(fwd.score) - label) * scale;
    match spec.kind {
        ModelKind::LogisticRegression => {
            for &(i, w) in x.entries() {
                grad[i as usize] += dscore * w;
            }
            grad[d] += dscore;
        }
        ModelKind::OneHiddenLayer => {
            let h = spec.hidden_units;
            for j in 0..h {
                let w2 = params[h * d + h + j];
                grad[h * d + h + j] += dscore * fwd.hidden[j];
                if fwd.keep[j] == 0.0 {
                    continue;
                }
                let t = fwd.hidden[j] / fwd.keep[j];
                let da = dscore * w2 * fwd.keep[j] * (1.0 - t * t);
                for &(i, w) in x.entries() {
                    grad[j * d + i as usize] += da * w;
                }
                grad[h * d + j] += da;
            }
            grad[h * d + 2 * h] += dscore;
        }
    }
    bce_from_logit(fwd.score, label)
}

pub(crate) fn batch_gradient_into(
    params: &[f64],
    batch: &[(&FeatureVector, f64)],
    spec: &ModelSpec,
    grad: &mut [f64],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &(x, y) in batch {
        loss += accumulate_gradient(params, x, y, spec, scale, grad, dropout_rng.as_deref_mut());
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(loss * scale)
}

/// Mean binary cross-entropy gradient over a non-empty batch.
pub fn gradient(params: &ParameterVector, batch: &[(FeatureVector, f64)], spec: &ModelSpec) -> Result<ParameterVector> {
    if batch.is_empty() {
        return Err(Error::param("batch", "must be non-empty"));
    }
    for (x, _) in batch {
        check_shapes(params, x, spec)?;
    }
    let refs: Vec<(&FeatureVector, f64)> = batch.iter().map(|(x, y)| (x, *y)).collect();
    let mut grad = vec![0.0; params.dimension()];
    batch_gradient_into(params, &refs, spec, &mut grad, None)?;
    Ok(ParameterVector(grad))
}

/// Mean binary cross-entropy over a batch.
pub fn loss(params: &ParameterVector, batch: &[(FeatureVector, f64)], spec: &ModelSpec) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in batch {
        total += bce_from_logit(score(params, x, spec)?, *y);
    }
    Ok(total / batch.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn lr_spec(d: usize) -> ModelSpec {
        ModelSpec {
            hash_dimension: d,
            ..Default::default()
        }
    }

    #[test]
    fn featurize_cases() {
        let spec = lr_spec(1 << 15);
        assert!(featurize::<&str>(&[], &spec).is_zero());
        let f = featurize(&["bad", "bad"], &spec);
        assert_eq!(f.entries().len(), 1);
        assert_eq!(f.entries()[0].1, 1.0);
        // dimension 1 forces every token into bucket 0: counts {0: 2} -> 1.0
        let f = featurize(&["a", "b"], &lr_spec(1));
        assert_eq!(f.entries(), &[(0, 1.0)]);
        // two distinct buckets, one count each -> 1/sqrt(2) each
        let f = featurize(&["a", "b"], &spec);
        assert_eq!(hash_bucket("a", 1 << 15), (0xaf63_dc4c_8601_ec8c_u64 % 32768) as u32);
        for &(_, w) in f.entries() {
            assert!((w - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn init_cases() {
        let p = init_params(&lr_spec(8));
        assert_eq!(p.into_inner(), vec![0.0; 9]);
        let spec = ModelSpec {
            kind: ModelKind::OneHiddenLayer,
            hash_dimension: 512,
            hidden_units: 20,
            init_seed: 11,
            ..Default::default()
        };
        let a = init_params(&spec);
        assert_eq!(a, init_params(&spec));
        assert!(a.dimension() > 10_000);
        let bound = 1.0 / (512f64).sqrt();
        assert!(a[..512 * 20].iter().all(|w| w.abs() <= bound));
        assert!(a[512 * 20..512 * 20 + 20].iter().all(|&b| b == 0.0));
        assert_eq!(a[a.dimension() - 1], 0.0);
    }

    #[test]
    fn predict_cases() {
        let spec = lr_spec(4);
        let x = FeatureVector::from_entries(4, [(0, 1.0), (2, 0.5)]).unwrap();
        assert_eq!(predict(&init_params(&spec), &x, &spec).unwrap(), 0.5);
        let p = ParameterVector::new(vec![2.0, 0.0, 0.0, 0.0, 0.0]);
        let x0 = FeatureVector::from_entries(4, [(0, 1.0)]).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((predict(&p, &x0, &spec).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.8808).abs() < 1e-4);
        let big = ParameterVector::new(vec![100.0, 0.0, 0.0, 0.0, 0.0]);
        let p = predict(&big, &x0, &spec).unwrap();
        assert!(p > 0.99 && p < 1.0);
        assert!(predict(&big, &FeatureVector::zeros(8), &spec).is_err());
        assert!(predict(&ParameterVector::zeros(3), &x0, &spec).is_err());
    }

    #[test]
    fn gradient_cases() {
        let spec = lr_spec(2);
        let w = init_params(&spec);
        let x = FeatureVector::from_entries(2, [(0, 1.0)]).unwrap();
        let g = gradient(&w, &[(x.clone(), 1.0)], &spec).unwrap();
        assert_eq!(g[0], -0.5);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], -0.5);
        let g2 = gradient(&w, &[(x.clone(), 1.0), (x, 1.0)], &spec).unwrap();
        assert_eq!(g, g2);
        assert!(gradient(&w, &[], &spec).is_err());
    }

    fn random_instance(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> (ParameterVector, Vec<(FeatureVector, f64)>) {
        let params = ParameterVector::new((0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let batch = (0..rng.random_range(1..6))
            .map(|_| {
                let n = rng.random_range(1..4);
                let x = FeatureVector::from_entries(
                    spec.hash_dimension,
                    (0..n).map(|_| {
                        (
                            rng.random_range(0..spec.hash_dimension as u32),
                            rng.random_range(-1.0..1.0),
                        )
                    }),
                )
                .unwrap();
                (x, if rng.random::<bool>() { 1.0 } else { 0.0 })
            })
            .collect();
        (params, batch)
    }

    fn finite_difference_check(spec: &ModelSpec, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let (params, batch) = random_instance(&mut rng, spec);
            let g = gradient(&params, &batch, spec).unwrap();
            let h = 1e-5;
            for i in 0..params.dimension() {
                let mut plus = params.clone();
                plus[i] += h;
                let mut minus = params.clone();
                minus[i] -= h;
                let fd = (loss(&plus, &batch, spec).unwrap() - loss(&minus, &batch, spec).unwrap()) / (2.0 * h);
                let err = (fd - g[i]).abs() / g[i].abs().max(1e-3);
                assert!(err < 1e-5, "coord {i}: analytic {} vs fd {fd}", g[i]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_linear() {
        finite_difference_check(&lr_spec(8), 1);
    }

    #[test]
    fn gradient_matches_finite_differences_hidden() {
        let spec = ModelSpec {
            kind: ModelKind::OneHiddenLayer,
            hash_dimension: 4,
            hidden_units: 3,
            ..Default::default()
        };
        finite_difference_check(&spec, 2);
    }

    #[test]
    fn spec_validation() {
        assert!(lr_spec(1000).validate().is_err());
        assert!(lr_spec(1024).validate().is_ok());
        let spec = ModelSpec {
            dropout: 1.0,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }

    proptest! {
        #[test]
        fn predict_stays_in_open_unit_interval(w in -1e6f64..1e6, b in -1e6f64..1e6, v in -10f64..10.0) {
            let spec = lr_spec(1);
            let p = ParameterVector::new(vec![w, b]);
            let x = FeatureVector::from_entries(1, [(0, v)]).unwrap();
            let y = predict(&p, &x, &spec).unwrap();
            prop_assert!(y > 0.0 && y < 1.0);
        }
    }
}
