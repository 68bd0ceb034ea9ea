//! Server-side (central) differential privacy for client updates.
//!
//! Each update is clipped to L2 norm `C`; the server sums the clipped
//! updates, adds Gaussian noise with per-coordinate std `z * C` to the sum,
//! and divides by the configured divisor. With adaptive clipping, `C`
//! follows a geometric update driven by the noised fraction of clients
//! whose update norm was within the current bound.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::ParameterVector;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveClipParams {
    pub initial_clip: f64,
    pub target_quantile: f64,
    pub clip_learning_rate: f64,
    /// Std of the noise on the indicator count; `None` means expected cohort / 20.
    pub quantile_noise: Option<f64>,
}

impl Default for AdaptiveClipParams {
    fn default() -> Self {
        Self {
            initial_clip: 0.1,
            target_quantile: 0.5,
            clip_learning_rate: 0.2,
            quantile_noise: None,
        }
    }
}

impl AdaptiveClipParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_clip > 0.0) {
            return Err(Error::param("initial_clip", "must be positive"));
        }
        if !(self.target_quantile > 0.0 && self.target_quantile < 1.0) {
            return Err(Error::param("target_quantile", "must lie in (0, 1)"));
        }
        if !(self.clip_learning_rate > 0.0) {
            return Err(Error::param("clip_learning_rate", "must be positive"));
        }
        if let Some(s) = self.quantile_noise {
            if !(s >= 0.0) {
                return Err(Error::param("quantile_noise", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn quantile_noise_std(&self, expected_cohort: f64) -> f64 {
        self.quantile_noise.unwrap_or(expected_cohort / 20.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClipMode {
    Fixed(f64),
    Adaptive(AdaptiveClipParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivisorMode {
    /// Divide by the expected cohort size (unbiased under Poisson sampling).
    ExpectedCohort,
    /// Divide by the number of clients that actually took part.
    ActualCohort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpConfig {
    pub noise_multiplier: f64,
    pub clip: ClipMode,
    pub delta: f64,
    pub divisor_mode: DivisorMode,
    /// Parent seed of the per-round noise streams.
    pub noise_seed: u64,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::param("noise_multiplier", "must be finite and non-negative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        match &self.clip {
            ClipMode::Fixed(c) if !(*c > 0.0) => Err(Error::param("clip_norm", "must be positive")),
            ClipMode::Fixed(_) => Ok(()),
            ClipMode::Adaptive(p) => p.validate(),
        }
    }

    pub fn initial_state(&self) -> AdaptiveClipState {
        AdaptiveClipState {
            current_clip: match &self.clip {
                ClipMode::Fixed(c) => *c,
                ClipMode::Adaptive(p) => p.initial_clip,
            },
            round: 0,
        }
    }
}

/// Current clip bound; fixed clipping keeps it constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveClipState {
    pub current_clip: f64,
    pub round: u64,
}

/// Scales `delta` into the L2 ball of radius `clip`.
///
/// The flag is true when the original norm was already within the bound.
pub fn clip_update(delta: &ParameterVector, clip: f64) -> Result<(ParameterVector, bool)> {
    if !(clip > 0.0) {
        return Err(Error::param("clip", "must be positive"));
    }
    let norm = delta.l2_norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite("update norm".into()));
    }
    if norm <= clip {
        Ok((delta.clone(), true))
    } else {
        Ok((delta.scaled(clip / norm), false))
    }
}

/// `(sum(clipped) + noise) / divisor`, noise ~ N(0, (z*C)^2) per coordinate.
///
/// Inputs are summed in the given order; callers pass them sorted by client id.
pub fn dp_aggregate<R: Rng + ?Sized>(
    clipped: &[ParameterVector],
    dimension: usize,
    clip: f64,
    noise_multiplier: f64,
    divisor: f64,
    rng: &mut R,
) -> Result<ParameterVector> {
    if !(divisor > 0.0) {
        return Err(Error::param("divisor", "must be positive"));
    }
    let mut sum = vec![0.0; dimension];
    for u in clipped {
        if u.dimension() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: u.dimension(),
            });
        }
        let norm = u.l2_norm();
        if norm > clip * (1.0 + 1e-9) {
            return Err(Error::Unclipped { norm, clip });
        }
        for (s, v) in sum.iter_mut().zip(u.iter()) {
            *s += v;
        }
    }
    if noise_multiplier > 0.0 {
        let normal =
            Normal::new(0.0, noise_multiplier * clip).map_err(|e| Error::param("noise_multiplier", e.to_string()))?;
        for s in &mut sum {
            *s += normal.sample(rng);
        }
    }
    Ok(ParameterVector::new(sum.into_iter().map(|s| s / divisor).collect()))
}

/// Geometric clip update towards the target quantile of update norms.
pub fn update_clip_norm<R: Rng + ?Sized>(
    state: &AdaptiveClipState,
    indicators: &[bool],
    params: &AdaptiveClipParams,
    expected_cohort: f64,
    rng: &mut R,
) -> AdaptiveClipState {
    let within = indicators.iter().filter(|&&b| b).count() as f64;
    let sigma = params.quantile_noise_std(expected_cohort);
    let noise = if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    };
    let fraction = (within + noise) / expected_cohort;
    AdaptiveClipState {
        current_clip: state.current_clip * (-params.clip_learning_rate * (fraction - params.target_quantile)).exp(),
        round: state.round + 1,
    }
}
