//! Federated Averaging rounds: sample, broadcast, train locally, aggregate.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::dp::{clip_update, dp_aggregate, update_clip_norm, AdaptiveClipState, ClipMode, DivisorMode, DpConfig};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{init_params, local_train, predict, score, FeatureSet, ModelSpec, ParameterVector, TrainConfig};
use crate::partition::{ClientId, FederatedDataset};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingKind {
    /// The same clients every round.
    FixedCohort(Vec<ClientId>),
    /// `k` distinct clients drawn uniformly each round.
    Uniform(usize),
    /// Each client joins independently with probability `mean / population`.
    Poisson(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPolicy {
    pub kind: SamplingKind,
    pub seed: u64,
}

impl SamplingPolicy {
    pub fn validate(&self, population: &[ClientId]) -> Result<()> {
        let n = population.len();
        match &self.kind {
            SamplingKind::FixedCohort(ids) => {
                if let Some(bad) = ids.iter().find(|id| !population.contains(id)) {
                    return Err(Error::param("cohort", format!("client {bad} is not in the population")));
                }
            }
            SamplingKind::Uniform(k) if *k > n => {
                return Err(Error::param("k", format!("{k} exceeds population size {n}")));
            }
            SamplingKind::Poisson(mean) if !(*mean >= 0.0 && *mean <= n as f64) => {
                return Err(Error::param("mean", format!("{mean} must lie in [0, {n}]")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Expected number of participants per round.
    pub fn expected_cohort(&self, population: usize) -> f64 {
        match &self.kind {
            SamplingKind::FixedCohort(ids) => ids.len() as f64,
            SamplingKind::Uniform(k) => (*k).min(population) as f64,
            SamplingKind::Poisson(mean) => *mean,
        }
    }

    /// Per-client inclusion probability.
    pub fn sampling_probability(&self, population: usize) -> f64 {
        if population == 0 {
            0.0
        } else {
            (self.expected_cohort(population) / population as f64).min(1.0)
        }
    }
}

/// Participants of `round`, sorted ascending. May be empty under Poisson sampling.
pub fn sample_clients(policy: &SamplingPolicy, population: &[ClientId], round: u64) -> Vec<ClientId> {
    let mut rng = substream(policy.seed, "sampling", round);
    let mut out = match &policy.kind {
        SamplingKind::FixedCohort(ids) => ids.clone(),
        SamplingKind::Uniform(k) => index::sample(&mut rng, population.len(), (*k).min(population.len()))
            .into_iter()
            .map(|i| population[i])
            .collect(),
        SamplingKind::Poisson(_) => {
            let q = policy.sampling_probability(population.len());
            population.iter().copied().filter(|_| rng.random::<f64>() < q).collect()
        }
    };
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy)]
pub struct WeightedUpdate<'a> {
    pub client_id: ClientId,
    pub delta: &'a ParameterVector,
    pub weight: f64,
}

/// `sum(w_i * delta_i) / sum(w_i)`, reduced in ascending client-id order.
pub fn aggregate(updates: &[WeightedUpdate<'_>]) -> Result<ParameterVector> {
    let first = updates.first().ok_or(Error::param("updates", "nothing to aggregate"))?;
    let dim = first.delta.dimension();
    let mut sorted: Vec<&WeightedUpdate<'_>> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let mut total_weight = 0.0;
    let mut sum = vec![0.0; dim];
    for u in sorted {
        if u.delta.dimension() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: u.delta.dimension(),
            });
        }
        if !(u.weight >= 0.0) {
            return Err(Error::param("weights", "must be non-negative"));
        }
        total_weight += u.weight;
        for (s, v) in sum.iter_mut().zip(u.delta.iter()) {
            *s += u.weight * v;
        }
    }
    if total_weight <= 0.0 {
        return Err(Error::param("weights", "at least one weight must be positive"));
    }
    Ok(ParameterVector::new(
        sum.into_iter().map(|s| s / total_weight).collect(),
    ))
}

/// Everything that stays fixed across the rounds of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPlan {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub policy: SamplingPolicy,
    pub dp: Option<DpConfig>,
    pub rounds: u64,
    pub eval_every: u64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpRoundInfo {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub divisor: f64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// 1-based.
    pub round_index: u64,
    pub participant_ids: Vec<ClientId>,
    /// L2 norm of each participant's raw update, in participant order.
    pub delta_norms: Vec<f64>,
    pub clipped_fraction: f64,
    pub update_norm: f64,
    pub skipped: bool,
    pub dp: Option<DpRoundInfo>,
    pub eval: Option<EvalReport>,
    pub wall_time: f64,
}

impl RoundReport {
    pub fn mean_delta_norm(&self) -> f64 {
        if self.delta_norms.is_empty() {
            0.0
        } else {
            self.delta_norms.iter().sum::<f64>() / self.delta_norms.len() as f64
        }
    }

    pub fn max_delta_norm(&self) -> f64 {
        self.delta_norms.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    pub rounds: Vec<RoundReport>,
    pub final_params: ParameterVector,
    pub plan: TrainingPlan,
}

impl TrainingHistory {
    pub fn last_eval(&self) -> Option<&EvalReport> {
        self.rounds.iter().rev().find_map(|r| r.eval.as_ref())
    }
}

fn client_train_config(base: &TrainConfig, round: u64, client: ClientId) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(derive_seed(base.seed, "round", round), "client", client as u64),
        ..base.clone()
    }
}

/// One FedAvg round. `clip_state` must be given iff `plan.dp` is set.
pub fn run_round(
    global: &ParameterVector,
    fd: &FederatedDataset,
    features: &FeatureSet,
    plan: &TrainingPlan,
    clip_state: Option<&mut AdaptiveClipState>,
    round: u64,
) -> Result<(ParameterVector, RoundReport)> {
    let start = Instant::now();
    if global.dimension() != plan.model.param_count() {
        return Err(Error::DimensionMismatch {
            expected: plan.model.param_count(),
            actual: global.dimension(),
        });
    }
    let population = fd.client_ids();
    let participants = sample_clients(&plan.policy, &population, round);

    let shards = participants
        .iter()
        .map(|&id| {
            fd.client(id)
                .ok_or(Error::param("cohort", format!("unknown client {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let results = shards
        .par_iter()
        .map(|shard| {
            let cfg = client_train_config(&plan.train, round, shard.client_id);
            local_train(global, shard, features, &cfg, &plan.model).map(|(delta, stats)| (delta, stats.n_examples))
        })
        .collect::<Result<Vec<_>>>()?;
    let delta_norms: Vec<f64> = results.iter().map(|(d, _)| d.l2_norm()).collect();

    let mut report = RoundReport {
        round_index: round,
        participant_ids: participants.clone(),
        delta_norms,
        clipped_fraction: 0.0,
        update_norm: 0.0,
        skipped: participants.is_empty(),
        dp: None,
        eval: None,
        wall_time: 0.0,
    };

    let update = match (&plan.dp, clip_state) {
        (None, _) => {
            if participants.is_empty() {
                None
            } else {
                let updates: Vec<WeightedUpdate<'_>> = participants
                    .iter()
                    .zip(&results)
                    .map(|(&client_id, (delta, n))| WeightedUpdate {
                        client_id,
                        delta,
                        weight: *n as f64,
                    })
                    .collect();
                Some(aggregate(&updates)?)
            }
        }
        (Some(dp), Some(state)) => {
            let clip = state.current_clip;
            let divisor = match dp.divisor_mode {
                DivisorMode::ExpectedCohort => plan.policy.expected_cohort(population.len()),
                DivisorMode::ActualCohort => participants.len() as f64,
            };
            let noise_seed = derive_seed(dp.noise_seed, "noise", round);
            report.dp = Some(DpRoundInfo {
                clip_norm: clip,
                noise_multiplier: dp.noise_multiplier,
                divisor,
                noise_seed,
            });
            if participants.is_empty() {
                None
            } else {
                let mut clipped = Vec::with_capacity(results.len());
                let mut within = Vec::with_capacity(results.len());
                for (delta, _) in &results {
                    let (c, ok) = clip_update(delta, clip)?;
                    clipped.push(c);
                    within.push(ok);
                }
                report.clipped_fraction = within.iter().filter(|&&b| !b).count() as f64 / within.len() as f64;
                let mut noise_rng = substream(noise_seed, "gaussian", 0);
                let noised = dp_aggregate(
                    &clipped,
                    global.dimension(),
                    clip,
                    dp.noise_multiplier,
                    divisor,
                    &mut noise_rng,
                )?;
                if let ClipMode::Adaptive(params) = &dp.clip {
                    let mut rng = substream(dp.noise_seed, "quantile-noise", round);
                    *state = update_clip_norm(
                        state,
                        &within,
                        params,
                        plan.policy.expected_cohort(population.len()),
                        &mut rng,
                    );
                }
                Some(noised)
            }
        }
        (Some(_), None) => return Err(Error::param("clip_state", "required when DP is enabled")),
    };

    let next = match update {
        Some(u) => {
            report.update_norm = u.l2_norm();
            global.add(&u)?
        }
        None => global.clone(),
    };
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((next, report))
}

/// Scores the model on the test split.
pub fn evaluate(
    params: &ParameterVector,
    fd: &FederatedDataset,
    features: &FeatureSet,
    spec: &ModelSpec,
    threshold: f64,
) -> Result<EvalReport> {
    let mut logits = Vec::with_capacity(fd.test_set.len());
    let mut probs = Vec::with_capacity(fd.test_set.len());
    let mut labels = Vec::with_capacity(fd.test_set.len());
    for &i in &fd.test_set {
        logits.push(score(params, &features.features[i], spec)?);
        probs.push(predict(params, &features.features[i], spec)?);
        labels.push(features.labels[i] > 0.5);
    }
    EvalReport::compute(&logits, &probs, &labels, threshold)
}

/// Runs `plan.rounds` rounds from freshly initialized parameters.
///
/// Evaluates every `eval_every` rounds and after the last one.
pub fn run_training(fd: &FederatedDataset, features: &FeatureSet, plan: &TrainingPlan) -> Result<TrainingHistory> {
    if plan.rounds == 0 {
        return Err(Error::param("rounds", "must be at least 1"));
    }
    plan.model.validate()?;
    plan.train.validate()?;
    plan.policy.validate(&fd.client_ids())?;
    if let Some(dp) = &plan.dp {
        dp.validate()?;
    }
    let mut state = plan.dp.as_ref().map(DpConfig::initial_state);
    let mut params = init_params(&plan.model);
    let mut rounds = Vec::with_capacity(plan.rounds as usize);
    for r in 1..=plan.rounds {
        let (next, mut report) = run_round(&params, fd, features, plan, state.as_mut(), r)?;
        params = next;
        if (plan.eval_every > 0 && r % plan.eval_every == 0) || r == plan.rounds {
            report.eval = Some(evaluate(&params, fd, features, &plan.model, plan.threshold)?);
        }
        rounds.push(report);
    }
    Ok(TrainingHistory {
        rounds,
        final_params: params,
        plan: plan.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(n: usize) -> Vec<ClientId> {
        (0..n).collect()
    }

    #[test]
    fn fixed_cohort_verbatim() {
        let ids: Vec<ClientId> = (0..100).step_by(2).collect();
        let p = SamplingPolicy {
            kind: SamplingKind::FixedCohort(ids.clone()),
            seed: 1,
        };
        for r in [1, 7, 99] {
            assert_eq!(sample_clients(&p, &pop(100), r), ids);
        }
    }

    #[test]
    fn uniform_full_population() {
        let p = SamplingPolicy {
            kind: SamplingKind::Uniform(10),
            seed: 3,
        };
        assert_eq!(sample_clients(&p, &pop(10), 4), pop(10));
        let p = SamplingPolicy {
            kind: SamplingKind::Uniform(4),
            seed: 3,
        };
        let s = sample_clients(&p, &pop(10), 4);
        assert_eq!(s.len(), 4);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(s, sample_clients(&p, &pop(10), 5));
    }

    #[test]
    fn poisson_probability() {
        let p = SamplingPolicy {
            kind: SamplingKind::Poisson(25.0),
            seed: 5,
        };
        assert!((p.sampling_probability(628) - 25.0 / 628.0).abs() < 1e-15);
        let rounds = 10_000u64;
        let sizes: Vec<f64> = (0..rounds)
            .map(|r| sample_clients(&p, &pop(628), r).len() as f64)
            .collect();
        let mean = sizes.iter().sum::<f64>() / rounds as f64;
        let q = 25.0 / 628.0;
        let se = (628.0 * q * (1.0 - q) / rounds as f64).sqrt();
        assert!((mean - 25.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn poisson_can_be_empty() {
        let p = SamplingPolicy {
            kind: SamplingKind::Poisson(0.0),
            seed: 0,
        };
        assert!(sample_clients(&p, &pop(5), 1).is_empty());
    }

    #[test]
    fn aggregate_examples() {
        let d = ParameterVector::new(vec![1.0, -2.0]);
        let neg = d.scaled(-1.0);
        let u = |id, delta, weight| WeightedUpdate {
            client_id: id,
            delta,
            weight,
        };
        assert_eq!(
            aggregate(&[u(0, &d, 1.0), u(1, &neg, 1.0)]).unwrap().into_inner(),
            vec![0.0, 0.0]
        );
        assert_eq!(aggregate(&[u(0, &d, 3.0), u(1, &d, 3.0), u(2, &d, 3.0)]).unwrap(), d);
        let a = ParameterVector::new(vec![1.0]);
        let b = ParameterVector::new(vec![2.0]);
        assert_eq!(
            aggregate(&[u(0, &a, 100.0), u(1, &b, 300.0)]).unwrap().into_inner(),
            vec![1.75]
        );
        assert!(aggregate(&[u(0, &a, 0.0)]).is_err());
        assert!(aggregate(&[u(0, &a, 1.0), u(1, &d, 1.0)]).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregate_is_order_independent() {
        let vs: Vec<ParameterVector> = (0..6)
            .map(|i| ParameterVector::new(vec![0.1 * i as f64, 1.0 / (i as f64 + 1.0), 1e-17 * i as f64]))
            .collect();
        let forward: Vec<WeightedUpdate<'_>> = vs
            .iter()
            .enumerate()
            .map(|(i, d)| WeightedUpdate {
                client_id: i,
                delta: d,
                weight: 1.0 + i as f64,
            })
            .collect();
        let mut backward = forward.clone();
        backward.reverse();
        backward.swap(0, 3);
        assert_eq!(aggregate(&forward).unwrap(), aggregate(&backward).unwrap());
    }
}
