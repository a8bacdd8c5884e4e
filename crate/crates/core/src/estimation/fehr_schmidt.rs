//! Inequity-aversion utility and the ultimatum-game estimators.

use std::collections::BTreeMap;

use log::info;
use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::optim::{minimize, Bounds, MinimizeOptions, MinimizeResult};

/// Inequity-aversion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsParams {
    /// Aversion to receiving less than the counterpart.
    pub alpha: f64,
    /// Aversion to receiving more than the counterpart.
    pub beta: f64,
}

impl FsParams {
    pub const ALPHA_BOUNDS: (f64, f64) = (0.0, 10.0);
    pub const BETA_BOUNDS: (f64, f64) = (0.0, 1.0);

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Utility of own payoff `own` when the counterpart receives `other`.
pub fn fs_utility(own: f64, other: f64, params: &FsParams) -> f64 {
    if own < other {
        own - params.alpha * (other - own)
    } else {
        own - params.beta * (own - other)
    }
}

/// Offer at which a responder is indifferent between accepting and rejecting.
pub fn indifference_offer(alpha: f64, pool: f64) -> f64 {
    alpha * pool / (1.0 + 2.0 * alpha)
}

/// Proposer's utility from offering `offer` out of `pool`, assuming acceptance.
pub fn proposer_utility(pool: u32, offer: u32, params: &FsParams) -> f64 {
    fs_utility((pool - offer) as f64, offer as f64, params)
}

/// Responder's utility from accepting `offer`; rejecting yields zero.
pub fn responder_utility(pool: u32, offer: u32, params: &FsParams) -> f64 {
    fs_utility(offer as f64, (pool - offer) as f64, params)
}

/// Softmax probabilities over offers `0..=pool` at the given utility scale.
pub fn proposer_offer_probabilities(pool: u32, params: &FsParams, scale: f64) -> Vec<f64> {
    let utils: Vec<f64> = (0..=pool).map(|x| proposer_utility(pool, x, params) / scale).collect();
    let max = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = utils.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Whether the thresholds were read at integer switching points or interpolated crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Integer,
    Interpolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub threshold_kind: ThresholdKind,
    pub pools_used: Vec<u32>,
    pub pools_dropped: Vec<u32>,
    pub diagnostics: MinimizeResult,
}

/// Pooled least-squares α from per-pool acceptance thresholds.
///
/// Pools whose threshold is at or above half the pool carry no information about α
/// and are dropped.
pub fn fs_alpha_from_thresholds(
    thresholds: &BTreeMap<u32, f64>,
    kind: ThresholdKind,
    opts: &MinimizeOptions,
) -> Result<AlphaEstimate, EstimationError> {
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    for (&pool, &s) in thresholds {
        if s < pool as f64 / 2.0 {
            used.push((pool, s));
        } else {
            info!("pool {pool}: threshold {s} >= pool/2, dropped from alpha estimation");
            dropped.push(pool);
        }
    }
    if used.is_empty() {
        return Err(EstimationError::NoIdentifiablePool);
    }
    let bounds = Bounds::from_pairs(&[FsParams::ALPHA_BOUNDS])?;
    let objective =
        |a: &[f64]| used.iter().map(|&(n, s)| (s - indifference_offer(a[0], n as f64)).powi(2)).sum::<f64>();
    let fit = minimize(objective, &bounds, opts)?;
    Ok(AlphaEstimate {
        alpha: fit.x[0],
        threshold_kind: kind,
        pools_used: used.iter().map(|u| u.0).collect(),
        pools_dropped: dropped,
        diagnostics: fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta: f64,
    pub alpha_assumed: f64,
    pub softmax_scale: f64,
    pub n_offers: usize,
    pub mean_offer_proportion: f64,
    pub neg_log_likelihood: f64,
    pub diagnostics: MinimizeResult,
}

/// Softmax scale of the proposer choice model, in monetary units.
pub const PROPOSER_SOFTMAX_SCALE: f64 = 1.0;

/// Maximum-likelihood β from proposer offers `(pool, offer)`.
///
/// Offers are modelled as softmax choices over `0..=pool` with utilities from the
/// inequity-aversion utility at scale [`PROPOSER_SOFTMAX_SCALE`]. `alpha` only shapes
/// the utility of offers above half the pool.
pub fn fs_beta_from_offers(
    offers: &[(u32, u32)],
    alpha: f64,
    opts: &MinimizeOptions,
) -> Result<BetaEstimate, EstimationError> {
    if offers.is_empty() {
        return Err(EstimationError::NoOffers);
    }
    if let Some(&(pool, offer)) = offers.iter().find(|(p, o)| o > p) {
        return Err(EstimationError::InvalidOffer { pool, offer });
    }
    // sufficient statistics: offer counts per pool
    let mut counts: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(pool, offer) in offers {
        counts.entry(pool).or_insert_with(|| vec![0; pool as usize + 1])[offer as usize] += 1;
    }
    let nll = |b: &[f64]| {
        let params = FsParams::new(alpha, b[0]);
        counts
            .iter()
            .map(|(&pool, c)| {
                let probs = proposer_offer_probabilities(pool, &params, PROPOSER_SOFTMAX_SCALE);
                c.iter().zip(&probs).map(|(&k, p)| -(k as f64) * p.ln()).sum::<f64>()
            })
            .sum::<f64>()
    };
    let bounds = Bounds::from_pairs(&[FsParams::BETA_BOUNDS])?;
    let fit = minimize(nll, &bounds, opts)?;
    let mean_prop = offers.iter().map(|&(p, o)| o as f64 / p as f64).sum::<f64>() / offers.len() as f64;
    Ok(BetaEstimate {
        beta: fit.x[0],
        alpha_assumed: alpha,
        softmax_scale: PROPOSER_SOFTMAX_SCALE,
        n_offers: offers.len(),
        mean_offer_proportion: mean_prop,
        neg_log_likelihood: fit.f,
        diagnostics: fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConsistency {
    pub pool: u32,
    pub n: usize,
    pub mean_proportion: f64,
    /// Sample standard deviation of offer proportions within the pool.
    pub sd_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub pools: Vec<PoolConsistency>,
    /// Unweighted mean of the per-pool standard deviations.
    pub expected_sd: f64,
    /// Sample standard deviation of the per-pool mean proportions; `None` with a single pool.
    pub inter_pool_sd: Option<f64>,
    pub overall_mean_proportion: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Intra- and inter-pool consistency of proposer offers `(pool, offer)`.
pub fn consistency_stats(offers: &[(u32, u32)]) -> Result<ConsistencyReport, EstimationError> {
    let mut by_pool: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &(pool, offer) in offers {
        by_pool.entry(pool).or_default().push(offer as f64 / pool as f64);
    }
    if by_pool.is_empty() {
        return Err(EstimationError::NoOffers);
    }
    let mut pools = Vec::with_capacity(by_pool.len());
    for (pool, props) in &by_pool {
        if props.len() < 2 {
            return Err(EstimationError::TooFewOffers { pool: *pool, got: props.len() });
        }
        pools.push(PoolConsistency {
            pool: *pool,
            n: props.len(),
            mean_proportion: mean(props),
            sd_proportion: sample_sd(props),
        });
    }
    let sds: Vec<f64> = pools.iter().map(|p| p.sd_proportion).collect();
    let means: Vec<f64> = pools.iter().map(|p| p.mean_proportion).collect();
    let all: Vec<f64> = by_pool.values().flatten().copied().collect();
    Ok(ConsistencyReport {
        expected_sd: mean(&sds),
        inter_pool_sd: (means.len() >= 2).then(|| sample_sd(&means)),
        overall_mean_proportion: mean(&all),
        pools,
    })
}
