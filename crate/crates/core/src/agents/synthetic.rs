//! Analytic agents that choose according to the preference models, optionally with
//! logistic or softmax choice noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentError, CompletionRequest, TrialContext};
use crate::estimation::fehr_schmidt::{proposer_offer_probabilities, proposer_utility, responder_utility};
use crate::estimation::{cpt_utility, cpt_value, CptParams, FsParams};
use crate::games::{GameConfig, GgConfig, Role, UgConfig};
use crate::parser::ParsedDecision;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Ultimatum-game decision of an inequity-averse agent.
///
/// Responders accept when accepting is worth at least the zero payoff of rejecting
/// (with probability `logistic(U / noise)` when `noise_scale > 0`). Proposers pick the
/// utility-maximizing offer, breaking ties toward the larger offer, or sample from a
/// softmax over offers at temperature `noise_scale`.
pub fn fs_decide<R: Rng + ?Sized>(
    params: &FsParams,
    config: &UgConfig,
    noise_scale: f64,
    rng: &mut R,
) -> ParsedDecision {
    match config.role {
        Role::Responder => {
            let offer = config.probed_offer.expect("responder configs carry an offer");
            let u = responder_utility(config.pool, offer, params);
            let accept = if noise_scale > 0.0 { rng.random::<f64>() < logistic(u / noise_scale) } else { u >= 0.0 };
            if accept {
                ParsedDecision::Accept
            } else {
                ParsedDecision::Reject
            }
        }
        Role::Proposer if noise_scale > 0.0 => {
            let probs = proposer_offer_probabilities(config.pool, params, noise_scale);
            let mut draw = rng.random::<f64>();
            for (x, p) in probs.iter().enumerate() {
                if draw < *p {
                    return ParsedDecision::Offer(x as u32);
                }
                draw -= p;
            }
            ParsedDecision::Offer(config.pool)
        }
        Role::Proposer => {
            let best = (0..=config.pool)
                .map(|x| (x, proposer_utility(config.pool, x, params)))
                .fold((0, f64::NEG_INFINITY), |acc, (x, u)| if u >= acc.1 { (x, u) } else { acc });
            ParsedDecision::Offer(best.0)
        }
    }
}

/// Gambling-game decision of a prospect-theory agent; ties go to the gamble.
pub fn cpt_decide<R: Rng + ?Sized>(
    params: &CptParams,
    config: &GgConfig,
    noise_scale: f64,
    rng: &mut R,
) -> ParsedDecision {
    let diff = cpt_utility(&config.lottery(), params) - cpt_value(config.sure_amount, params);
    let gamble = if noise_scale > 0.0 { rng.random::<f64>() < logistic(diff / noise_scale) } else { diff >= 0.0 };
    if gamble {
        ParsedDecision::ChoiceGamble
    } else {
        ParsedDecision::ChoiceSure
    }
}

/// Probability that a noisy agent picks the positive option (accept / gamble).
pub fn positive_probability(
    config: &GameConfig,
    fs: Option<&FsParams>,
    cpt: Option<&CptParams>,
    noise: f64,
) -> Option<f64> {
    let diff = match (config, fs, cpt) {
        (GameConfig::Ug(c), Some(p), _) if c.role == Role::Responder => responder_utility(c.pool, c.probed_offer?, p),
        (GameConfig::Gg(c), _, Some(p)) => cpt_utility(&c.lottery(), p) - cpt_value(c.sure_amount, p),
        _ => return None,
    };
    Some(if noise > 0.0 {
        logistic(diff / noise)
    } else if diff >= 0.0 {
        1.0
    } else {
        0.0
    })
}

fn trial_rng(trial: &TrialContext) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial.seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFs {
    pub params: FsParams,
    pub noise_scale: f64,
}

impl Agent for SyntheticFs {
    fn complete(&self, _request: &CompletionRequest, trial: &TrialContext) -> Result<String, AgentError> {
        match &trial.config {
            GameConfig::Ug(c) => {
                Ok(fs_decide(&self.params, c, self.noise_scale, &mut trial_rng(trial)).canonical_text())
            }
            GameConfig::Gg(_) => {
                Err(AgentError::Unsupported("inequity-aversion agent plays only the ultimatum game".into()))
            }
        }
    }

    fn describe(&self) -> String {
        format!("synthetic-fs(alpha={},beta={},noise={})", self.params.alpha, self.params.beta, self.noise_scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCpt {
    pub params: CptParams,
    pub noise_scale: f64,
}

impl Agent for SyntheticCpt {
    fn complete(&self, _request: &CompletionRequest, trial: &TrialContext) -> Result<String, AgentError> {
        match &trial.config {
            GameConfig::Gg(c) => {
                Ok(cpt_decide(&self.params, c, self.noise_scale, &mut trial_rng(trial)).canonical_text())
            }
            GameConfig::Ug(_) => {
                Err(AgentError::Unsupported("prospect-theory agent plays only the gambling game".into()))
            }
        }
    }

    fn describe(&self) -> String {
        let p = &self.params;
        format!(
            "synthetic-cpt(a={},b={},l={},wp={},wm={},noise={})",
            p.alpha_gain, p.beta_loss, p.lambda, p.phi_plus, p.phi_minus, self.noise_scale
        )
    }
}
