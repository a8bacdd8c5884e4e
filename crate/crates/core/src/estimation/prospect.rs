//! Cumulative-prospect-theory value, weighting and certainty equivalents.

use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::games::Lottery;

/// Smallest weighting exponent for which the weighting function is strictly increasing.
pub const MIN_PHI: f64 = 0.3;

/// Prospect-theory preference parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptParams {
    /// Curvature of the value function over gains.
    pub alpha_gain: f64,
    /// Curvature of the value function over losses.
    pub beta_loss: f64,
    /// Loss aversion.
    pub lambda: f64,
    /// Weighting exponent for gains.
    pub phi_plus: f64,
    /// Weighting exponent for losses.
    pub phi_minus: f64,
}

impl CptParams {
    pub const ALPHA_BOUNDS: (f64, f64) = (0.2, 2.0);
    pub const BETA_BOUNDS: (f64, f64) = (0.2, 2.0);
    pub const LAMBDA_BOUNDS: (f64, f64) = (0.2, 10.0);
    pub const PHI_BOUNDS: (f64, f64) = (MIN_PHI, 2.0);

    /// Risk-neutral, undistorted agent.
    pub fn linear() -> Self {
        Self { alpha_gain: 1.0, beta_loss: 1.0, lambda: 1.0, phi_plus: 1.0, phi_minus: 1.0 }
    }

    pub fn is_valid(&self) -> bool {
        [self.alpha_gain, self.beta_loss, self.lambda, self.phi_plus, self.phi_minus]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Reference-dependent power value function.
pub fn cpt_value(x: f64, params: &CptParams) -> f64 {
    if x >= 0.0 {
        x.powf(params.alpha_gain)
    } else {
        -params.lambda * (-x).powf(params.beta_loss)
    }
}

/// Inverse of [`cpt_value`].
pub fn cpt_value_inverse(u: f64, params: &CptParams) -> f64 {
    if u >= 0.0 {
        u.powf(1.0 / params.alpha_gain)
    } else {
        -(-u / params.lambda).powf(1.0 / params.beta_loss)
    }
}

/// Inverse-S probability weighting `p^φ / (p^φ + (1-p)^φ)^(1/φ)` without the lower-bound check.
pub(crate) fn weight_unchecked(p: f64, phi: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let a = p.powf(phi);
    a / (a + (1.0 - p).powf(phi)).powf(1.0 / phi)
}

/// Probability weighting; exact at both endpoints.
pub fn weight(p: f64, phi: f64) -> Result<f64, EstimationError> {
    if phi.is_nan() || phi < MIN_PHI {
        return Err(EstimationError::PhiTooSmall(phi));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(EstimationError::InvalidProbability(p));
    }
    Ok(weight_unchecked(p, phi))
}

/// Prospect utility of a two-outcome lottery. Nonnegative outcomes use the gain
/// weighting, negative outcomes the loss weighting; zero outcomes contribute nothing.
pub fn cpt_utility(lottery: &Lottery, params: &CptParams) -> f64 {
    lottery
        .outcomes()
        .iter()
        .map(|&(x, p)| {
            let phi = if x >= 0.0 { params.phi_plus } else { params.phi_minus };
            weight_unchecked(p, phi) * cpt_value(x, params)
        })
        .sum()
}

/// Sure amount with the same value as the lottery.
pub fn predicted_ce(lottery: &Lottery, params: &CptParams) -> f64 {
    cpt_value_inverse(cpt_utility(lottery, params), params)
}
