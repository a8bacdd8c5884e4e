//! Least-squares fits of prospect-theory parameters to certainty equivalents.

use serde::{Deserialize, Serialize};

use super::prospect::{predicted_ce, CptParams};
use super::EstimationError;
use crate::games::{Domain, Lottery};
use crate::optim::{minimize, Bounds, MinimizeOptions, MinimizeResult};

/// One lottery cell and the certainty equivalent observed for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeObservation {
    pub lottery: Lottery,
    pub ce: f64,
}

impl CeObservation {
    pub fn new(lottery: Lottery, ce: f64) -> Self {
        Self { lottery, ce }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Gain { alpha_gain: f64, phi_plus: f64 },
    LossMixed { beta_loss: f64, phi_minus: f64, lambda: f64 },
}

impl FittedParams {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        match *self {
            FittedParams::Gain { alpha_gain, phi_plus } => vec![("alpha", alpha_gain), ("phi_plus", phi_plus)],
            FittedParams::LossMixed { beta_loss, phi_minus, lambda } => {
                vec![("beta", beta_loss), ("phi_minus", phi_minus), ("lambda", lambda)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FittedParams,
    /// `None` when all observed values coincide.
    pub r_squared: Option<f64>,
    /// Observed minus predicted, in observation order.
    pub residuals: Vec<f64>,
    pub n_obs: usize,
    /// Parameters the objective does not depend on.
    pub unidentified: Vec<String>,
    pub diagnostics: MinimizeResult,
}

impl FitResult {
    pub fn gain_params(&self) -> Option<(f64, f64)> {
        match self.params {
            FittedParams::Gain { alpha_gain, phi_plus } => Some((alpha_gain, phi_plus)),
            _ => None,
        }
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(predicted: &[f64], observed: &[f64]) -> Result<f64, EstimationError> {
    if predicted.len() != observed.len() || observed.is_empty() {
        return Err(EstimationError::LengthMismatch { predicted: predicted.len(), observed: observed.len() });
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(EstimationError::DegenerateObserved);
    }
    let ss_res: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn finish(
    params: FittedParams,
    predicted: Vec<f64>,
    observed: &[f64],
    unidentified: Vec<String>,
    diagnostics: MinimizeResult,
) -> FitResult {
    let residuals = observed.iter().zip(&predicted).map(|(o, p)| o - p).collect();
    FitResult {
        params,
        r_squared: r_squared(&predicted, observed).ok(),
        residuals,
        n_obs: observed.len(),
        unidentified,
        diagnostics,
    }
}

/// Gain-domain fit of curvature and weighting exponent.
pub fn fit_gain(observations: &[CeObservation], opts: &MinimizeOptions) -> Result<FitResult, EstimationError> {
    if let Some(o) = observations.iter().find(|o| o.lottery.domain != Domain::Gain) {
        return Err(EstimationError::WrongDomain { expected: "gain", got: o.lottery.domain.as_str() });
    }
    if observations.len() < 3 {
        return Err(EstimationError::TooFewObservations { needed: 3, got: observations.len() });
    }
    let make = |x: &[f64]| CptParams { alpha_gain: x[0], phi_plus: x[1], ..CptParams::linear() };
    let sse = |x: &[f64]| {
        let th = make(x);
        observations.iter().map(|o| (predicted_ce(&o.lottery, &th) - o.ce).powi(2)).sum::<f64>()
    };
    let bounds = Bounds::from_pairs(&[CptParams::ALPHA_BOUNDS, CptParams::PHI_BOUNDS])?;
    let fit = minimize(sse, &bounds, opts)?;
    let th = make(&fit.x);
    let predicted = observations.iter().map(|o| predicted_ce(&o.lottery, &th)).collect();
    let observed: Vec<f64> = observations.iter().map(|o| o.ce).collect();
    let params = FittedParams::Gain { alpha_gain: th.alpha_gain, phi_plus: th.phi_plus };
    Ok(finish(params, predicted, &observed, Vec::new(), fit))
}

/// Joint fit of loss curvature, loss weighting and loss aversion on loss and mixed cells.
///
/// Mixed cells are predicted with the gain-side parameters of `gain_fit`. Without mixed
/// cells the loss-aversion coefficient cancels out of every prediction; the fit still
/// runs and reports `lambda` as unidentified.
pub fn fit_loss_mixed(
    observations: &[CeObservation],
    gain_fit: Option<&FitResult>,
    opts: &MinimizeOptions,
) -> Result<FitResult, EstimationError> {
    if let Some(o) = observations.iter().find(|o| o.lottery.domain == Domain::Gain) {
        return Err(EstimationError::WrongDomain { expected: "loss or mixed", got: o.lottery.domain.as_str() });
    }
    let n_loss = observations.iter().filter(|o| o.lottery.domain == Domain::Loss).count();
    let n_mixed = observations.len() - n_loss;
    if n_loss < 3 {
        return Err(EstimationError::TooFewObservations { needed: 3, got: n_loss });
    }
    let (alpha_gain, phi_plus) = match gain_fit.and_then(FitResult::gain_params) {
        Some(g) => g,
        None if n_mixed > 0 => return Err(EstimationError::MissingGainFit),
        None => (1.0, 1.0),
    };
    let make = |x: &[f64]| CptParams { alpha_gain, phi_plus, beta_loss: x[0], phi_minus: x[1], lambda: x[2] };
    let sse = |x: &[f64]| {
        let th = make(x);
        observations.iter().map(|o| (predicted_ce(&o.lottery, &th) - o.ce).powi(2)).sum::<f64>()
    };
    let bounds = Bounds::from_pairs(&[CptParams::BETA_BOUNDS, CptParams::PHI_BOUNDS, CptParams::LAMBDA_BOUNDS])?;
    let fit = minimize(sse, &bounds, opts)?;

    let mut unidentified = Vec::new();
    let probe = |lambda: f64| sse(&[fit.x[0], fit.x[1], lambda]);
    let (lo, hi) = CptParams::LAMBDA_BOUNDS;
    let scale = fit.f.abs().max(1.0);
    if (probe(lo) - fit.f).abs() <= 1e-9 * scale && (probe(hi) - fit.f).abs() <= 1e-9 * scale {
        unidentified.push("lambda".to_string());
    }

    let th = make(&fit.x);
    let predicted = observations.iter().map(|o| predicted_ce(&o.lottery, &th)).collect();
    let observed: Vec<f64> = observations.iter().map(|o| o.ce).collect();
    let params = FittedParams::LossMixed { beta_loss: th.beta_loss, phi_minus: th.phi_minus, lambda: th.lambda };
    Ok(finish(params, predicted, &observed, unidentified, fit))
}
