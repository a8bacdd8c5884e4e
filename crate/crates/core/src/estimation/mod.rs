//! Preference models and the estimators that recover their parameters from choices.

pub mod curve;
pub mod fehr_schmidt;
pub mod fit;
pub mod prospect;

use thiserror::Error;

use crate::optim::OptimError;

pub use curve::{interpolated_threshold, observed_ce, switching_point, AcceptanceCurve, CeMethod, ObservedCe};
pub use fehr_schmidt::{
    consistency_stats, fs_alpha_from_thresholds, fs_beta_from_offers, fs_utility, indifference_offer, AlphaEstimate,
    BetaEstimate, ConsistencyReport, FsParams, ThresholdKind,
};
pub use fit::{fit_gain, fit_loss_mixed, r_squared, CeObservation, FitResult, FittedParams};
pub use prospect::{cpt_utility, cpt_value, predicted_ce, weight, CptParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("weighting exponent {0} is below the monotone range (>= 0.3)")]
    PhiTooSmall(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("acceptance curve has no observations")]
    EmptyCurve,
    #[error("choice frequencies never cross one half")]
    NoCrossing,
    #[error("no pool has a threshold below half the pool")]
    NoIdentifiablePool,
    #[error("no parseable offers")]
    NoOffers,
    #[error("offer {offer} exceeds pool {pool}")]
    InvalidOffer { pool: u32, offer: u32 },
    #[error("pool {pool} has {got} offers, need at least 2")]
    TooFewOffers { pool: u32, got: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("mixed-domain observations require a gain-domain fit")]
    MissingGainFit,
    #[error("expected {expected} observations, got a {got} cell")]
    WrongDomain { expected: &'static str, got: &'static str },
    #[error("observed values are all identical")]
    DegenerateObserved,
    #[error("length mismatch: {predicted} predictions for {observed} observations")]
    LengthMismatch { predicted: usize, observed: usize },
    #[error(transparent)]
    Optim(#[from] OptimError),
}
