//! Ultimatum and gambling game definitions, experimental grids and payoff bookkeeping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnitudes of the gambling-game lotteries.
pub const DEFAULT_MAGNITUDES: [f64; 7] = [20.0, 35.0, 50.0, 70.0, 100.0, 140.0, 200.0];
/// Probabilities of the nonzero branch in the gain and loss domains.
pub const DEFAULT_GAIN_PROBS: [f64; 4] = [0.1, 0.25, 0.5, 0.9];
pub const DEFAULT_LOSS_PROBS: [f64; 4] = [0.1, 0.25, 0.5, 0.9];
/// Probability of the positive branch in the mixed domain.
pub const DEFAULT_MIXED_PROBS: [f64; 1] = [0.5];
/// Interior sure-amount levels swept per lottery cell.
pub const DEFAULT_SURE_LEVELS: usize = 9;
pub const DEFAULT_POOL_MIN: u32 = 2;
pub const DEFAULT_POOL_MAX: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid pool range {min}..{max}: pools must satisfy 2 <= min <= max")]
    InvalidRange { min: u32, max: u32 },
    #[error("probability {0} is outside the open interval (0, 1)")]
    InvalidProbability(f64),
    #[error("grid is empty: {0}")]
    EmptyGrid(&'static str),
    #[error("offer {offer} is outside 0..={pool}")]
    OfferOutOfRange { offer: u32, pool: u32 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Game {
    Ug,
    Gg,
}

impl std::fmt::Display for Game {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Game::Ug => "ug",
            Game::Gg => "gg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Proposer,
    Responder,
}

/// Persona the agent is asked to adopt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Neutral,
    Male,
    Female,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Neutral, Condition::Male, Condition::Female];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Neutral => "neutral",
            Condition::Male => "male",
            Condition::Female => "female",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "neutral" => Ok(Condition::Neutral),
            "male" => Ok(Condition::Male),
            "female" => Ok(Condition::Female),
            other => Err(GameError::InvalidConfig(format!("unknown condition `{other}`"))),
        }
    }
}

/// One ultimatum-game cell: a pool, the role played and, for responders, the offer shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UgConfig {
    pub pool: u32,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probed_offer: Option<u32>,
}

impl UgConfig {
    pub fn proposer(pool: u32) -> Self {
        Self { pool, role: Role::Proposer, probed_offer: None }
    }

    pub fn responder(pool: u32, offer: u32) -> Self {
        Self { pool, role: Role::Responder, probed_offer: Some(offer) }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.pool < 2 {
            return Err(GameError::InvalidConfig(format!("pool {} < 2", self.pool)));
        }
        match (self.role, self.probed_offer) {
            (Role::Proposer, None) => Ok(()),
            (Role::Proposer, Some(_)) => Err(GameError::InvalidConfig("proposer config carries a probed offer".into())),
            (Role::Responder, None) => Err(GameError::InvalidConfig("responder config lacks a probed offer".into())),
            (Role::Responder, Some(o)) if o > self.pool => {
                Err(GameError::OfferOutOfRange { offer: o, pool: self.pool })
            }
            (Role::Responder, Some(_)) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Gain,
    Loss,
    Mixed,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Gain => "gain",
            Domain::Loss => "loss",
            Domain::Mixed => "mixed",
        }
    }
}

/// The risky alternative of a gambling-game trial, without the sure amount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lottery {
    pub magnitude: f64,
    pub probability: f64,
    pub domain: Domain,
}

impl Lottery {
    pub fn new(magnitude: f64, probability: f64, domain: Domain) -> Self {
        Self { magnitude, probability, domain }
    }

    /// Outcome/probability pairs; zero outcomes are listed explicitly.
    pub fn outcomes(&self) -> [(f64, f64); 2] {
        let (m, p) = (self.magnitude, self.probability);
        match self.domain {
            Domain::Gain => [(m, p), (0.0, 1.0 - p)],
            Domain::Loss => [(-m, p), (0.0, 1.0 - p)],
            Domain::Mixed => [(m, p), (-m, 1.0 - p)],
        }
    }

    pub fn expected_value(&self) -> f64 {
        self.outcomes().iter().map(|(x, p)| x * p).sum()
    }

    /// Closed range the sure amount is allowed to take for this domain.
    pub fn sure_bounds(&self) -> (f64, f64) {
        let m = self.magnitude;
        match self.domain {
            Domain::Gain => (0.0, m),
            Domain::Loss => (-m, 0.0),
            Domain::Mixed => (-m, m),
        }
    }

    /// Range the default sweep covers.
    pub fn sweep_range(&self) -> (f64, f64) {
        let m = self.magnitude;
        match self.domain {
            Domain::Gain => (0.0, m),
            Domain::Loss => (-m, 0.0),
            Domain::Mixed => (-m / 2.0, m / 2.0),
        }
    }

    /// Stable key identifying the cell, used to group trials.
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.domain.as_str(), self.magnitude, self.probability)
    }
}

/// One gambling-game cell: a lottery against a certain amount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgConfig {
    pub magnitude: f64,
    pub probability: f64,
    pub domain: Domain,
    pub sure_amount: f64,
}

impl GgConfig {
    pub fn lottery(&self) -> Lottery {
        Lottery::new(self.magnitude, self.probability, self.domain)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(GameError::InvalidConfig(format!("magnitude {} must be positive", self.magnitude)));
        }
        if !(self.probability > 0.0 && self.probability < 1.0) {
            return Err(GameError::InvalidProbability(self.probability));
        }
        let (lo, hi) = self.lottery().sure_bounds();
        if !(self.sure_amount >= lo && self.sure_amount <= hi) {
            return Err(GameError::InvalidConfig(format!(
                "sure amount {} outside [{lo}, {hi}] for {} domain",
                self.sure_amount,
                self.domain.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum GameConfig {
    Ug(UgConfig),
    Gg(GgConfig),
}

impl GameConfig {
    pub fn game(&self) -> Game {
        match self {
            GameConfig::Ug(_) => Game::Ug,
            GameConfig::Gg(_) => Game::Gg,
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        match self {
            GameConfig::Ug(c) => c.validate(),
            GameConfig::Gg(c) => c.validate(),
        }
    }

    /// Canonical JSON, used as a lookup key.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("game configs always serialize")
    }
}

impl From<UgConfig> for GameConfig {
    fn from(c: UgConfig) -> Self {
        GameConfig::Ug(c)
    }
}

impl From<GgConfig> for GameConfig {
    fn from(c: GgConfig) -> Self {
        GameConfig::Gg(c)
    }
}

/// A complete, seeded experiment for one game and one persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub game: Game,
    pub configs: Vec<GameConfig>,
    pub condition: Condition,
    pub repetitions: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.repetitions < 1 {
            return Err(GameError::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.configs.is_empty() {
            return Err(GameError::EmptyGrid("plan has no configs"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GameError::InvalidConfig(format!("temperature {} < 0", self.temperature)));
        }
        for c in &self.configs {
            if c.game() != self.game {
                return Err(GameError::InvalidConfig(format!("{} config in a {} plan", c.game(), self.game)));
            }
            c.validate()?;
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.configs.len() * self.repetitions as usize
    }
}

/// Ultimatum-game grid over pools `pool_min..=pool_max`.
///
/// Responder grids enumerate every integer offer `0..=pool` for each pool.
pub fn ug_grid(pool_min: u32, pool_max: u32, role: Role) -> Result<Vec<UgConfig>, GameError> {
    if pool_min < 2 || pool_min > pool_max {
        return Err(GameError::InvalidRange { min: pool_min, max: pool_max });
    }
    let grid = match role {
        Role::Proposer => (pool_min..=pool_max).map(UgConfig::proposer).collect(),
        Role::Responder => {
            (pool_min..=pool_max).flat_map(|pool| (0..=pool).map(move |o| UgConfig::responder(pool, o))).collect()
        }
    };
    Ok(grid)
}

/// Probability sets and sweep density for a gambling-game grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgGridSpec {
    pub magnitudes: Vec<f64>,
    pub gain_probs: Vec<f64>,
    pub loss_probs: Vec<f64>,
    pub mixed_probs: Vec<f64>,
    pub sure_levels: usize,
}

impl Default for GgGridSpec {
    fn default() -> Self {
        Self {
            magnitudes: DEFAULT_MAGNITUDES.to_vec(),
            gain_probs: DEFAULT_GAIN_PROBS.to_vec(),
            loss_probs: DEFAULT_LOSS_PROBS.to_vec(),
            mixed_probs: DEFAULT_MIXED_PROBS.to_vec(),
            sure_levels: DEFAULT_SURE_LEVELS,
        }
    }
}

impl GgGridSpec {
    /// 4 gain, 3 loss and 1 mixed probability per magnitude: 7 * 8 = 56 lottery cells.
    pub fn total56() -> Self {
        Self { loss_probs: vec![0.1, 0.5, 0.9], ..Self::default() }
    }

    /// Lottery cells in grid order: magnitude-major, then gain, loss, mixed.
    pub fn lotteries(&self) -> Result<Vec<Lottery>, GameError> {
        if self.magnitudes.is_empty() {
            return Err(GameError::EmptyGrid("no magnitudes"));
        }
        if let Some(&m) = self.magnitudes.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(GameError::InvalidConfig(format!("magnitude {m} must be positive")));
        }
        let all_probs = self.gain_probs.iter().chain(&self.loss_probs).chain(&self.mixed_probs);
        for &p in all_probs {
            if !(p > 0.0 && p < 1.0) {
                return Err(GameError::InvalidProbability(p));
            }
        }
        if self.gain_probs.is_empty() && self.loss_probs.is_empty() && self.mixed_probs.is_empty() {
            return Err(GameError::EmptyGrid("no probabilities in any domain"));
        }
        let mut out = Vec::new();
        for &m in &self.magnitudes {
            let domains = [
                (Domain::Gain, &self.gain_probs),
                (Domain::Loss, &self.loss_probs),
                (Domain::Mixed, &self.mixed_probs),
            ];
            for (domain, probs) in domains {
                out.extend(probs.iter().map(|&p| Lottery::new(m, p, domain)));
            }
        }
        Ok(out)
    }
}

/// `levels` evenly spaced interior points of `[lo, hi]` (endpoints excluded).
pub fn sweep(lo: f64, hi: f64, levels: usize) -> Vec<f64> {
    let step = (hi - lo) / (levels as f64 + 1.0);
    (1..=levels).map(|k| lo + step * k as f64).collect()
}

/// Gambling-game grid: every lottery cell crossed with its sure-amount sweep.
pub fn gg_grid(spec: &GgGridSpec) -> Result<Vec<GgConfig>, GameError> {
    if spec.sure_levels < 2 {
        return Err(GameError::InvalidConfig(format!("sure_levels {} < 2", spec.sure_levels)));
    }
    let mut out = Vec::new();
    for lot in spec.lotteries()? {
        let (lo, hi) = lot.sweep_range();
        out.extend(sweep(lo, hi, spec.sure_levels).into_iter().map(|s| GgConfig {
            magnitude: lot.magnitude,
            probability: lot.probability,
            domain: lot.domain,
            sure_amount: s,
        }));
    }
    Ok(out)
}

/// Split of the pool when `offer` is accepted: `(proposer, responder)`.
pub fn payoffs(config: &UgConfig, offer: u32) -> Result<(u32, u32), GameError> {
    if offer > config.pool {
        return Err(GameError::OfferOutOfRange { offer, pool: config.pool });
    }
    Ok((config.pool - offer, offer))
}
