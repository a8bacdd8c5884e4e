//! Turns stored trial records into parameter estimates and report artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{
    consistency_stats, fit_gain, fit_loss_mixed, fs_alpha_from_thresholds, fs_beta_from_offers, interpolated_threshold,
    observed_ce, switching_point, AcceptanceCurve, AlphaEstimate, BetaEstimate, CeMethod, CeObservation,
    ConsistencyReport, EstimationError, FitResult, ThresholdKind,
};
use crate::games::{Condition, Domain, Game, GameConfig, Lottery, Role};
use crate::optim::MinimizeOptions;
use crate::parser::{exclusion_report, ExclusionReport, ParsedDecision, ParserError};
use crate::runner::TrialRecord;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no records to analyse")]
    NoRecords,
    #[error(transparent)]
    Parser(#[from] ParserError),
    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub minimize: MinimizeOptions,
    /// Threshold flavour used for the pooled α fit.
    pub threshold_kind: ThresholdKind,
    /// α handed to the β estimator when no responder data yields one.
    pub fallback_alpha: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { minimize: MinimizeOptions::default(), threshold_kind: ThresholdKind::Interpolated, fallback_alpha: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolThreshold {
    pub pool: u32,
    pub switching_point: Option<f64>,
    pub interpolated: Option<f64>,
    pub curve: AcceptanceCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UgAnalysis {
    pub thresholds: Vec<PoolThreshold>,
    pub alpha: Option<AlphaEstimate>,
    /// Estimate from the other threshold flavour, reported alongside.
    pub alpha_alt: Option<AlphaEstimate>,
    pub beta: Option<BetaEstimate>,
    pub consistency: Option<ConsistencyReport>,
    pub n_responder: usize,
    pub n_proposer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCe {
    pub lottery: Lottery,
    pub ce: Option<f64>,
    pub method: Option<CeMethod>,
    /// Why the cell has no certainty equivalent.
    pub dropped: Option<String>,
    pub curve: AcceptanceCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgAnalysis {
    pub cells: Vec<CellCe>,
    pub gain: Option<FitResult>,
    pub loss_mixed: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum GameAnalysis {
    Ug(UgAnalysis),
    Gg(GgAnalysis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAnalysis {
    pub game: Game,
    pub condition: Condition,
    pub n_records: usize,
    pub exclusion: ExclusionReport,
    pub analysis: GameAnalysis,
    /// Estimators that could not run, with the reason.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub groups: Vec<ConditionAnalysis>,
    pub exclusion: ExclusionReport,
}

/// One line of `estimates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub game: Game,
    pub condition: Condition,
    pub parameter: String,
    pub value: f64,
    pub r_squared: Option<f64>,
    pub n_obs: usize,
    pub n_excluded: usize,
}

fn note<T>(notes: &mut Vec<String>, what: &str, r: Result<T, EstimationError>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("{what}: {e}");
            notes.push(format!("{what}: {e}"));
            None
        }
    }
}

/// Ultimatum-game estimates from parseable records of one condition.
pub fn analyze_ug(records: &[&TrialRecord], opts: &AnalysisOptions, notes: &mut Vec<String>) -> UgAnalysis {
    let mut curves: BTreeMap<u32, AcceptanceCurve> = BTreeMap::new();
    let mut offers = Vec::new();
    for r in records {
        let GameConfig::Ug(c) = r.config else { continue };
        match (c.role, r.parsed, c.probed_offer) {
            (Role::Responder, ParsedDecision::Accept, Some(o)) => {
                curves.entry(c.pool).or_default().record(o as f64, true)
            }
            (Role::Responder, ParsedDecision::Reject, Some(o)) => {
                curves.entry(c.pool).or_default().record(o as f64, false)
            }
            (Role::Proposer, ParsedDecision::Offer(x), _) => offers.push((c.pool, x)),
            _ => {}
        }
    }
    let n_responder = curves.values().flat_map(|c| c.points()).map(|p| p.n_trials as usize).sum();

    let mut thresholds = Vec::new();
    let mut integer = BTreeMap::new();
    let mut interpolated = BTreeMap::new();
    for (pool, curve) in curves {
        let sp = switching_point(&curve).ok().flatten();
        let it = interpolated_threshold(&curve).ok().flatten();
        if let Some(s) = sp {
            integer.insert(pool, s);
        }
        if let Some(s) = it {
            interpolated.insert(pool, s);
        }
        if it.is_none() {
            notes.push(format!("pool {pool}: no offer accepted by a majority"));
        }
        thresholds.push(PoolThreshold { pool, switching_point: sp, interpolated: it, curve });
    }

    let (mut alpha, mut alpha_alt) = (None, None);
    if !thresholds.is_empty() {
        let fit = |map: &BTreeMap<u32, f64>, kind| {
            if map.is_empty() {
                Err(EstimationError::NoIdentifiablePool)
            } else {
                fs_alpha_from_thresholds(map, kind, &opts.minimize)
            }
        };
        let main = fit(&interpolated, ThresholdKind::Interpolated);
        let alt = fit(&integer, ThresholdKind::Integer);
        let (main, alt) = match opts.threshold_kind {
            ThresholdKind::Interpolated => (main, alt),
            ThresholdKind::Integer => (alt, main),
        };
        alpha = note(notes, "alpha", main);
        alpha_alt = alt.ok();
    }

    let (mut beta, mut consistency) = (None, None);
    if !offers.is_empty() {
        let a = alpha.as_ref().map_or(opts.fallback_alpha, |e| e.alpha);
        beta = note(notes, "beta", fs_beta_from_offers(&offers, a, &opts.minimize));
        consistency = note(notes, "consistency", consistency_stats(&offers));
    }
    UgAnalysis { thresholds, alpha, alpha_alt, beta, consistency, n_responder, n_proposer: offers.len() }
}

/// Gambling-game estimates from parseable records of one condition.
pub fn analyze_gg(records: &[&TrialRecord], opts: &AnalysisOptions, notes: &mut Vec<String>) -> GgAnalysis {
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<String, (Lottery, AcceptanceCurve)> = BTreeMap::new();
    for r in records {
        let GameConfig::Gg(c) = r.config else { continue };
        let positive = match r.parsed {
            ParsedDecision::ChoiceGamble => true,
            ParsedDecision::ChoiceSure => false,
            _ => continue,
        };
        let lottery = c.lottery();
        let key = lottery.key();
        let entry = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (lottery, AcceptanceCurve::new())
        });
        entry.1.record(c.sure_amount, positive);
    }

    let mut out = Vec::with_capacity(order.len());
    let (mut gain_obs, mut loss_obs) = (Vec::new(), Vec::new());
    for key in order {
        let (lottery, curve) = cells.remove(&key).expect("key recorded");
        let cell = match observed_ce(&curve, lottery.domain) {
            Ok(o) => {
                let obs = CeObservation::new(lottery, o.ce);
                if lottery.domain == Domain::Gain {
                    gain_obs.push(obs);
                } else {
                    loss_obs.push(obs);
                }
                CellCe { lottery, ce: Some(o.ce), method: Some(o.method), dropped: None, curve }
            }
            Err(e) => CellCe { lottery, ce: None, method: None, dropped: Some(e.to_string()), curve },
        };
        out.push(cell);
    }
    let dropped = out.iter().filter(|c| c.dropped.is_some()).count();
    if dropped > 0 {
        notes.push(format!("{dropped} lottery cells without a certainty equivalent were dropped"));
    }

    let gain = if gain_obs.is_empty() { None } else { note(notes, "gain fit", fit_gain(&gain_obs, &opts.minimize)) };
    let loss_mixed = if loss_obs.is_empty() {
        None
    } else {
        note(notes, "loss/mixed fit", fit_loss_mixed(&loss_obs, gain.as_ref(), &opts.minimize))
    };
    GgAnalysis { cells: out, gain, loss_mixed }
}

/// Analyse records, one group per (game, condition).
pub fn analyze(records: &[TrialRecord], opts: &AnalysisOptions) -> Result<Analysis, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::NoRecords);
    }
    let mut groups: BTreeMap<(Game, Condition), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.game, r.condition)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((game, condition), recs) in groups {
        let exclusion = exclusion_report(recs.iter().map(|r| &r.parsed))?;
        let parseable: Vec<&TrialRecord> = recs.iter().copied().filter(|r| r.parsed.is_parseable()).collect();
        let mut notes = Vec::new();
        let analysis = match game {
            Game::Ug => GameAnalysis::Ug(analyze_ug(&parseable, opts, &mut notes)),
            Game::Gg => GameAnalysis::Gg(analyze_gg(&parseable, opts, &mut notes)),
        };
        out.push(ConditionAnalysis { game, condition, n_records: recs.len(), exclusion, analysis, notes });
    }
    let exclusion = exclusion_report(records.iter().map(|r| &r.parsed))?;
    Ok(Analysis { groups: out, exclusion })
}

impl ConditionAnalysis {
    pub fn estimate_rows(&self) -> Vec<EstimateRow> {
        let row = |parameter: &str, value: f64, r_squared: Option<f64>, n_obs: usize| EstimateRow {
            game: self.game,
            condition: self.condition,
            parameter: parameter.into(),
            value,
            r_squared,
            n_obs,
            n_excluded: self.exclusion.excluded,
        };
        let mut rows = Vec::new();
        match &self.analysis {
            GameAnalysis::Ug(u) => {
                if let Some(a) = &u.alpha {
                    rows.push(row("alpha", a.alpha, None, u.n_responder));
                }
                if let Some(a) = &u.alpha_alt {
                    let name = match a.threshold_kind {
                        ThresholdKind::Integer => "alpha_integer",
                        ThresholdKind::Interpolated => "alpha_interpolated",
                    };
                    rows.push(row(name, a.alpha, None, u.n_responder));
                }
                if let Some(b) = &u.beta {
                    rows.push(row("beta", b.beta, None, u.n_proposer));
                }
                if let Some(c) = &u.consistency {
                    rows.push(row("mean_offer_proportion", c.overall_mean_proportion, None, u.n_proposer));
                    rows.push(row("expected_sd", c.expected_sd, None, u.n_proposer));
                    if let Some(sd) = c.inter_pool_sd {
                        rows.push(row("inter_pool_sd", sd, None, u.n_proposer));
                    }
                }
            }
            GameAnalysis::Gg(g) => {
                for fit in [&g.gain, &g.loss_mixed].into_iter().flatten() {
                    for (name, value) in fit.params.named() {
                        if !fit.unidentified.iter().any(|u| u == name) {
                            rows.push(row(name, value, fit.r_squared, fit.n_obs));
                        }
                    }
                }
            }
        }
        rows
    }
}

impl Analysis {
    pub fn estimate_rows(&self) -> Vec<EstimateRow> {
        self.groups.iter().flat_map(ConditionAnalysis::estimate_rows).collect()
    }

    pub fn group(&self, game: Game, condition: Condition) -> Option<&ConditionAnalysis> {
        self.groups.iter().find(|g| g.game == game && g.condition == condition)
    }

    /// Ultimatum conditions ordered from the most to the least consistent proposer.
    pub fn dispersion_ordering(&self) -> Vec<(Condition, f64)> {
        let mut v: Vec<(Condition, f64)> = self
            .groups
            .iter()
            .filter_map(|g| match &g.analysis {
                GameAnalysis::Ug(u) => u.consistency.as_ref().map(|c| (g.condition, c.expected_sd)),
                _ => None,
            })
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text with header `game,condition,parameter,value,r_squared,n_obs,n_excluded`.
pub fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["game", "condition", "parameter", "value", "r_squared", "n_obs", "n_excluded"])
        .expect("in-memory csv");
    for r in rows {
        w.write_record([
            r.game.to_string(),
            r.condition.to_string(),
            r.parameter.clone(),
            r.value.to_string(),
            fmt_opt(r.r_squared),
            r.n_obs.to_string(),
            r.n_excluded.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Parse `estimates.csv` text back into rows.
pub fn read_estimates_csv(text: &str) -> Result<Vec<EstimateRow>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let get = |i: usize| rec.get(i).ok_or_else(|| format!("missing column {i}"));
        let num = |i: usize| -> Result<f64, String> { get(i)?.parse().map_err(|e| format!("column {i}: {e}")) };
        rows.push(EstimateRow {
            game: serde_json::from_value(serde_json::Value::String(get(0)?.into())).map_err(|e| e.to_string())?,
            condition: get(1)?.parse().map_err(|e| format!("{e:?}"))?,
            parameter: get(2)?.into(),
            value: num(3)?,
            r_squared: if get(4)?.is_empty() { None } else { Some(num(4)?) },
            n_obs: get(5)?.parse().map_err(|e| format!("n_obs: {e}"))?,
            n_excluded: get(6)?.parse().map_err(|e| format!("n_excluded: {e}"))?,
        });
    }
    Ok(rows)
}

/// Write `estimates.csv`, `fit.json` and `exclusion.json` into `dir`.
pub fn write_outputs(analysis: &Analysis, dir: &Path) -> Result<(), PipelineError> {
    let out = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body)
            .map_err(|e| PipelineError::Output { path: path.display().to_string(), message: e.to_string() })
    };
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::Output { path: dir.display().to_string(), message: e.to_string() })?;
    out("estimates.csv", estimates_csv(&analysis.estimate_rows()))?;
    out("fit.json", serde_json::to_string_pretty(analysis).expect("analysis serializes") + "\n")?;
    out("exclusion.json", serde_json::to_string_pretty(&analysis.exclusion).expect("report serializes") + "\n")?;
    Ok(())
}

/// Short human-readable summary.
pub fn render_report(analysis: &Analysis) -> String {
    let mut s = String::new();
    let ex = &analysis.exclusion;
    s.push_str(&format!("records: {}  excluded: {} ({:.2}%)\n", ex.total, ex.excluded, 100.0 * ex.rate));
    for g in &analysis.groups {
        s.push_str(&format!(
            "\n[{} / {}] {} records, {} excluded\n",
            g.game, g.condition, g.n_records, g.exclusion.excluded
        ));
        if let GameAnalysis::Ug(u) = &g.analysis {
            for t in &u.thresholds {
                s.push_str(&format!(
                    "  pool {:>3}: s* = {}  crossing = {}\n",
                    t.pool,
                    t.switching_point.map_or("-".into(), |v| format!("{v}")),
                    t.interpolated.map_or("-".into(), |v| format!("{v:.3}"))
                ));
            }
            if let Some(c) = &u.consistency {
                s.push_str(&format!(
                    "  mean offer proportion {:.4}, E[sd] {:.4}, inter-pool sd {}\n",
                    c.overall_mean_proportion,
                    c.expected_sd,
                    c.inter_pool_sd.map_or("-".into(), |v| format!("{v:.4}"))
                ));
            }
        }
        for r in g.estimate_rows() {
            let r2 = r.r_squared.map_or(String::new(), |v| format!("  (R^2 {v:.4})"));
            s.push_str(&format!("  {:<22} {:>10.4}{r2}\n", r.parameter, r.value));
        }
        for n in &g.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
    }
    let order = analysis.dispersion_ordering();
    if order.len() >= 2 {
        let names: Vec<String> = order.iter().map(|(c, sd)| format!("{c} ({sd:.4})")).collect();
        s.push_str(&format!("\nproposer dispersion, lowest first: {}\n", names.join(" < ")));
    }
    s
}
