//! Turns free-text agent answers into decisions.
//!
//! Parsing is total: every input maps to exactly one [`ParsedDecision`]. The token
//! rules are documented in `assets/parser_grammar.md`; bump [`PARSER_VERSION`] when
//! they change.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::{GameConfig, Role, UgConfig};
use crate::runner::TrialRecord;

pub const PARSER_VERSION: u32 = 1;

/// The grammar document shipped with this parser version.
pub const GRAMMAR: &str = include_str!("../assets/parser_grammar.md");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparseableReason {
    NoNumber,
    OutOfRange,
    Ambiguous,
    Refusal,
}

impl UnparseableReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnparseableReason::NoNumber => "no_number",
            UnparseableReason::OutOfRange => "out_of_range",
            UnparseableReason::Ambiguous => "ambiguous",
            UnparseableReason::Refusal => "refusal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParsedDecision {
    Offer(u32),
    Accept,
    Reject,
    ChoiceGamble,
    ChoiceSure,
    Unparseable(UnparseableReason),
}

impl ParsedDecision {
    pub fn is_parseable(&self) -> bool {
        !matches!(self, ParsedDecision::Unparseable(_))
    }

    /// Canonical answer text for a decision; parses back to the same decision.
    pub fn canonical_text(&self) -> String {
        match self {
            ParsedDecision::Offer(x) => x.to_string(),
            ParsedDecision::Accept => "accept".into(),
            ParsedDecision::Reject => "reject".into(),
            ParsedDecision::ChoiceGamble => "A".into(),
            ParsedDecision::ChoiceSure => "B".into(),
            ParsedDecision::Unparseable(_) => String::new(),
        }
    }
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").unwrap());
static OUT_OF_BEFORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(?:\bout\s+of|/)\s*$").unwrap());
static NEGATED_ACCEPT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:\bnot|n't|\bnever|\bcannot)\s+(?:\w+\s+)?accept\w*").unwrap());
static ACCEPT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\baccept").unwrap());
static REJECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:reject|decline)").unwrap());
static HEDGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:maybe|perhaps|might|not sure|unsure|undecided)\b").unwrap());
static REFUSAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?:\bas an ai\b|\bi cannot\b|\bi can't\b|\bi can’t\b|\bi(?:'m| am) unable\b|\bi won't\b|\bi will not\b|\bi(?:'m| am) sorry\b|\bunable to (?:make|choose|answer|participate)|\bi do not (?:make|participate)|\bi don't (?:make|participate))",
    )
    .unwrap()
});
static OPTION_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\boption\s*([ab])\b").unwrap());
static BARE_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([AB])\b").unwrap());

fn normalize(text: &str) -> String {
    text.to_lowercase().replace('’', "'")
}

fn is_refusal(lower: &str) -> bool {
    REFUSAL.is_match(lower)
}

/// Integer candidates of a proposer answer, `Err(())` marking numbers that cannot be offers.
fn offer_candidates(text: &str) -> Vec<Result<u64, ()>> {
    let mut out = Vec::new();
    for m in NUMBER.find_iter(text) {
        let before = &text[..m.start()];
        let after = &text[m.end()..];
        let prev = before.chars().next_back();
        let next = after.chars().next();
        if prev.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.')
            || next.is_some_and(|c| c.is_alphanumeric() || c == '_')
        {
            continue;
        }
        if OUT_OF_BEFORE.is_match(before) {
            continue;
        }
        let negative = prev.is_some_and(|c| c == '-' || c == '−')
            && before.chars().rev().nth(1).is_none_or(|c| !c.is_alphanumeric());
        let token = m.as_str();
        if negative || token.contains('.') {
            out.push(Err(()));
        } else {
            out.push(token.parse::<u64>().map_err(|_| ()));
        }
    }
    out
}

fn parse_offer(text: &str, pool: u32) -> ParsedDecision {
    let candidates = offer_candidates(text);
    let mut in_range: Vec<u32> = Vec::new();
    for c in candidates.iter().flatten() {
        if *c <= pool as u64 && !in_range.contains(&(*c as u32)) {
            in_range.push(*c as u32);
        }
    }
    match in_range.len() {
        1 => ParsedDecision::Offer(in_range[0]),
        n if n > 1 => ParsedDecision::Unparseable(UnparseableReason::Ambiguous),
        _ if !candidates.is_empty() => ParsedDecision::Unparseable(UnparseableReason::OutOfRange),
        _ if is_refusal(&normalize(text)) => ParsedDecision::Unparseable(UnparseableReason::Refusal),
        _ => ParsedDecision::Unparseable(UnparseableReason::NoNumber),
    }
}

fn parse_response(text: &str) -> ParsedDecision {
    let lower = normalize(text);
    if HEDGE.is_match(&lower) {
        return ParsedDecision::Unparseable(UnparseableReason::Ambiguous);
    }
    let negated = NEGATED_ACCEPT.is_match(&lower);
    let without_negated = NEGATED_ACCEPT.replace_all(&lower, " ");
    let accept = ACCEPT.is_match(&without_negated);
    let reject = negated || REJECT.is_match(&without_negated);
    match (accept, reject) {
        (true, false) => ParsedDecision::Accept,
        (false, true) => ParsedDecision::Reject,
        (true, true) => ParsedDecision::Unparseable(UnparseableReason::Ambiguous),
        (false, false) if is_refusal(&lower) => ParsedDecision::Unparseable(UnparseableReason::Refusal),
        (false, false) => ParsedDecision::Unparseable(UnparseableReason::Ambiguous),
    }
}

/// Parse an ultimatum-game answer for the given trial.
pub fn parse_ug(text: &str, config: &UgConfig) -> ParsedDecision {
    match config.role {
        Role::Proposer => parse_offer(text, config.pool),
        Role::Responder => parse_response(text),
    }
}

/// Parse a gambling-game answer: option A is the lottery, option B the sure amount.
pub fn parse_gg(text: &str) -> ParsedDecision {
    let lower = normalize(text);
    let stripped: String = lower.chars().filter(|c| c.is_alphanumeric()).collect();
    let mut labels: Vec<char> = match stripped.as_str() {
        "a" => vec!['a'],
        "b" => vec!['b'],
        _ => Vec::new(),
    };
    if labels.is_empty() {
        labels = OPTION_LABEL.captures_iter(text).map(|c| c[1].to_ascii_lowercase().chars().next().unwrap()).collect();
    }
    if labels.is_empty() {
        labels = BARE_LABEL.captures_iter(text).map(|c| c[1].to_ascii_lowercase().chars().next().unwrap()).collect();
    }
    labels.sort_unstable();
    labels.dedup();
    match labels.as_slice() {
        ['a'] if !HEDGE.is_match(&lower) => ParsedDecision::ChoiceGamble,
        ['b'] if !HEDGE.is_match(&lower) => ParsedDecision::ChoiceSure,
        [] if is_refusal(&lower) => ParsedDecision::Unparseable(UnparseableReason::Refusal),
        _ => ParsedDecision::Unparseable(UnparseableReason::Ambiguous),
    }
}

pub fn parse(text: &str, config: &GameConfig) -> ParsedDecision {
    match config {
        GameConfig::Ug(c) => parse_ug(text, c),
        GameConfig::Gg(_) => parse_gg(text),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParserError {
    #[error("no records to summarize")]
    EmptyInput,
}

/// Summary of unparseable answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub total: usize,
    pub excluded: usize,
    pub rate: f64,
    pub reasons: BTreeMap<String, usize>,
}

pub fn exclusion_report<'a, I>(decisions: I) -> Result<ExclusionReport, ParserError>
where
    I: IntoIterator<Item = &'a ParsedDecision>,
{
    let mut total = 0;
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for d in decisions {
        total += 1;
        if let ParsedDecision::Unparseable(r) = d {
            *reasons.entry(r.as_str().to_string()).or_default() += 1;
        }
    }
    if total == 0 {
        return Err(ParserError::EmptyInput);
    }
    let excluded = reasons.values().sum();
    Ok(ExclusionReport { total, excluded, rate: excluded as f64 / total as f64, reasons })
}

/// Fraction of records whose answer could not be parsed.
pub fn exclusion_rate(records: &[TrialRecord]) -> Result<f64, ParserError> {
    exclusion_report(records.iter().map(|r| &r.parsed)).map(|r| r.rate)
}
