//! Executes experiment plans and persists every trial as one JSONL line.
//!
//! Trials are keyed by `(run_id, config_index, repetition)`. Re-running a plan against
//! an existing store only executes the missing keys. Records are appended in trial
//! order whatever the concurrency, so identical inputs give identical transcripts.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, LazyLock};
use std::time::Instant;

use chrono::{DateTime, TimeZone, Utc};
use log::{info, warn};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{Agent, AgentError, CompletionRequest, TrialContext, DEFAULT_MAX_TOKENS};
use crate::games::{Condition, ExperimentPlan, Game, GameConfig, GameError};
use crate::parser::{self, ParsedDecision, PARSER_VERSION};
use crate::promptkit::{self, PromptError};

/// JSON schema of a transcript line.
pub const TRIAL_RECORD_SCHEMA: &str = include_str!("../assets/trial_record.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub run_id: String,
    pub game: Game,
    pub condition: Condition,
    pub config_index: usize,
    pub config: GameConfig,
    pub repetition: u32,
    pub prompt: String,
    pub template_hash: String,
    pub raw_response: String,
    pub parsed: ParsedDecision,
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
    pub timestamp: DateTime<Utc>,
}

impl TrialRecord {
    pub fn key(&self) -> (usize, u32) {
        (self.config_index, self.repetition)
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("line {line}: invalid field `{field}`: {message}")]
    SchemaError { line: usize, field: String, message: String },
    #[error("transcript store {path}: {source}")]
    SinkError { path: PathBuf, source: std::io::Error },
    #[error("aborted after {consecutive} consecutive transport failures (last: {last})")]
    Aborted { consecutive: usize, last: AgentError, summary: Box<RunSummary> },
    #[error("invalid plan: {0}")]
    InvalidPlan(#[from] GameError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Append-only JSONL transcript file.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    path: PathBuf,
}

static FIELD_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"field `(\w+)`").unwrap());

impl TranscriptStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn sink_error(&self, source: std::io::Error) -> RunnerError {
        RunnerError::SinkError { path: self.path.clone(), source }
    }

    /// All records, validated. A missing file reads as an empty store.
    pub fn load(&self) -> Result<Vec<TrialRecord>, RunnerError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.sink_error(e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| self.sink_error(e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(parse_line(&line, i + 1)?);
        }
        Ok(out)
    }

    pub fn append(&self, records: &[TrialRecord]) -> Result<(), RunnerError> {
        let mut w = self.writer()?;
        for r in records {
            write_record(&mut w, r).map_err(|e| self.sink_error(e))?;
        }
        w.flush().map_err(|e| self.sink_error(e))
    }

    fn writer(&self) -> Result<BufWriter<File>, RunnerError> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| self.sink_error(e))?;
        }
        let f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| self.sink_error(e))?;
        Ok(BufWriter::new(f))
    }
}

fn write_record(w: &mut impl Write, r: &TrialRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, r)?;
    w.write_all(b"\n")
}

/// Parse and validate one transcript line (`line` is 1-based).
pub fn parse_line(line: &str, line_no: usize) -> Result<TrialRecord, RunnerError> {
    let schema =
        |field: &str, message: String| RunnerError::SchemaError { line: line_no, field: field.into(), message };
    let record: TrialRecord = serde_json::from_str(line).map_err(|e| {
        let msg = e.to_string();
        let field = FIELD_NAME.captures(&msg).map(|c| c[1].to_string()).unwrap_or_else(|| "<record>".into());
        schema(&field, msg)
    })?;
    record.config.validate().map_err(|e| schema("config", e.to_string()))?;
    if record.config.game() != record.game {
        return Err(schema("game", format!("{} record holds a {} config", record.game, record.config.game())));
    }
    let reparsed = parser::parse(&record.raw_response, &record.config);
    if reparsed != record.parsed {
        return Err(schema("parsed", format!("stored {:?}, parser gives {:?}", record.parsed, reparsed)));
    }
    Ok(record)
}

/// Timestamp source for records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// Fixed at `SOURCE_DATE_EPOCH` when that variable holds a Unix time, else the system clock.
    pub fn from_env() -> Self {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse::<i64>().ok())
            .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
            .map_or(Clock::System, Clock::Fixed)
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub model: String,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub max_consecutive_failures: usize,
    pub clock: Clock,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            model: "unknown".into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            concurrency: 1,
            max_consecutive_failures: 5,
            clock: Clock::System,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigCount {
    pub config_index: usize,
    pub ok: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    /// Records appended by this invocation.
    pub trials_total: usize,
    pub trials_ok: usize,
    pub trials_excluded: usize,
    /// Trials already present in the store and skipped.
    pub trials_resumed: usize,
    /// Trials that produced no record because the agent failed.
    pub trials_failed: usize,
    pub wall_time: f64,
    pub per_config: Vec<ConfigCount>,
}

/// Identifier shared by every record of a plan run against a given model.
pub fn run_id(plan: &ExperimentPlan, model: &str) -> String {
    let plan_json = serde_json::to_string(plan).expect("plans serialize");
    let digest = Sha256::digest(format!("{plan_json}|{model}").as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-trial seed derived from the plan seed and the trial key.
pub fn trial_seed(plan_seed: u64, config_index: usize, repetition: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(plan_seed.to_le_bytes());
    h.update((config_index as u64).to_le_bytes());
    h.update(repetition.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

struct PendingTrial {
    context: TrialContext,
    request: CompletionRequest,
    template_hash: String,
}

/// Run every missing trial of `plan` against `agent`, appending records to `store`.
pub fn run(
    plan: &ExperimentPlan,
    agent: &dyn Agent,
    store: &TranscriptStore,
    opts: &RunOptions,
) -> Result<RunSummary, RunnerError> {
    plan.validate()?;
    let started = Instant::now();
    let id = run_id(plan, &opts.model);
    let done: HashSet<(usize, u32)> = store.load()?.iter().filter(|r| r.run_id == id).map(TrialRecord::key).collect();

    let mut pending = Vec::new();
    for (ci, config) in plan.configs.iter().enumerate() {
        let prompt = promptkit::render_prompt(config, plan.condition)?;
        let template_hash = promptkit::template_for(config).hash.clone();
        for rep in 0..plan.repetitions {
            if done.contains(&(ci, rep)) {
                continue;
            }
            let seed = trial_seed(plan.seed, ci, rep);
            pending.push(PendingTrial {
                context: TrialContext {
                    config: *config,
                    condition: plan.condition,
                    config_index: ci,
                    repetition: rep,
                    seed,
                },
                request: CompletionRequest {
                    model: opts.model.clone(),
                    prompt: prompt.clone(),
                    temperature: plan.temperature,
                    max_tokens: opts.max_tokens,
                    seed: Some(seed),
                },
                template_hash: template_hash.clone(),
            });
        }
    }

    let mut summary = RunSummary { run_id: id.clone(), trials_resumed: done.len(), ..Default::default() };
    let mut counts: BTreeMap<usize, ConfigCount> = BTreeMap::new();
    let mut writer = store.writer()?;
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = opts.concurrency.max(1).min(pending.len().max(1));
    let (tx, rx) = mpsc::channel::<(usize, Result<String, AgentError>)>();

    let outcome = std::thread::scope(|scope| -> Result<(), RunnerError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, stop) = (&pending, &next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(trial) = pending.get(i) else { break };
                let answer = agent.complete(&trial.request, &trial.context);
                if tx.send((i, answer)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffered: BTreeMap<usize, Result<String, AgentError>> = BTreeMap::new();
        let mut cursor = 0;
        let mut consecutive = 0;
        for (i, answer) in rx.iter() {
            buffered.insert(i, answer);
            while let Some(answer) = buffered.remove(&cursor) {
                let trial = &pending[cursor];
                cursor += 1;
                match answer {
                    Ok(raw) => {
                        consecutive = 0;
                        let parsed = parser::parse(&raw, &trial.context.config);
                        let record = TrialRecord {
                            run_id: id.clone(),
                            game: plan.game,
                            condition: plan.condition,
                            config_index: trial.context.config_index,
                            config: trial.context.config,
                            repetition: trial.context.repetition,
                            prompt: trial.request.prompt.clone(),
                            template_hash: trial.template_hash.clone(),
                            raw_response: raw,
                            parsed,
                            model: opts.model.clone(),
                            temperature: plan.temperature,
                            seed: trial.context.seed,
                            timestamp: opts.clock.now(),
                        };
                        write_record(&mut writer, &record)
                            .and_then(|_| writer.flush())
                            .map_err(|e| store.sink_error(e))?;
                        let c = counts
                            .entry(record.config_index)
                            .or_insert_with(|| ConfigCount { config_index: record.config_index, ..Default::default() });
                        summary.trials_total += 1;
                        if parsed.is_parseable() {
                            summary.trials_ok += 1;
                            c.ok += 1;
                        } else {
                            summary.trials_excluded += 1;
                            c.excluded += 1;
                        }
                    }
                    Err(e) => {
                        warn!("trial {}/{} failed: {e}", trial.context.config_index, trial.context.repetition);
                        summary.trials_failed += 1;
                        if e.is_transport() {
                            consecutive += 1;
                        }
                        if consecutive >= opts.max_consecutive_failures.max(1)
                            || matches!(e, AgentError::Unsupported(_))
                        {
                            stop.store(true, Ordering::SeqCst);
                            summary.per_config = counts.values().cloned().collect();
                            summary.wall_time = started.elapsed().as_secs_f64();
                            return Err(RunnerError::Aborted {
                                consecutive,
                                last: e,
                                summary: Box::new(summary.clone()),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    });
    outcome?;

    summary.per_config = counts.into_values().collect();
    summary.wall_time = started.elapsed().as_secs_f64();
    info!(
        "run {}: {} records ({} excluded), {} resumed, {} failed in {:.2}s",
        summary.run_id,
        summary.trials_total,
        summary.trials_excluded,
        summary.trials_resumed,
        summary.trials_failed,
        summary.wall_time
    );
    Ok(summary)
}

/// Sidecar describing how a transcript was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub toolkit_version: String,
    pub parser_version: u32,
    pub template_set_version: u32,
    pub template_hashes: BTreeMap<String, String>,
    pub agent: String,
    pub model: String,
    pub plan: ExperimentPlan,
}

impl RunMetadata {
    pub fn new(plan: &ExperimentPlan, agent: &dyn Agent, model: &str) -> Self {
        Self {
            run_id: run_id(plan, model),
            toolkit_version: crate::VERSION.into(),
            parser_version: PARSER_VERSION,
            template_set_version: promptkit::template_set_version(),
            template_hashes: promptkit::templates().map(|t| (t.info.id.clone(), t.hash.clone())).collect(),
            agent: agent.describe(),
            model: model.into(),
            plan: plan.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::SyntheticFs;
    use crate::estimation::FsParams;
    use crate::games::{ug_grid, Role, UgConfig};

    fn plan(configs: Vec<UgConfig>, reps: u32) -> ExperimentPlan {
        ExperimentPlan {
            game: Game::Ug,
            configs: configs.into_iter().map(GameConfig::Ug).collect(),
            condition: Condition::Neutral,
            repetitions: reps,
            temperature: 1.0,
            seed: 17,
        }
    }

    fn agent() -> SyntheticFs {
        SyntheticFs { params: FsParams::new(0.5, 0.542), noise_scale: 1.0 }
    }

    fn fixed_opts(concurrency: usize) -> RunOptions {
        RunOptions {
            model: "synthetic".into(),
            concurrency,
            clock: Clock::Fixed(Utc.timestamp_opt(1_700_000_000, 0).unwrap()),
            ..Default::default()
        }
    }

    #[test]
    fn count_contract() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("t.jsonl"));
        let p = plan(vec![UgConfig::proposer(4), UgConfig::proposer(6)], 3);
        let s = run(&p, &agent(), &store, &fixed_opts(1)).unwrap();
        assert_eq!(s.trials_total, 6);
        assert_eq!(s.trials_ok + s.trials_excluded, s.trials_total);
        let recs = store.load().unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(
            recs.iter().map(TrialRecord::key).collect::<Vec<_>>(),
            vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
        );
    }

    #[test]
    fn resume_appends_only_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        let full = TranscriptStore::new(dir.path().join("full.jsonl"));
        let p = plan(vec![UgConfig::proposer(4), UgConfig::proposer(6)], 3);
        run(&p, &agent(), &full, &fixed_opts(1)).unwrap();
        let all = full.load().unwrap();

        let partial = TranscriptStore::new(dir.path().join("partial.jsonl"));
        partial.append(&all[..4]).unwrap();
        let s = run(&p, &agent(), &partial, &fixed_opts(3)).unwrap();
        assert_eq!((s.trials_total, s.trials_resumed), (2, 4));
        assert_eq!(partial.load().unwrap(), all);

        let again = run(&p, &agent(), &partial, &fixed_opts(3)).unwrap();
        assert_eq!(again.trials_total, 0);
        assert_eq!(partial.load().unwrap().len(), 6);
    }

    #[test]
    fn concurrency_does_not_change_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(ug_grid(2, 10, Role::Proposer).unwrap(), 20);
        let a = TranscriptStore::new(dir.path().join("a.jsonl"));
        let b = TranscriptStore::new(dir.path().join("b.jsonl"));
        run(&p, &agent(), &a, &fixed_opts(1)).unwrap();
        run(&p, &agent(), &b, &fixed_opts(8)).unwrap();
        assert_eq!(std::fs::read(a.path()).unwrap(), std::fs::read(b.path()).unwrap());
    }

    #[test]
    fn load_round_trip_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("x.jsonl"));
        assert!(store.load().unwrap().is_empty());
        std::fs::write(store.path(), "").unwrap();
        assert!(store.load().unwrap().is_empty());
    }

    #[test]
    fn corrupted_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("t.jsonl"));
        run(&plan(vec![UgConfig::proposer(4)], 3), &agent(), &store, &fixed_opts(1)).unwrap();
        let text = std::fs::read_to_string(store.path()).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = lines[1].replace("\"repetition\"", "\"repetitionz\"");
        std::fs::write(store.path(), lines.join("\n")).unwrap();
        match store.load() {
            Err(RunnerError::SchemaError { line, field, .. }) => {
                assert_eq!(line, 2);
                assert!(field == "repetitionz" || field == "repetition", "{field}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tampered_decision_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("t.jsonl"));
        run(&plan(vec![UgConfig::responder(4, 2)], 1), &agent(), &store, &fixed_opts(1)).unwrap();
        let text = std::fs::read_to_string(store.path()).unwrap();
        let tampered = if text.contains(r#""kind":"accept""#) {
            text.replace(r#""kind":"accept""#, r#""kind":"reject""#)
        } else {
            text.replace(r#""kind":"reject""#, r#""kind":"accept""#)
        };
        std::fs::write(store.path(), tampered).unwrap();
        assert!(matches!(store.load(), Err(RunnerError::SchemaError { line: 1, ref field, .. }) if field == "parsed"));
    }

    #[test]
    fn raw_bytes_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("t.jsonl"));
        let raw = "Offer:\t\"3\" · ünïcödé\n\u{0}end";
        let rec = TrialRecord {
            run_id: "r".into(),
            game: Game::Ug,
            condition: Condition::Female,
            config_index: 0,
            config: GameConfig::Ug(UgConfig::proposer(5)),
            repetition: 0,
            prompt: "p".into(),
            template_hash: "h".into(),
            raw_response: raw.into(),
            parsed: parser::parse(raw, &GameConfig::Ug(UgConfig::proposer(5))),
            model: "m".into(),
            temperature: 1.0,
            seed: u64::MAX,
            timestamp: Utc.timestamp_opt(1, 0).unwrap(),
        };
        store.append(std::slice::from_ref(&rec)).unwrap();
        assert_eq!(store.load().unwrap(), vec![rec]);
    }

    #[test]
    fn seeds_differ_per_trial() {
        let a = trial_seed(1, 0, 0);
        assert_ne!(a, trial_seed(1, 0, 1));
        assert_ne!(a, trial_seed(1, 1, 0));
        assert_ne!(a, trial_seed(2, 0, 0));
        assert_eq!(a, trial_seed(1, 0, 0));
    }

    #[test]
    fn wrong_game_agent_aborts() {
        use crate::agents::SyntheticCpt;
        use crate::estimation::CptParams;
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("t.jsonl"));
        let cpt = SyntheticCpt { params: CptParams::linear(), noise_scale: 0.0 };
        let err = run(&plan(vec![UgConfig::proposer(4)], 2), &cpt, &store, &fixed_opts(1)).unwrap_err();
        assert!(matches!(err, RunnerError::Aborted { .. }));
    }
}
