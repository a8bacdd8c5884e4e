//! Command-line front end: planning, running, estimating and reporting.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use econ_core::agents::mock::{MockScript, MockServer};
use econ_core::agents::{Agent, AgentBackend, RemoteAgent, RemoteConfig, ReplayAgent, SyntheticCpt, SyntheticFs};
use econ_core::estimation::prospect::MIN_PHI;
use econ_core::games::{gg_grid, ug_grid, GgGridSpec, DEFAULT_POOL_MAX, DEFAULT_POOL_MIN};
use econ_core::pipeline::{analyze, render_report, write_outputs, AnalysisOptions};
use econ_core::runner::{run, Clock, RunMetadata, RunOptions, RunSummary, RunnerError, TranscriptStore};
use econ_core::{Condition, CptParams, ExperimentPlan, FsParams, Game, GameConfig, MinimizeOptions, Role};

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const METADATA_FILE: &str = "run_meta.json";
/// Optimizer seed used by `run` and by default in `estimate`, so both give the same artifacts.
pub const ESTIMATE_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "llm-econ", version, about = "Ultimatum and gambling game experiments against chat agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the experiment grid as JSON
    Plan(PlanArgs),
    /// Run an experiment against a remote endpoint, a synthetic agent or a replay file
    Run(RunArgs),
    /// Run an experiment against a synthetic agent
    Simulate(RunArgs),
    /// Estimate parameters from a transcript and write estimates.csv, fit.json, exclusion.json
    Estimate(EstimateArgs),
    /// Print a human-readable summary of a transcript
    Report(EstimateArgs),
    /// Serve scripted chat completions on a local port
    MockServer(MockArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GameArg {
    Ug,
    Gg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    Neutral,
    Male,
    Female,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Proposer,
    Responder,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[arg(long, value_enum)]
    pub game: GameArg,
    /// Ultimatum pool range, inclusive
    #[arg(long, default_value = "2..10", value_parser = parse_pools)]
    pub pools: (u32, u32),
    /// Ultimatum roles to include
    #[arg(long, value_enum, default_value = "both")]
    pub role: RoleArg,
    /// Gambling grid with 4 gain, 3 loss and 1 mixed probability per magnitude
    #[arg(long)]
    pub total56: bool,
    /// Sure amounts probed per lottery
    #[arg(long)]
    pub sure_levels: Option<usize>,
    #[arg(long, value_enum, default_value = "neutral")]
    pub condition: ConditionArg,
    #[arg(long, default_value_t = 100)]
    pub reps: u32,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Chat-completions URL
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Inequity-aversion agent, e.g. "a=0.5,b=0.542"
    #[arg(long, alias = "fs")]
    pub synthetic_fs: Option<String>,
    /// Prospect-theory agent, e.g. "a=0.88,b=0.88,l=2.25,wp=0.61,wm=0.69"
    #[arg(long, alias = "cpt")]
    pub synthetic_cpt: Option<String>,
    /// Choice-noise scale of synthetic agents
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Answer from a stored transcript instead of querying an agent
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub concurrency: usize,
    /// Requests per minute sent to the endpoint
    #[arg(long)]
    pub rate_limit: Option<f64>,
    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Transcript to analyse; defaults to <out>/transcript.jsonl
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed of the optimizer start points
    #[arg(long, default_value_t = ESTIMATE_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct MockArgs {
    #[arg(long, default_value = "127.0.0.1:8089")]
    pub addr: String,
}

/// Usage errors exit with 1, everything else with 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_pools(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let a: u32 = a.trim().parse().map_err(|e| format!("pool `{a}`: {e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("pool `{b}`: {e}"))?;
    if a == 0 || a > b {
        return Err(format!("invalid pool range {a}..{b}"));
    }
    Ok((a, b))
}

/// Parse "k=v,k=v" and require exactly the given keys.
pub fn parse_params(text: &str, keys: &[&str]) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let k = k.trim().to_ascii_lowercase();
        if !keys.contains(&k.as_str()) {
            return Err(format!("unknown parameter `{k}` (expected {})", keys.join(", ")));
        }
        let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
        if !v.is_finite() {
            return Err(format!("{k}: not a finite number"));
        }
        if out.insert(k.clone(), v).is_some() {
            return Err(format!("parameter `{k}` given twice"));
        }
    }
    if let Some(missing) = keys.iter().find(|k| !out.contains_key(**k)) {
        return Err(format!("missing parameter `{missing}`"));
    }
    Ok(out)
}

pub fn parse_fs(text: &str) -> Result<FsParams, String> {
    let p = parse_params(text, &["a", "b"])?;
    let params = FsParams::new(p["a"], p["b"]);
    if params.alpha < 0.0 || params.beta < 0.0 {
        return Err("inequity-aversion parameters must be non-negative".into());
    }
    Ok(params)
}

pub fn parse_cpt(text: &str) -> Result<CptParams, String> {
    let p = parse_params(text, &["a", "b", "l", "wp", "wm"])?;
    let params =
        CptParams { alpha_gain: p["a"], beta_loss: p["b"], lambda: p["l"], phi_plus: p["wp"], phi_minus: p["wm"] };
    if !params.is_valid() {
        return Err(format!("prospect-theory parameters must be positive: {params:?}"));
    }
    if params.phi_plus < MIN_PHI || params.phi_minus < MIN_PHI {
        return Err(format!("weighting exponents must be at least {MIN_PHI}"));
    }
    Ok(params)
}

fn conditions(c: ConditionArg) -> Vec<Condition> {
    match c {
        ConditionArg::Neutral => vec![Condition::Neutral],
        ConditionArg::Male => vec![Condition::Male],
        ConditionArg::Female => vec![Condition::Female],
        ConditionArg::All => Condition::ALL.to_vec(),
    }
}

/// One plan per requested condition.
pub fn build_plans(args: &PlanArgs) -> Result<Vec<ExperimentPlan>, CliError> {
    if args.reps < 1 {
        return Err(usage("--reps must be at least 1"));
    }
    if !(args.temperature >= 0.0 && args.temperature.is_finite()) {
        return Err(usage("--temperature must be a non-negative number"));
    }
    let (game, configs) = match args.game {
        GameArg::Ug => {
            if args.total56 || args.sure_levels.is_some() {
                return Err(usage("--total56 and --sure-levels apply to the gambling game only"));
            }
            let (lo, hi) = args.pools;
            let roles = match args.role {
                RoleArg::Proposer => vec![Role::Proposer],
                RoleArg::Responder => vec![Role::Responder],
                RoleArg::Both => vec![Role::Proposer, Role::Responder],
            };
            let mut configs = Vec::new();
            for role in roles {
                let grid = ug_grid(lo, hi, role).map_err(|e| usage(e.to_string()))?;
                configs.extend(grid.into_iter().map(GameConfig::Ug));
            }
            (Game::Ug, configs)
        }
        GameArg::Gg => {
            if args.pools != (DEFAULT_POOL_MIN, DEFAULT_POOL_MAX) || args.role != RoleArg::Both {
                return Err(usage("--pools and --role apply to the ultimatum game only"));
            }
            let mut grid_spec = if args.total56 { GgGridSpec::total56() } else { GgGridSpec::default() };
            if let Some(n) = args.sure_levels {
                grid_spec.sure_levels = n;
            }
            let grid = gg_grid(&grid_spec).map_err(|e| usage(e.to_string()))?;
            (Game::Gg, grid.into_iter().map(GameConfig::Gg).collect())
        }
    };
    Ok(conditions(args.condition)
        .into_iter()
        .map(|condition| ExperimentPlan {
            game,
            configs: configs.clone(),
            condition,
            repetitions: args.reps,
            temperature: args.temperature,
            seed: args.seed,
        })
        .collect())
}

/// The backend selected by the flags, with the model name recorded in transcripts.
pub fn build_backend(args: &RunArgs, synthetic_only: bool) -> Result<(AgentBackend, String), CliError> {
    let chosen =
        [args.endpoint.is_some(), args.synthetic_fs.is_some(), args.synthetic_cpt.is_some(), args.replay.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
    if synthetic_only && (args.endpoint.is_some() || args.replay.is_some()) {
        return Err(usage("simulate takes --synthetic-fs or --synthetic-cpt only"));
    }
    match chosen {
        0 if synthetic_only => return Err(usage("simulate needs --synthetic-fs or --synthetic-cpt")),
        0 => return Err(usage("choose a backend: --endpoint, --synthetic-fs, --synthetic-cpt or --replay")),
        1 => {}
        _ => return Err(usage("--endpoint, --synthetic-fs, --synthetic-cpt and --replay are mutually exclusive")),
    }
    if args.noise < 0.0 || !args.noise.is_finite() {
        return Err(usage("--noise must be a non-negative number"));
    }
    if args.concurrency == 0 {
        return Err(usage("--concurrency must be at least 1"));
    }
    if args.endpoint.is_none() && (args.api_key_env.is_some() || args.rate_limit.is_some()) {
        return Err(usage("--api-key-env and --rate-limit need --endpoint"));
    }
    if let Some(text) = &args.synthetic_fs {
        if args.plan.game != GameArg::Ug {
            return Err(usage("--synthetic-fs plays the ultimatum game (--game ug)"));
        }
        let params = parse_fs(text).map_err(|e| usage(format!("--synthetic-fs: {e}")))?;
        let agent = SyntheticFs { params, noise_scale: args.noise };
        let model = args.model.clone().unwrap_or_else(|| agent.describe());
        return Ok((AgentBackend::SyntheticFs(agent), model));
    }
    if let Some(text) = &args.synthetic_cpt {
        if args.plan.game != GameArg::Gg {
            return Err(usage("--synthetic-cpt plays the gambling game (--game gg)"));
        }
        let params = parse_cpt(text).map_err(|e| usage(format!("--synthetic-cpt: {e}")))?;
        let agent = SyntheticCpt { params, noise_scale: args.noise };
        let model = args.model.clone().unwrap_or_else(|| agent.describe());
        return Ok((AgentBackend::SyntheticCpt(agent), model));
    }
    if let Some(path) = &args.replay {
        let records = TranscriptStore::new(path).load().with_context(|| format!("reading {}", path.display()))?;
        if records.is_empty() {
            return Err(CliError::Runtime(anyhow!("replay file {} has no records", path.display())));
        }
        let model = args.model.clone().unwrap_or_else(|| records[0].model.clone());
        return Ok((AgentBackend::Replay(ReplayAgent::from_records(path.display().to_string(), &records)), model));
    }
    let endpoint = args.endpoint.clone().expect("one backend chosen");
    let model = args.model.clone().ok_or_else(|| usage("--endpoint needs --model"))?;
    if let Some(rpm) = args.rate_limit {
        if !(rpm > 0.0 && rpm.is_finite()) {
            return Err(usage("--rate-limit must be positive"));
        }
    }
    let config = RemoteConfig {
        api_key_env: args.api_key_env.clone(),
        timeout: Duration::from_secs(args.timeout.max(1)),
        requests_per_minute: args.rate_limit,
        ..RemoteConfig::new(endpoint)
    };
    let agent = RemoteAgent::new(config).map_err(|e| usage(e.to_string()))?;
    Ok((AgentBackend::Remote(agent), model))
}

fn analysis_options(seed: u64) -> AnalysisOptions {
    AnalysisOptions { minimize: MinimizeOptions { seed, ..MinimizeOptions::default() }, ..AnalysisOptions::default() }
}

fn estimate_into(transcript: &Path, out: &Path, seed: u64) -> anyhow::Result<String> {
    let records =
        TranscriptStore::new(transcript).load().with_context(|| format!("reading {}", transcript.display()))?;
    let analysis = analyze(&records, &analysis_options(seed))?;
    write_outputs(&analysis, out)?;
    Ok(render_report(&analysis))
}

fn summary_line(condition: Condition, s: &RunSummary) -> String {
    format!(
        "{condition}: {} new records ({} ok, {} excluded), {} resumed, {} failed, {:.2}s",
        s.trials_total, s.trials_ok, s.trials_excluded, s.trials_resumed, s.trials_failed, s.wall_time
    )
}

fn cmd_run(args: &RunArgs, synthetic_only: bool) -> Result<(), CliError> {
    let plans = build_plans(&args.plan)?;
    let (backend, model) = build_backend(args, synthetic_only)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let transcript = args.out.join(TRANSCRIPT_FILE);
    let store = TranscriptStore::new(&transcript);
    let opts = RunOptions {
        model: model.clone(),
        concurrency: args.concurrency,
        clock: Clock::from_env(),
        ..RunOptions::default()
    };

    let metadata: Vec<RunMetadata> = plans.iter().map(|p| RunMetadata::new(p, &backend, &model)).collect();
    let meta_path = args.out.join(METADATA_FILE);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&metadata).context("serializing metadata")? + "\n")
        .with_context(|| format!("writing {}", meta_path.display()))?;

    let mut failed = 0;
    for plan in &plans {
        match run(plan, &backend, &store, &opts) {
            Ok(s) => {
                failed += s.trials_failed;
                println!("{}", summary_line(plan.condition, &s));
            }
            Err(RunnerError::Aborted { consecutive, last, summary }) => {
                println!("{}", summary_line(plan.condition, &summary));
                return Err(CliError::Runtime(anyhow!(
                    "run aborted after {consecutive} consecutive transport failures: {last}; rerun the same command to resume"
                )));
            }
            Err(e) => return Err(CliError::Runtime(e.into())),
        }
    }
    let report = estimate_into(&transcript, &args.out, ESTIMATE_SEED)?;
    print!("{report}");
    println!("artifacts written to {}", args.out.display());
    if failed > 0 {
        return Err(CliError::Runtime(anyhow!("{failed} trials failed; rerun the same command to retry them")));
    }
    Ok(())
}

fn transcript_path(args: &EstimateArgs) -> PathBuf {
    args.transcript.clone().unwrap_or_else(|| args.out.join(TRANSCRIPT_FILE))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan(args) => {
            let plans = build_plans(&args)?;
            let out = if plans.len() == 1 {
                serde_json::to_string_pretty(&plans[0].configs)
            } else {
                serde_json::to_string_pretty(&plans)
            };
            println!("{}", out.context("serializing plan")?);
            Ok(())
        }
        Command::Run(args) => cmd_run(&args, false),
        Command::Simulate(args) => cmd_run(&args, true),
        Command::Estimate(args) => {
            let report = estimate_into(&transcript_path(&args), &args.out, args.seed)?;
            print!("{report}");
            println!("artifacts written to {}", args.out.display());
            Ok(())
        }
        Command::Report(args) => {
            let path = transcript_path(&args);
            let records = TranscriptStore::new(&path).load().with_context(|| format!("reading {}", path.display()))?;
            let analysis = analyze(&records, &analysis_options(args.seed)).map_err(anyhow::Error::from)?;
            print!("{}", render_report(&analysis));
            Ok(())
        }
        Command::MockServer(args) => {
            let server = MockServer::bind(&args.addr, MockScript::ultimatum_demo())
                .with_context(|| format!("binding {}", args.addr))?;
            println!("mock chat completions at {}", server.url());
            server.serve_forever();
            Ok(())
        }
    }
}

/// Run the command line `argv` (program name first) and return the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
