//! The closed design loop: emit decks, simulate, extract metrics, ask the agent
//! for the next design, and persist every iteration before starting the next.
//!
//! Run directory layout:
//!
//! ```text
//! config.json        the RunConfig
//! trajectory.jsonl   one IterationRecord per line, synced after each append
//! transcript.jsonl   chat exchanges (chat agents only)
//! decks/iter_<i>/    emitted decks, also the external backend's working directory
//! results/iter_<i>.json  result document of each converged iteration
//! report.json        written once the run terminates
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    build_prompt, recovery_prompt_for, score, Agent, AgentError, BaselineAgent, CoordinateSearch, GuidanceMode,
    HttpTransport, LlmAgent, LlmConfig, PromptKind, PromptOptions, Proposal, ProposalRequest, RecordingTransport,
    ReplayTransport, ChatTransport,
};
use crate::backend::{self, BackendConfig, BackendError};
use crate::deckgen::{generate_deck_pair, write_deck_pair, MeshDensity, ModelSet, SweepConfig, DEFAULT_DECK_NAME};
use crate::params::{validate, DesignParams, ParamSpace, SpecTargets};
use crate::postproc::{extract_metrics, package_results, PerformanceMetrics};
use crate::surrogate::SimulationOutcome;

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const DEFAULT_MAX_ITERATIONS: usize = 25;
/// Consecutive unusable chat proposals before one baseline step is substituted.
pub const FALLBACK_AFTER: u32 = 2;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("config error: {0}")]
    Config(String),
    #[error("fatal backend error: {0}")]
    FatalBackend(#[from] BackendError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt trajectory at line {line}: {message}")]
    CorruptTrajectory { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OrchestratorError {
    let path = path.to_path_buf();
    move |source| OrchestratorError::Io { path, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentChoice {
    Llm,
    #[default]
    Baseline,
    LlmWithBaselineFallback,
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed_design: DesignParams,
    #[serde(default)]
    pub space: ParamSpace,
    #[serde(default)]
    pub targets: SpecTargets,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub agent: AgentChoice,
    #[serde(default)]
    pub guidance: GuidanceMode,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Defaults to an Id-Vg sweep from 0 to the target Vdd in 10 mV steps at Vd = Vdd.
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    pub run_dir: PathBuf,
    /// Run seed; drives the baseline's polling direction order.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub baseline: CoordinateSearch,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub mesh: MeshDensity,
    #[serde(default)]
    pub models: ModelSet,
}

impl RunConfig {
    pub fn new(seed_design: DesignParams, run_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed_design,
            space: ParamSpace::default(),
            targets: SpecTargets::default(),
            backend: BackendConfig::Surrogate,
            agent: AgentChoice::Baseline,
            guidance: GuidanceMode::Quantitative,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            sweep: None,
            run_dir: run_dir.into(),
            seed: 0,
            baseline: CoordinateSearch::default(),
            llm: LlmConfig::default(),
            mesh: MeshDensity::Default,
            models: ModelSet::DriftDiffusion,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, OrchestratorError> {
        serde_json::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            OrchestratorError::Config(m) => OrchestratorError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn sweep(&self) -> SweepConfig {
        self.sweep.clone().unwrap_or_else(|| SweepConfig::idvg(self.targets.vdd))
    }

    pub fn baseline_search(&self) -> CoordinateSearch {
        CoordinateSearch { seed: self.seed, ..self.baseline.clone() }
    }

    pub fn check(&self) -> Result<(), OrchestratorError> {
        let cfg = |m: String| OrchestratorError::Config(m);
        if self.max_iterations < 1 {
            return Err(cfg("max_iterations must be at least 1".into()));
        }
        self.space.check().map_err(|e| cfg(e.to_string()))?;
        self.targets.check().map_err(|e| cfg(e.to_string()))?;
        if let Some(v) = validate(&self.seed_design, &self.space).violations().first() {
            return Err(cfg(format!("seed design: {v}")));
        }
        self.sweep().check().map_err(|e| cfg(e.to_string()))?;
        self.backend.check()?;
        if self.run_dir.as_os_str().is_empty() {
            return Err(cfg("run_dir is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub params: DesignParams,
    pub outcome: SimulationOutcome,
    /// Present exactly when the outcome converged.
    pub metrics: Option<PerformanceMetrics>,
    pub rationale: String,
    pub wall_time_s: f64,
    /// Proposed from the non-convergence recovery prompt.
    pub recovery: bool,
}

impl IterationRecord {
    pub fn meets_all(&self) -> bool {
        self.metrics.as_ref().is_some_and(PerformanceMetrics::meets_all)
    }

    pub fn score(&self, targets: &SpecTargets) -> Option<f64> {
        self.metrics.as_ref().map(|m| score(&m.metrics, targets))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum Termination {
    Success,
    Budget,
    /// The agent had nothing left to propose.
    AgentExhausted(String),
    /// The agent failed and no fallback applied.
    AgentFailed(String),
}

impl Termination {
    /// Process exit code: 0 success, 2 stopped short of the targets, 1 failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Success => 0,
            Termination::Budget | Termination::AgentExhausted(_) => 2,
            Termination::AgentFailed(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub termination: Termination,
    pub iterations: usize,
    /// Index of the converged record with the lowest score.
    pub best_index: Option<usize>,
    pub trajectory: Vec<IterationRecord>,
}

impl RunReport {
    pub fn best(&self) -> Option<&IterationRecord> {
        self.best_index.map(|i| &self.trajectory[i])
    }

    pub fn seed_record(&self) -> Option<&IterationRecord> {
        self.trajectory.first()
    }
}

/// Index of the converged record with the lowest score; ties go to the earliest.
pub fn best_index(history: &[IterationRecord], targets: &SpecTargets) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in history {
        if let Some(s) = r.score(targets) {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((r.index, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Options that do not belong in the persisted config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Serve chat responses from this transcript instead of the network.
    pub replay: Option<PathBuf>,
}

fn make_transport(cfg: &RunConfig, opts: &RunOptions) -> Result<Box<dyn ChatTransport>, OrchestratorError> {
    let transcript = cfg.run_dir.join(TRANSCRIPT_FILE);
    if let Some(path) = &opts.replay {
        let replay = ReplayTransport::from_file(path).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        let same = path.canonicalize().ok() == transcript.canonicalize().ok();
        return Ok(if same { Box::new(replay) } else { Box::new(RecordingTransport::new(replay, transcript)) });
    }
    let http = HttpTransport::new(&cfg.llm.base_url, &cfg.llm.api_key_env, Duration::from_secs_f64(cfg.llm.timeout_s))
        .map_err(|e| OrchestratorError::Config(e.to_string()))?;
    Ok(Box::new(RecordingTransport::new(http, transcript)))
}

/// Builds the agent named by the config.
pub fn make_agent(cfg: &RunConfig, opts: &RunOptions) -> Result<Box<dyn Agent>, OrchestratorError> {
    Ok(match cfg.agent {
        AgentChoice::Baseline => Box::new(BaselineAgent::new(cfg.baseline_search())),
        AgentChoice::Llm | AgentChoice::LlmWithBaselineFallback => {
            Box::new(LlmAgent::new(make_transport(cfg, opts)?, cfg.llm.clone()))
        }
    })
}

/// Starts a fresh run in `cfg.run_dir`.
pub fn run_loop(cfg: &RunConfig) -> Result<RunReport, OrchestratorError> {
    run_loop_with(cfg, &RunOptions::default())
}

pub fn run_loop_with(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport, OrchestratorError> {
    cfg.check()?;
    let mut agent = make_agent(cfg, opts)?;
    run_loop_with_agent(cfg, agent.as_mut())
}

/// Starts a fresh run driven by a caller-supplied agent.
pub fn run_loop_with_agent(cfg: &RunConfig, agent: &mut dyn Agent) -> Result<RunReport, OrchestratorError> {
    cfg.check()?;
    let dir = &cfg.run_dir;
    if dir.join(TRAJECTORY_FILE).exists() {
        return Err(OrchestratorError::Config(format!(
            "{} already holds a trajectory; resume it instead",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let text = serde_json::to_string_pretty(cfg).map_err(|e| OrchestratorError::Config(e.to_string()))?;
    write_synced(&dir.join(CONFIG_FILE), text.as_bytes())?;
    drive(cfg, Vec::new(), agent)
}

/// Continues the run stored in `run_dir`, or returns its report if it finished.
pub fn resume(run_dir: &Path) -> Result<RunReport, OrchestratorError> {
    resume_with(run_dir, &RunOptions::default())
}

pub fn resume_with(run_dir: &Path, opts: &RunOptions) -> Result<RunReport, OrchestratorError> {
    if let Some(report) = read_report(run_dir)? {
        return Ok(report);
    }
    let cfg = load_run_config(run_dir)?;
    let mut agent = make_agent(&cfg, opts)?;
    resume_with_agent(run_dir, agent.as_mut())
}

pub fn resume_with_agent(run_dir: &Path, agent: &mut dyn Agent) -> Result<RunReport, OrchestratorError> {
    if let Some(report) = read_report(run_dir)? {
        return Ok(report);
    }
    let cfg = load_run_config(run_dir)?;
    let history = read_trajectory(&run_dir.join(TRAJECTORY_FILE))?;
    tracing::info!(records = history.len(), "resuming run");
    drive(&cfg, history, agent)
}

/// Loads `config.json`, pointing `run_dir` at the directory it was found in.
pub fn load_run_config(run_dir: &Path) -> Result<RunConfig, OrchestratorError> {
    let mut cfg = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    cfg.run_dir = run_dir.to_path_buf();
    cfg.check()?;
    Ok(cfg)
}

fn read_report(run_dir: &Path) -> Result<Option<RunReport>, OrchestratorError> {
    let path = run_dir.join(REPORT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))
}

/// Parses a trajectory file; a missing file is an empty trajectory.
pub fn read_trajectory(path: &Path) -> Result<Vec<IterationRecord>, OrchestratorError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out: Vec<IterationRecord> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let record: IterationRecord = serde_json::from_str(&line)
            .map_err(|e| OrchestratorError::CorruptTrajectory { line: i + 1, message: e.to_string() })?;
        if record.index != out.len() {
            return Err(OrchestratorError::CorruptTrajectory {
                line: i + 1,
                message: format!("expected index {}, found {}", out.len(), record.index),
            });
        }
        out.push(record);
    }
    Ok(out)
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), OrchestratorError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(path))
}

fn append_record(path: &Path, record: &IterationRecord) -> Result<(), OrchestratorError> {
    let line = serde_json::to_string(record).map_err(|e| OrchestratorError::Config(e.to_string()))?;
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").and_then(|_| f.flush()).and_then(|_| f.sync_data()).map_err(io_err(path))
}

/// Stage 1 and 2 for one design: decks, simulation, metrics, persistence.
fn evaluate(
    cfg: &RunConfig,
    index: usize,
    params: DesignParams,
    rationale: String,
    recovery: bool,
) -> Result<IterationRecord, OrchestratorError> {
    let start = Instant::now();
    let sweep = cfg.sweep();
    let deck_dir = cfg.run_dir.join("decks").join(format!("iter_{index}"));
    let deck = generate_deck_pair(&params, &sweep, cfg.mesh, cfg.models).map_err(BackendError::from)?;
    write_deck_pair(&deck, &deck_dir, DEFAULT_DECK_NAME).map_err(BackendError::from)?;

    let mut outcome = backend::run_in(&params, &sweep, &cfg.backend, &deck_dir)?;
    let mut metrics = None;
    if let SimulationOutcome::Converged { iv, bands } = &outcome {
        match extract_metrics(iv, cfg.targets.vdd) {
            Ok(m) => {
                let pm = PerformanceMetrics::new(m, &cfg.targets);
                let doc = package_results(&pm, iv, bands.as_ref());
                let results = cfg.run_dir.join("results");
                fs::create_dir_all(&results).map_err(io_err(&results))?;
                write_synced(&results.join(format!("iter_{index}.json")), doc.to_json_pretty().as_bytes())?;
                metrics = Some(pm);
            }
            Err(e) => {
                outcome = SimulationOutcome::NonConvergent { diagnostic: format!("metric extraction failed: {e}") };
            }
        }
    }
    let record = IterationRecord {
        index,
        params,
        outcome,
        metrics,
        rationale,
        wall_time_s: start.elapsed().as_secs_f64(),
        recovery,
    };
    append_record(&cfg.run_dir.join(TRAJECTORY_FILE), &record)?;
    tracing::info!(
        index,
        converged = record.outcome.is_converged(),
        meets_all = record.meets_all(),
        score = record.score(&cfg.targets),
        "iteration complete"
    );
    Ok(record)
}

fn finish(
    cfg: &RunConfig,
    history: Vec<IterationRecord>,
    termination: Termination,
) -> Result<RunReport, OrchestratorError> {
    let report = RunReport {
        iterations: history.len(),
        best_index: best_index(&history, &cfg.targets),
        termination,
        trajectory: history,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| OrchestratorError::Config(e.to_string()))?;
    write_synced(&cfg.run_dir.join(REPORT_FILE), text.as_bytes())?;
    Ok(report)
}

fn drive(
    cfg: &RunConfig,
    mut history: Vec<IterationRecord>,
    agent: &mut dyn Agent,
) -> Result<RunReport, OrchestratorError> {
    if history.is_empty() {
        history.push(evaluate(cfg, 0, cfg.seed_design.clone(), "seed design".into(), false)?);
    }
    let fallback_enabled = cfg.agent == AgentChoice::LlmWithBaselineFallback;
    let mut fallback = BaselineAgent::new(cfg.baseline_search());
    let mut failures = 0u32;
    loop {
        let last = history.last().expect("history holds the seed");
        if last.meets_all() {
            return finish(cfg, history, Termination::Success);
        }
        if history.len() >= cfg.max_iterations {
            return finish(cfg, history, Termination::Budget);
        }
        let (kind, prompt) = if last.outcome.is_converged() && last.metrics.is_some() {
            let opts = PromptOptions { include_bands: cfg.llm.include_bands };
            let p = build_prompt(&history, &cfg.space, &cfg.targets, cfg.guidance, opts)
                .map_err(|e| OrchestratorError::Config(e.to_string()))?;
            (PromptKind::Normal, p)
        } else {
            let p = recovery_prompt_for(&history, &cfg.seed_design, &cfg.space).unwrap_or_default();
            (PromptKind::Recovery, p)
        };
        let req = ProposalRequest {
            kind,
            prompt: &prompt,
            history: &history,
            seed_design: &cfg.seed_design,
            space: &cfg.space,
            targets: &cfg.targets,
            mode: cfg.guidance,
        };
        let proposal: Proposal = match agent.propose(&req) {
            Ok(p) => {
                failures = 0;
                p
            }
            Err(AgentError::ExhaustedSpace) => {
                return finish(cfg, history, Termination::AgentExhausted("step schedule exhausted".into()))
            }
            Err(AgentError::Stopped(why)) => return finish(cfg, history, Termination::AgentExhausted(why)),
            Err(e @ AgentError::Proposal { .. }) if fallback_enabled => {
                failures += 1;
                tracing::warn!(failures, error = %e, "chat agent produced no usable proposal");
                if failures < FALLBACK_AFTER {
                    continue;
                }
                failures = 0;
                match fallback.propose(&req) {
                    Ok(mut p) => {
                        p.rationale = format!("baseline fallback: {}", p.rationale);
                        p
                    }
                    Err(AgentError::ExhaustedSpace) => {
                        return finish(cfg, history, Termination::AgentExhausted("step schedule exhausted".into()))
                    }
                    Err(e) => return finish(cfg, history, Termination::AgentFailed(e.to_string())),
                }
            }
            Err(e) => return finish(cfg, history, Termination::AgentFailed(e.to_string())),
        };
        let index = history.len();
        let recovery = kind == PromptKind::Recovery;
        let record = evaluate(cfg, index, proposal.params, proposal.rationale, recovery)?;
        history.push(record);
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::postproc::Metrics;
    use crate::surrogate::{simulate_iv, IvCurve};

    pub fn converged_record(index: usize, p: &DesignParams) -> IterationRecord {
        let outcome = simulate_iv(p, &SweepConfig::idvg(0.65)).unwrap();
        let m = extract_metrics(outcome.iv().unwrap(), 0.65).unwrap();
        IterationRecord {
            index,
            params: p.clone(),
            outcome,
            metrics: Some(PerformanceMetrics::new(m, &SpecTargets::default())),
            rationale: String::new(),
            wall_time_s: 0.0,
            recovery: false,
        }
    }

    pub fn record_with_metrics(index: usize, p: &DesignParams, m: Metrics) -> IterationRecord {
        let iv = IvCurve::new(0.65, 300.0, vec![(0.0, m.ioff), (0.65, m.ion)]).unwrap();
        IterationRecord {
            index,
            params: p.clone(),
            outcome: SimulationOutcome::Converged { iv, bands: None },
            metrics: Some(PerformanceMetrics::new(m, &SpecTargets::default())),
            rationale: String::new(),
            wall_time_s: 0.0,
            recovery: false,
        }
    }

    pub fn failed_record(index: usize, p: &DesignParams, diagnostic: &str) -> IterationRecord {
        IterationRecord {
            index,
            params: p.clone(),
            outcome: SimulationOutcome::NonConvergent { diagnostic: diagnostic.into() },
            metrics: None,
            rationale: String::new(),
            wall_time_s: 0.0,
            recovery: false,
        }
    }
}
