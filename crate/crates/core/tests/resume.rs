//! Crash-resume equivalence against uninterrupted control runs.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use regex::Regex;
use tcadflow_core::agent::{
    Agent, AgentError, BaselineAgent, ChatRequest, ChatTransport, LlmAgent, Proposal, ProposalRequest,
    RecordingTransport, TransportError,
};
use tcadflow_core::orchestrator::{
    read_trajectory, resume, resume_with, resume_with_agent, run_loop, run_loop_with_agent, AgentChoice,
    OrchestratorError, RunConfig, RunOptions, Termination, TRANSCRIPT_FILE, TRAJECTORY_FILE,
};
use tcadflow_core::params::DesignParams;

fn normalized_trajectory(dir: &Path) -> String {
    let text = fs::read_to_string(dir.join(TRAJECTORY_FILE)).unwrap();
    Regex::new(r#""wall_time_s":[^,}]+"#).unwrap().replace_all(&text, r#""wall_time_s":0"#).into_owned()
}

/// Delegates to `inner` and panics on proposal number `crash_at`, emulating a kill.
struct Crashing<A> {
    inner: A,
    calls: usize,
    crash_at: usize,
}

impl<A: Agent> Agent for Crashing<A> {
    fn name(&self) -> &str {
        "crashing"
    }
    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Proposal, AgentError> {
        self.calls += 1;
        if self.calls == self.crash_at {
            panic!("simulated kill");
        }
        self.inner.propose(req)
    }
}

fn baseline_config(dir: &Path) -> RunConfig {
    RunConfig { max_iterations: 50, seed: 3, ..RunConfig::new(DesignParams::bad_seed(), dir) }
}

#[test]
fn killed_baseline_run_resumes_to_identical_trajectory() {
    let control = tempfile::tempdir().unwrap();
    let report = run_loop(&baseline_config(control.path())).unwrap();
    assert_eq!(report.termination, Termination::Success);
    let expected = normalized_trajectory(control.path());

    for k in [1, 5, report.iterations - 2] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = baseline_config(dir.path());
        let mut agent = Crashing { inner: BaselineAgent::new(cfg.baseline_search()), calls: 0, crash_at: k + 1 };
        let crashed = catch_unwind(AssertUnwindSafe(|| run_loop_with_agent(&cfg, &mut agent)));
        assert!(crashed.is_err());
        assert_eq!(read_trajectory(&dir.path().join(TRAJECTORY_FILE)).unwrap().len(), k + 1);

        let resumed = resume(dir.path()).unwrap();
        assert_eq!(resumed.termination, report.termination);
        assert_eq!(normalized_trajectory(dir.path()), expected, "killed after iteration {k}");
    }
}

#[test]
fn resuming_a_finished_run_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_loop(&baseline_config(dir.path())).unwrap();
    let before = fs::read(dir.path().join(TRAJECTORY_FILE)).unwrap();
    let again = resume(dir.path()).unwrap();
    assert_eq!(again, first);
    assert_eq!(fs::read(dir.path().join(TRAJECTORY_FILE)).unwrap(), before);
}

#[test]
fn truncated_last_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { max_iterations: 4, ..baseline_config(dir.path()) };
    let mut agent = Crashing { inner: BaselineAgent::new(cfg.baseline_search()), calls: 0, crash_at: 3 };
    let _ = catch_unwind(AssertUnwindSafe(|| run_loop_with_agent(&cfg, &mut agent)));
    let path = dir.path().join(TRAJECTORY_FILE);
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    fs::write(&path, &text[..text.len() - 20]).unwrap();
    match resume(dir.path()) {
        Err(OrchestratorError::CorruptTrajectory { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

/// Chat endpoint stand-in: walks a fixed list of designs, one per request.
struct ScriptedChat {
    designs: Vec<DesignParams>,
    calls: usize,
}

impl ChatTransport for ScriptedChat {
    fn complete(&mut self, _req: &ChatRequest) -> Result<String, TransportError> {
        let p = &self.designs[self.calls.min(self.designs.len() - 1)];
        self.calls += 1;
        let mut body = serde_json::to_value(p).unwrap();
        body["rationale"] = format!("step {}", self.calls).into();
        Ok(format!("Reasoning about the gaps.\n```json\n{body}\n```"))
    }
}

fn chat_script() -> Vec<DesignParams> {
    let seed = DesignParams::bad_seed();
    vec![
        DesignParams { gate_length: 12.0, ..seed.clone() },
        DesignParams { gate_length: 8.0, sheet_thickness: 5.0, ..seed.clone() },
        DesignParams { gate_length: 14.0, eot: 0.8, ..seed.clone() },
        DesignParams { gate_length: 14.0, eot: 0.7, gate_workfunction: 4.5, ..seed.clone() },
        DesignParams::reference(),
    ]
}

#[test]
fn killed_replay_run_resumes_to_identical_trajectory() {
    let control = tempfile::tempdir().unwrap();
    let cfg = RunConfig { agent: AgentChoice::Llm, ..baseline_config(control.path()) };
    let transcript = control.path().join(TRANSCRIPT_FILE);
    let chat = RecordingTransport::new(ScriptedChat { designs: chat_script(), calls: 0 }, &transcript);
    let mut agent = LlmAgent::new(Box::new(chat), cfg.llm.clone());
    let report = run_loop_with_agent(&cfg, &mut agent).unwrap();
    assert_eq!(report.termination, Termination::Success);
    assert!(report.trajectory.iter().any(|r| r.recovery));
    let expected = normalized_trajectory(control.path());

    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { run_dir: dir.path().to_path_buf(), ..cfg };
    let opts = RunOptions { replay: Some(transcript.clone()) };
    let replayed = tempfile::tempdir().unwrap();
    let full = RunConfig { run_dir: replayed.path().to_path_buf(), ..cfg.clone() };
    tcadflow_core::orchestrator::run_loop_with(&full, &opts).unwrap();
    assert_eq!(normalized_trajectory(replayed.path()), expected);

    let inner = tcadflow_core::orchestrator::make_agent(&cfg, &opts).unwrap();
    let mut crashing = Crashing { inner, calls: 0, crash_at: 3 };
    assert!(catch_unwind(AssertUnwindSafe(|| run_loop_with_agent(&cfg, &mut crashing))).is_err());
    resume_with(dir.path(), &opts).unwrap();
    assert_eq!(normalized_trajectory(dir.path()), expected);
}

#[test]
fn resume_with_an_explicit_agent_continues_the_index_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = baseline_config(dir.path());
    let mut agent = Crashing { inner: BaselineAgent::new(cfg.baseline_search()), calls: 0, crash_at: 3 };
    let _ = catch_unwind(AssertUnwindSafe(|| run_loop_with_agent(&cfg, &mut agent)));
    let mut fresh = BaselineAgent::new(cfg.baseline_search());
    let report = resume_with_agent(dir.path(), &mut fresh).unwrap();
    assert!(report.trajectory.iter().enumerate().all(|(i, r)| r.index == i));
}
