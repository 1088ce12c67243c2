//! Simulation backends: the built-in surrogate or an external toolchain run
//! through shell command templates.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deckgen::{generate_deck_pair, write_deck_pair, DeckError, MeshDensity, ModelSet, SweepConfig};
use crate::params::DesignParams;
use crate::surrogate::{IvCurve, SimulationOutcome, SurrogateError, SurrogateModel, ROOM_TEMPERATURE};

/// Lines of tool output kept in a non-convergence diagnostic.
pub const DIAGNOSTIC_TAIL: usize = 50;
pub const DEFAULT_TIMEOUT_S: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend config error: {0}")]
    Config(String),
    #[error("invalid design: {0}")]
    InvalidParams(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl From<DeckError> for BackendError {
    fn from(e: DeckError) -> Self {
        match e {
            DeckError::Io { path, source } => BackendError::Io { path, source },
            DeckError::InvalidParams(m) => BackendError::InvalidParams(m),
            other => BackendError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvFormat {
    #[default]
    Csv,
    /// Whitespace-separated columns.
    Tabular,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

fn default_glob() -> String {
    "*.csv".into()
}

fn default_deck_name() -> String {
    crate::deckgen::DEFAULT_DECK_NAME.into()
}

/// External toolchain settings. Command templates are run with `sh -c` inside
/// the working directory after substituting `{deck}` (the step's deck file),
/// `{sde_deck}`, `{sdevice_deck}` and `{workdir}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    /// Structure step; omit when `device_command` runs the whole flow.
    #[serde(default)]
    pub structure_command: Option<String>,
    pub device_command: String,
    pub workdir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Pattern, relative to the working directory, of the I-V file the flow writes.
    #[serde(default = "default_glob")]
    pub iv_glob: String,
    #[serde(default)]
    pub iv_format: IvFormat,
    /// Extra environment, e.g. license server variables.
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub mesh: MeshDensity,
    #[serde(default)]
    pub models: ModelSet,
    #[serde(default = "default_deck_name")]
    pub deck_name: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Surrogate,
    External(ExternalConfig),
}

fn check_template(name: &str, t: &str) -> Result<(), BackendError> {
    if !t.contains("{workdir}") {
        return Err(BackendError::Config(format!("{name} lacks the {{workdir}} placeholder")));
    }
    if !["{deck}", "{sde_deck}", "{sdevice_deck}"].iter().any(|p| t.contains(p)) {
        return Err(BackendError::Config(format!("{name} lacks a {{deck}} placeholder")));
    }
    Ok(())
}

impl BackendConfig {
    pub fn check(&self) -> Result<(), BackendError> {
        let BackendConfig::External(ext) = self else { return Ok(()) };
        if !(ext.timeout_s.is_finite() && ext.timeout_s > 0.0) {
            return Err(BackendError::Config(format!("timeout must be positive, got {}", ext.timeout_s)));
        }
        if let Some(s) = &ext.structure_command {
            check_template("structure_command", s)?;
        }
        check_template("device_command", &ext.device_command)?;
        glob::Pattern::new(&ext.iv_glob).map_err(|e| BackendError::Config(format!("iv_glob: {e}")))?;
        if ext.deck_name.is_empty() || ext.deck_name.contains('/') {
            return Err(BackendError::Config("deck_name must be a plain file stem".into()));
        }
        Ok(())
    }
}

/// Runs one design through the configured backend. Solver failures of any kind
/// come back as [`SimulationOutcome::NonConvergent`].
pub fn run(params: &DesignParams, sweep: &SweepConfig, cfg: &BackendConfig) -> Result<SimulationOutcome, BackendError> {
    match cfg {
        BackendConfig::Surrogate => run_surrogate(params, sweep),
        BackendConfig::External(ext) => run_external(params, sweep, ext, &ext.workdir),
    }
}

/// [`run`] with the external working directory replaced by `workdir`.
pub fn run_in(
    params: &DesignParams,
    sweep: &SweepConfig,
    cfg: &BackendConfig,
    workdir: &Path,
) -> Result<SimulationOutcome, BackendError> {
    match cfg {
        BackendConfig::Surrogate => run_surrogate(params, sweep),
        BackendConfig::External(ext) => run_external(params, sweep, ext, workdir),
    }
}

fn run_surrogate(params: &DesignParams, sweep: &SweepConfig) -> Result<SimulationOutcome, BackendError> {
    SurrogateModel::default().simulate_iv(params, sweep).map_err(|e| match e {
        SurrogateError::InvalidParams(m) => BackendError::InvalidParams(m),
        other => BackendError::Config(other.to_string()),
    })
}

fn substitute(template: &str, deck: &Path, sde: &Path, sdevice: &Path, workdir: &Path) -> String {
    template
        .replace("{sde_deck}", &sde.display().to_string())
        .replace("{sdevice_deck}", &sdevice.display().to_string())
        .replace("{deck}", &deck.display().to_string())
        .replace("{workdir}", &workdir.display().to_string())
}

fn tail(lines: &[String], n: usize) -> String {
    lines[lines.len().saturating_sub(n)..].join("\n")
}

fn run_external(
    params: &DesignParams,
    sweep: &SweepConfig,
    ext: &ExternalConfig,
    workdir: &Path,
) -> Result<SimulationOutcome, BackendError> {
    BackendConfig::External(ext.clone()).check()?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BackendError::Io { path, source }
    };
    fs::create_dir_all(workdir).map_err(io_err(workdir))?;
    let workdir = workdir.canonicalize().map_err(io_err(workdir))?;
    let deck = generate_deck_pair(params, sweep, ext.mesh, ext.models)?;
    let files = write_deck_pair(&deck, &workdir, &ext.deck_name)?;

    let pattern = workdir.join(&ext.iv_glob).display().to_string();
    for stale in glob::glob(&pattern).map_err(|e| BackendError::Config(e.to_string()))?.flatten() {
        fs::remove_file(&stale).map_err(io_err(&stale))?;
    }

    let timeout = Duration::from_secs_f64(ext.timeout_s);
    let mut steps = Vec::new();
    if let Some(s) = &ext.structure_command {
        steps.push(("structure", substitute(s, &files.sde, &files.sde, &files.sdevice, &workdir)));
    }
    steps.push(("device", substitute(&ext.device_command, &files.sdevice, &files.sde, &files.sdevice, &workdir)));

    let mut transcript: Vec<String> = Vec::new();
    for (step, command) in steps {
        tracing::info!(step, %command, "running external step");
        let run = run_command(&command, &workdir, &ext.env, timeout).map_err(io_err(&workdir))?;
        transcript.push(format!("[{step}] $ {command}"));
        transcript.extend(run.stdout.iter().cloned());
        transcript.extend(run.stderr.iter().map(|l| format!("[stderr] {l}")));
        let failure = match run.status {
            None => Some(format!("{step} step timed out after {} s", ext.timeout_s)),
            Some(s) if !s.success() => Some(format!("{step} step failed with {s}")),
            Some(_) => None,
        };
        if let Some(msg) = failure {
            transcript.push(msg);
            return Ok(SimulationOutcome::NonConvergent { diagnostic: tail(&transcript, DIAGNOSTIC_TAIL) });
        }
    }

    let mut found: Vec<PathBuf> =
        glob::glob(&pattern).map_err(|e| BackendError::Config(e.to_string()))?.flatten().collect();
    found.sort();
    let Some(iv_path) = found.into_iter().next() else {
        transcript.push(format!("no I-V file matching {} was produced", ext.iv_glob));
        return Ok(SimulationOutcome::NonConvergent { diagnostic: tail(&transcript, DIAGNOSTIC_TAIL) });
    };
    let text = fs::read_to_string(&iv_path).map_err(io_err(&iv_path))?;
    match parse_iv_file(&text, ext.iv_format, sweep.fixed_bias, ROOM_TEMPERATURE) {
        Ok(iv) => Ok(SimulationOutcome::Converged { iv, bands: None }),
        Err(e) => {
            transcript.push(format!("{}: {e}", iv_path.display()));
            Ok(SimulationOutcome::NonConvergent { diagnostic: tail(&transcript, DIAGNOSTIC_TAIL) })
        }
    }
}

const POLL_INTERVAL: Duration = Duration::from_millis(20);

struct CommandRun {
    /// `None` on timeout.
    status: Option<ExitStatus>,
    stdout: Vec<String>,
    stderr: Vec<String>,
}

fn read_lines<R: Read + Send + 'static>(r: R) -> thread::JoinHandle<Vec<String>> {
    thread::spawn(move || {
        let mut out = Vec::new();
        let mut reader = BufReader::new(r);
        let mut buf = Vec::new();
        while matches!(reader.read_until(b'\n', &mut buf), Ok(n) if n > 0) {
            let line = String::from_utf8_lossy(&buf);
            out.push(line.trim_end_matches(['\n', '\r']).to_string());
            buf.clear();
        }
        out
    })
}

/// Runs `command` under `sh -c` in its own process group so a timeout can
/// kill everything it spawned.
fn run_command(
    command: &str,
    workdir: &Path,
    env: &BTreeMap<String, String>,
    timeout: Duration,
) -> io::Result<CommandRun> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(workdir)
        .envs(env)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;
    let out = read_lines(child.stdout.take().expect("piped stdout"));
    let err = read_lines(child.stderr.take().expect("piped stderr"));
    let deadline = Instant::now() + timeout;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break Some(s);
        }
        if Instant::now() >= deadline {
            let _ = Command::new("kill").args(["-s", "KILL", "--"]).arg(format!("-{}", child.id())).status();
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(POLL_INTERVAL);
    };
    Ok(CommandRun {
        status,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IvParseError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Parses two-column `vg, id` data. A non-numeric first row is taken as a
/// header; blank lines and `#` comments are skipped. Rows are sorted by vg.
pub fn parse_iv_file(text: &str, format: IvFormat, vd: f64, temperature: f64) -> Result<IvCurve, IvParseError> {
    let mut rows: Vec<(f64, f64, usize)> = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = match format {
            IvFormat::Csv => trimmed.split(',').map(str::trim).collect(),
            IvFormat::Tabular => trimmed.split_whitespace().collect(),
        };
        let first_row = !seen_content;
        seen_content = true;
        if cols.len() != 2 {
            return Err(IvParseError::Parse { line, message: format!("expected 2 columns, found {}", cols.len()) });
        }
        let parsed = (cols[0].parse::<f64>(), cols[1].parse::<f64>());
        match parsed {
            (Ok(vg), Ok(id)) => {
                if !(vg.is_finite() && id.is_finite()) {
                    return Err(IvParseError::Parse { line, message: "non-finite value".into() });
                }
                rows.push((vg, id, line));
            }
            _ if first_row => continue,
            _ => return Err(IvParseError::Parse { line, message: format!("non-numeric row: {trimmed}") }),
        }
    }
    if let Some(&(_, id, line)) = rows.iter().find(|r| r.1 <= 0.0) {
        return Err(IvParseError::Invariant(format!("line {line}: id = {id} is not positive")));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IvParseError::Invariant(format!(
            "duplicate vg = {} on lines {} and {}",
            w[0].0, w[0].2, w[1].2
        )));
    }
    IvCurve::new(vd, temperature, rows.into_iter().map(|(vg, id, _)| (vg, id)).collect())
        .map_err(|e| IvParseError::Invariant(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::simulate_iv;

    #[test]
    fn surrogate_delegates_exactly() {
        let p = DesignParams::reference();
        let sweep = SweepConfig::idvg(0.65);
        assert_eq!(run(&p, &sweep, &BackendConfig::Surrogate).unwrap(), simulate_iv(&p, &sweep).unwrap());
    }

    #[test]
    fn parses_two_point_csv() {
        let iv = parse_iv_file("vg,id\n0.0,1e-9\n0.65,1e-4", IvFormat::Csv, 0.65, 300.0).unwrap();
        assert_eq!(iv.points, vec![(0.0, 1e-9), (0.65, 1e-4)]);
    }

    #[test]
    fn sorts_rows_and_reads_tabular() {
        let a = parse_iv_file("0.65 1e-4\n0.0 1e-9\n0.3 1e-6\n", IvFormat::Tabular, 0.65, 300.0).unwrap();
        let b = parse_iv_file("0.0 1e-9\n0.3 1e-6\n0.65 1e-4\n", IvFormat::Tabular, 0.65, 300.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_zero_current_and_duplicates() {
        assert!(matches!(
            parse_iv_file("vg,id\n0.0,0\n0.65,1e-4", IvFormat::Csv, 0.65, 300.0),
            Err(IvParseError::Invariant(_))
        ));
        assert!(matches!(
            parse_iv_file("0.1,1e-9\n0.1,1e-8\n0.2,1e-7", IvFormat::Csv, 0.65, 300.0),
            Err(IvParseError::Invariant(_))
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_iv_file("vg,id\n0.0,1e-9\nabc,1e-4\n", IvFormat::Csv, 0.65, 300.0).unwrap_err();
        assert_eq!(e, IvParseError::Parse { line: 3, message: "non-numeric row: abc,1e-4".into() });
    }

    fn external(dir: &Path, device: &str) -> BackendConfig {
        BackendConfig::External(ExternalConfig {
            structure_command: None,
            device_command: device.into(),
            workdir: dir.to_path_buf(),
            timeout_s: 10.0,
            iv_glob: "*.csv".into(),
            iv_format: IvFormat::Csv,
            env: BTreeMap::new(),
            mesh: MeshDensity::Default,
            models: ModelSet::DriftDiffusion,
            deck_name: "nsfet".into(),
        })
    }

    #[test]
    fn failing_stub_is_non_convergent_with_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = external(dir.path(), "test -f {deck} && echo 'newton failed at step 12' >&2; cd {workdir}; exit 1");
        let out = run(&DesignParams::reference(), &SweepConfig::idvg(0.65), &cfg).unwrap();
        match out {
            SimulationOutcome::NonConvergent { diagnostic } => assert!(diagnostic.contains("newton failed at step 12")),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn csv_stub_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = external(
            dir.path(),
            "test -f {deck} && printf 'vg,id\\n0,1e-10\\n0.3,1e-7\\n0.65,1e-3\\n' > {workdir}/iv.csv",
        );
        let out = run(&DesignParams::reference(), &SweepConfig::idvg(0.65), &cfg).unwrap();
        let iv = out.iv().unwrap();
        assert_eq!(iv.points, vec![(0.0, 1e-10), (0.3, 1e-7), (0.65, 1e-3)]);
    }

    #[test]
    fn two_step_flow_runs_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let BackendConfig::External(mut ext) = external(
            dir.path(),
            "test -f {workdir}/mesh.done && test -f {deck} && printf '0 1e-9\\n0.65 1e-4\\n' > {workdir}/out.dat",
        ) else {
            unreachable!()
        };
        ext.structure_command = Some("test -f {deck} && touch {workdir}/mesh.done".into());
        ext.iv_glob = "*.dat".into();
        ext.iv_format = IvFormat::Tabular;
        let out = run(&DesignParams::reference(), &SweepConfig::idvg(0.65), &BackendConfig::External(ext)).unwrap();
        assert!(out.is_converged());
        assert!(dir.path().join("nsfet_dvs.cmd").exists());
    }

    #[test]
    fn timeout_is_non_convergent() {
        let dir = tempfile::tempdir().unwrap();
        let BackendConfig::External(mut ext) = external(dir.path(), "echo {deck} {workdir}; sleep 5") else {
            unreachable!()
        };
        ext.timeout_s = 0.3;
        let start = std::time::Instant::now();
        let out = run(&DesignParams::reference(), &SweepConfig::idvg(0.65), &BackendConfig::External(ext)).unwrap();
        assert!(start.elapsed() < Duration::from_secs(4));
        match out {
            SimulationOutcome::NonConvergent { diagnostic } => assert!(diagnostic.contains("timed out")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn diagnostic_keeps_last_fifty_lines() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = external(dir.path(), "cd {workdir}; for i in $(seq 1 200); do echo \"line $i\"; done; echo {deck}; exit 3");
        let SimulationOutcome::NonConvergent { diagnostic } =
            run(&DesignParams::reference(), &SweepConfig::idvg(0.65), &cfg).unwrap()
        else {
            panic!()
        };
        assert_eq!(diagnostic.lines().count(), DIAGNOSTIC_TAIL);
        assert!(diagnostic.contains("line 200"));
        assert!(!diagnostic.contains("line 150\n"));
    }

    #[test]
    fn templates_need_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(external(dir.path(), "run-device").check(), Err(BackendError::Config(_))));
        assert!(matches!(external(dir.path(), "run {deck}").check(), Err(BackendError::Config(_))));
        external(dir.path(), "run {deck} in {workdir}").check().unwrap();
    }
}
