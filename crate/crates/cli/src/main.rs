//! `tcadflow` command-line front end.
//!
//! Exit codes: 0 success, 1 error, 2 run stopped before meeting the targets,
//! 3 metrics extracted but the targets are not met.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tcadflow_core::backend::{parse_iv_file, IvFormat};
use tcadflow_core::deckgen::{
    build_corpus_with, expand_variants, generate_deck_pair, records_to_jsonl, write_deck_pair, CorpusOptions,
    ExpandStrategy, MeshDensity, ModelSet, QueryTemplates, SweepConfig, DEFAULT_DECK_NAME,
};
use tcadflow_core::orchestrator::{
    self, read_trajectory, IterationRecord, RunConfig, RunOptions, RunReport, TRAJECTORY_FILE,
};
use tcadflow_core::params::{DesignParams, Field, ParamSpace, SpecTargets};
use tcadflow_core::plot;
use tcadflow_core::postproc::{extract_metrics, PerformanceMetrics, ResultDocument};
use tcadflow_core::surrogate::{self, BandPair, Bias, IvCurve};

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_MET: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "tcadflow", version, about = "Closed-loop nanosheet-FET design optimization")]
struct Cli {
    /// Serve agent responses from a recorded transcript instead of the network
    #[arg(long, global = true, value_name = "TRANSCRIPT")]
    replay: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run (or resume) the optimization loop
    Optimize(OptimizeArgs),
    /// Simulate one design with the built-in surrogate and print the outcome
    Simulate(SimulateArgs),
    /// Extract Ion, Ioff, SS and on-off ratio from an Id-Vg file
    Metrics(MetricsArgs),
    /// Write the structure and device decks for one design
    Deckgen(DeckgenArgs),
    /// Build a JSONL corpus of (query, deck) records over design variants
    Corpus(CorpusArgs),
    /// Write CSV and SVG plot data for a run
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// Run configuration JSON; with --resume, a run directory also works
    #[arg(long)]
    config: PathBuf,
    /// Continue the run in the configured run directory
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Design parameters JSON
    #[arg(long)]
    params: PathBuf,
    /// Drain bias and sweep end (V); defaults to the target supply
    #[arg(long)]
    vdd: Option<f64>,
    /// Also compute metrics against these targets (JSON); defaults to the built-in targets
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IvFileFormat {
    Csv,
    Tabular,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Two-column vg,id file
    #[arg(long)]
    iv: PathBuf,
    /// Supply voltage (V)
    #[arg(long)]
    vdd: Option<f64>,
    /// Spec targets JSON
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: IvFileFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    Idvg,
    Idvd,
    Cv,
}

impl SweepArg {
    fn config(self, vdd: f64) -> SweepConfig {
        match self {
            SweepArg::Idvg => SweepConfig::idvg(vdd),
            SweepArg::Idvd => SweepConfig::idvd(vdd, vdd),
            SweepArg::Cv => SweepConfig::cv(vdd, vdd),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeshArg {
    Coarse,
    Default,
    Fine,
}

impl From<MeshArg> for MeshDensity {
    fn from(m: MeshArg) -> Self {
        match m {
            MeshArg::Coarse => MeshDensity::Coarse,
            MeshArg::Default => MeshDensity::Default,
            MeshArg::Fine => MeshDensity::Fine,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelsArg {
    DriftDiffusion,
    DdQuantum,
}

impl From<ModelsArg> for ModelSet {
    fn from(m: ModelsArg) -> Self {
        match m {
            ModelsArg::DriftDiffusion => ModelSet::DriftDiffusion,
            ModelsArg::DdQuantum => ModelSet::DdQuantum,
        }
    }
}

#[derive(Debug, Args)]
struct DeckOptions {
    #[arg(long, value_enum, default_value = "default")]
    mesh: MeshArg,
    #[arg(long, value_enum, default_value = "drift-diffusion")]
    models: ModelsArg,
    /// Supply voltage for the sweeps (V)
    #[arg(long, default_value_t = 0.65)]
    vdd: f64,
}

#[derive(Debug, Args)]
struct DeckgenArgs {
    /// Design parameters JSON
    #[arg(long)]
    params: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "idvg")]
    sweep: SweepArg,
    /// Deck file stem
    #[arg(long, default_value = DEFAULT_DECK_NAME)]
    name: String,
    #[command(flatten)]
    deck: DeckOptions,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Base design JSON; defaults to the reference design
    #[arg(long)]
    base: Option<PathBuf>,
    /// Parameter space JSON; defaults to the built-in space
    #[arg(long)]
    space: Option<PathBuf>,
    /// Grid axis as FIELD=LEVELS (repeatable)
    #[arg(long, value_name = "FIELD=LEVELS", conflicts_with = "lhs")]
    grid: Vec<String>,
    /// Latin-hypercube axis (repeatable); requires --samples
    #[arg(long, value_name = "FIELD", requires = "samples")]
    lhs: Vec<String>,
    /// Latin-hypercube sample count
    #[arg(long)]
    samples: Option<usize>,
    /// Sweep per variant (repeatable); defaults to idvg
    #[arg(long = "sweep", value_enum)]
    sweeps: Vec<SweepArg>,
    /// Query template JSON file (array of strings)
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    deck: DeckOptions,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotWhat {
    Trajectory,
    Iv,
    Bands,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Run directory
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_enum)]
    what: PlotWhat,
    /// Output directory; receives <what>.csv and <what>.svg
    #[arg(long)]
    out: PathBuf,
    /// Iteration for iv/bands plots; defaults to the best one
    #[arg(long)]
    iteration: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn load_targets(spec: Option<&Path>) -> Result<SpecTargets> {
    let t = match spec {
        Some(p) => read_json(p)?,
        None => SpecTargets::default(),
    };
    t.check()?;
    Ok(t)
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn fmt_opt(v: Option<f64>, f: fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "n/a".into())
}

/// Metric label, target, before, after, verdict.
type SummaryRow = (&'static str, String, Option<f64>, Option<f64>, Option<bool>);

fn summary_table(report: &RunReport, targets: &SpecTargets) -> String {
    let metrics = |r: Option<&IterationRecord>| r.and_then(|r| r.metrics.map(|m| m.metrics));
    let before = metrics(report.seed_record());
    let after = metrics(report.best());
    let verdicts = report.best().and_then(|r| r.metrics.map(|m| m.verdicts));
    let sci = |v: f64| format!("{v:.3e}");
    let fixed2 = |v: f64| format!("{v:.2}");
    let rows: [SummaryRow; 4] = [
        ("SS (mV/dec)", format!("<= {}", targets.ss_max), before.map(|m| m.ss), after.map(|m| m.ss), verdicts.map(|v| v.ss)),
        ("Ioff (A/um)", format!("<= {:e}", targets.ioff_max), before.map(|m| m.ioff), after.map(|m| m.ioff), verdicts.map(|v| v.ioff)),
        ("Ion (A/um)", format!(">= {:e}", targets.ion_min), before.map(|m| m.ion), after.map(|m| m.ion), verdicts.map(|v| v.ion)),
        ("log10(Ion/Ioff)", format!(">= {}", targets.onoff_min), before.map(|m| m.onoff), after.map(|m| m.onoff), verdicts.map(|v| v.onoff)),
    ];
    let mut out = format!(
        "{:<16} {:>12} {:>12} {:>12} {:>10}\n",
        "metric", "spec", "before", "after", "meets spec"
    );
    for (i, (name, spec, b, a, ok)) in rows.into_iter().enumerate() {
        let f = if i == 0 || i == 3 { fixed2 } else { sci };
        let verdict = match ok {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        out += &format!("{name:<16} {spec:>12} {:>12} {:>12} {verdict:>10}\n", fmt_opt(b, f), fmt_opt(a, f));
    }
    out += &format!(
        "termination: {:?}, iterations: {}, best iteration: {}\n",
        report.termination,
        report.iterations,
        report.best_index.map_or("none".to_string(), |i| i.to_string())
    );
    out
}

fn cmd_optimize(args: &OptimizeArgs, replay: Option<PathBuf>) -> Result<u8> {
    let opts = RunOptions { replay };
    let (report, targets) = if args.resume && args.config.is_dir() {
        let targets = orchestrator::load_run_config(&args.config)?.targets;
        (orchestrator::resume_with(&args.config, &opts)?, targets)
    } else {
        let cfg = RunConfig::load(&args.config)?;
        let report = match args.resume {
            true => orchestrator::resume_with(&cfg.run_dir, &opts)?,
            false => orchestrator::run_loop_with(&cfg, &opts)?,
        };
        (report, cfg.targets)
    };
    emit(&summary_table(&report, &targets))?;
    Ok(report.termination.exit_code() as u8)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8> {
    let params: DesignParams = read_json(&args.params)?;
    let targets = load_targets(args.spec.as_deref())?;
    let vdd = args.vdd.unwrap_or(targets.vdd);
    let outcome = surrogate::simulate_iv(&params, &SweepConfig::idvg(vdd))?;
    let metrics = outcome
        .iv()
        .and_then(|iv| extract_metrics(iv, vdd).ok())
        .map(|m| PerformanceMetrics::new(m, &targets));
    print_json(&serde_json::json!({ "outcome": outcome, "metrics": metrics }))?;
    Ok(0)
}

fn cmd_metrics(args: &MetricsArgs) -> Result<u8> {
    let targets = load_targets(args.spec.as_deref())?;
    let vdd = args.vdd.unwrap_or(targets.vdd);
    let text = fs::read_to_string(&args.iv).with_context(|| format!("cannot read {}", args.iv.display()))?;
    let format = match args.format {
        IvFileFormat::Csv => IvFormat::Csv,
        IvFileFormat::Tabular => IvFormat::Tabular,
    };
    let iv = parse_iv_file(&text, format, vdd, targets.temperature)
        .with_context(|| format!("cannot parse {}", args.iv.display()))?;
    let m = PerformanceMetrics::new(extract_metrics(&iv, vdd)?, &targets);
    print_json(&m)?;
    Ok(if m.meets_all() { 0 } else { EXIT_NOT_MET })
}

fn cmd_deckgen(args: &DeckgenArgs) -> Result<u8> {
    let params: DesignParams = read_json(&args.params)?;
    let sweep = args.sweep.config(args.deck.vdd);
    let deck = generate_deck_pair(&params, &sweep, args.deck.mesh.into(), args.deck.models.into())?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let files = write_deck_pair(&deck, &args.out, &args.name)?;
    emit(&format!("{}\n{}\n", files.sde.display(), files.sdevice.display()))?;
    Ok(0)
}

fn parse_field(name: &str) -> Result<Field> {
    Field::from_name(name).ok_or_else(|| anyhow!("unknown field {name:?}"))
}

fn cmd_corpus(args: &CorpusArgs) -> Result<u8> {
    let base = match &args.base {
        Some(p) => read_json(p)?,
        None => DesignParams::reference(),
    };
    let space: ParamSpace = match &args.space {
        Some(p) => read_json(p)?,
        None => ParamSpace::default(),
    };
    let strategy = if !args.lhs.is_empty() {
        ExpandStrategy::LatinHypercube {
            axes: args.lhs.iter().map(|f| parse_field(f)).collect::<Result<_>>()?,
            n: args.samples.unwrap_or(0),
            seed: args.seed,
        }
    } else {
        let axes = args
            .grid
            .iter()
            .map(|spec| {
                let (f, n) = spec.split_once('=').ok_or_else(|| anyhow!("expected FIELD=LEVELS, got {spec:?}"))?;
                Ok((parse_field(f)?, n.parse::<usize>().with_context(|| format!("bad level count in {spec:?}"))?))
            })
            .collect::<Result<Vec<_>>>()?;
        ExpandStrategy::Grid { axes }
    };
    let variants = expand_variants(&base, &space, &strategy)?;
    let kinds = if args.sweeps.is_empty() { vec![SweepArg::Idvg] } else { args.sweeps.clone() };
    let sweeps: Vec<SweepConfig> = kinds.iter().map(|k| k.config(args.deck.vdd)).collect();
    let templates = match &args.templates {
        Some(p) => QueryTemplates { templates: read_json(p)? },
        None => QueryTemplates::default(),
    };
    let options = CorpusOptions { base, mesh: args.deck.mesh.into(), models: args.deck.models.into(), ..Default::default() };
    let records = build_corpus_with(&variants, &sweeps, &templates, args.seed, &options, None)?;
    let jsonl = records_to_jsonl(&records);
    match &args.out {
        Some(p) => fs::write(p, jsonl).with_context(|| format!("cannot write {}", p.display()))?,
        None => emit(&jsonl)?,
    }
    eprintln!("{} records", records.len());
    Ok(0)
}

fn pick_record<'a>(trajectory: &'a [IterationRecord], targets: &SpecTargets, iteration: Option<usize>) -> Result<&'a IterationRecord> {
    let index = match iteration {
        Some(i) => i,
        None => orchestrator::best_index(trajectory, targets).ok_or_else(|| anyhow!("run has no converged iteration"))?,
    };
    let record = trajectory.get(index).ok_or_else(|| anyhow!("run has no iteration {index}"))?;
    if !record.outcome.is_converged() {
        bail!("iteration {index} did not converge");
    }
    Ok(record)
}

fn cmd_plot(args: &PlotArgs) -> Result<u8> {
    let cfg = orchestrator::load_run_config(&args.run)?;
    let trajectory = read_trajectory(&args.run.join(TRAJECTORY_FILE))?;
    let (csv, svg) = match args.what {
        PlotWhat::Trajectory => (plot::trajectory_csv(&trajectory), plot::trajectory_svg(&trajectory, &cfg.targets)),
        PlotWhat::Iv => {
            let record = pick_record(&trajectory, &cfg.targets, args.iteration)?;
            let path = args.run.join("results").join(format!("iter_{}.json", record.index));
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            let doc = ResultDocument::from_json(&text).with_context(|| format!("invalid result {}", path.display()))?;
            let iv = IvCurve::new(doc.iv.vd, doc.iv.temperature, doc.iv.vg.into_iter().zip(doc.iv.id).collect())?;
            (plot::iv_csv(&iv), plot::iv_svg(&iv))
        }
        PlotWhat::Bands => {
            let record = pick_record(&trajectory, &cfg.targets, args.iteration)?;
            let bands = BandPair {
                on: surrogate::band_diagram(&record.params, Bias::On)?,
                off: surrogate::band_diagram(&record.params, Bias::Off)?,
            };
            (plot::bands_csv(&bands), plot::bands_svg(&bands))
        }
    };
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let stem = match args.what {
        PlotWhat::Trajectory => "trajectory",
        PlotWhat::Iv => "iv",
        PlotWhat::Bands => "bands",
    };
    for (ext, body) in [("csv", csv), ("svg", svg)] {
        let path = args.out.join(format!("{stem}.{ext}"));
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        emit(&format!("{}\n", path.display()))?;
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Optimize(a) => cmd_optimize(a, cli.replay.clone()),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Deckgen(a) => cmd_deckgen(a),
        Command::Corpus(a) => cmd_corpus(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the generic failure code so 2 stays reserved for budget exhaustion.
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
