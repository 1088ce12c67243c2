//! Prompt construction for the chat-completion agent.
//!
//! Numbers in prompts are formatted so that history metrics never print the
//! same token as a target numeral: swings carry two decimals, currents three
//! mantissa decimals, on-off ratios three decimals, and iterations are
//! labelled `iter_<i>`.

use std::fmt::Write as _;

use super::{AgentError, GuidanceMode};
use crate::numfmt::{fmt_num, fmt_sci, fmt_sci_prec};
use crate::orchestrator::IterationRecord;
use crate::params::{DesignParams, Field, ParamSpace, Scale, SpecTargets};
use crate::postproc::Metrics;
use crate::surrogate::SimulationOutcome;

/// Number of most recent iterations shown in a prompt.
pub const HISTORY_WINDOW: usize = 5;
/// Diagnostic lines kept in a recovery prompt.
pub const DIAGNOSTIC_TAIL_LINES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PromptOptions {
    /// Adds ON/OFF barrier heights of the latest converged design.
    pub include_bands: bool,
}

/// The four metric targets exactly as quantitative prompts print them.
pub fn target_numerals(t: &SpecTargets) -> [String; 4] {
    [fmt_num(t.ss_max), fmt_sci(t.ioff_max), fmt_sci(t.ion_min), format!("{:.2}", t.onoff_min)]
}

const ROLE: &str = "You are an expert in semiconductor device physics and TCAD-based design-technology \
co-optimization. You are tuning a gate-all-around nanosheet FET. Each round, the design you propose is \
turned into structure and device simulation scripts, simulated, and its figures of merit are reported \
back to you.";

const METRIC_DEFINITIONS: &str = "Figure-of-merit definitions:
- Ion (A/um): drain current at Vg = Vd = Vdd, normalized by the effective channel width. It measures \
drive strength; higher Ion means faster switching of the load.
- Ioff (A/um): drain current at Vg = 0 and Vd = Vdd. It measures leakage and static power; it rises \
when the source-channel barrier is weak or the threshold voltage is low.
- SS (mV/dec): subthreshold swing, the gate voltage needed to change the current by one decade below \
threshold. It measures switching sharpness and gate control of the channel; it cannot beat the \
thermionic limit kT/q ln(10) at room temperature and degrades as the gate gets short relative to the \
electrostatic scale length.
- log10(Ion/Ioff): decades between on and off current.";

fn contract() -> String {
    let keys: Vec<String> = Field::ALL.iter().map(|f| format!("\"{}\": <number>", f.name())).collect();
    format!(
        "Output format: reply with exactly one JSON object and nothing else of substance. It must have \
         exactly these keys, with plain numbers in the units of the parameter table (num_sheets is an \
         integer), plus a \"rationale\" string explaining the physics of your change:\n{{{}, \"rationale\": \"<text>\"}}",
        keys.join(", ")
    )
}

fn space_table(space: &ParamSpace) -> String {
    let mut s = String::from("Design parameters (name | unit | lower | upper | scale):\n");
    for f in Field::ALL {
        let b = space.bound(f);
        let scale = match (b.integer, b.scale) {
            (true, _) => "integer",
            (false, Scale::Linear) => "linear",
            (false, Scale::Log10) => "log",
        };
        let _ = writeln!(s, "- {} | {} | {} | {} | {}", f.name(), f.unit(), fmt_num(b.lower), fmt_num(b.upper), scale);
    }
    s.push_str("Constraint: vertical_pitch must exceed sheet_thickness.\n");
    s
}

fn params_json(p: &DesignParams) -> String {
    serde_json::to_string(p).unwrap_or_default()
}

fn params_json_pretty(p: &DesignParams) -> String {
    serde_json::to_string_pretty(p).unwrap_or_default()
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "SS = {:.2} mV/dec, Ioff = {} A/um, Ion = {} A/um, log10(Ion/Ioff) = {:.3}",
        m.ss,
        fmt_sci_prec(m.ioff, 3),
        fmt_sci_prec(m.ion, 3),
        m.onoff
    )
}

fn first_line(text: &str) -> &str {
    text.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim()
}

fn record_block(r: &IterationRecord) -> String {
    let mut s = format!("iter_{}", r.index);
    if r.recovery {
        s.push_str(" (recovery proposal)");
    }
    let _ = write!(s, ":\n  params: {}\n", params_json(&r.params));
    match (&r.outcome, &r.metrics) {
        (SimulationOutcome::Converged { .. }, Some(m)) => {
            let _ = writeln!(s, "  metrics: {}", metrics_line(&m.metrics));
        }
        (SimulationOutcome::Converged { .. }, None) => s.push_str("  metrics: unavailable\n"),
        (SimulationOutcome::NonConvergent { diagnostic }, _) => {
            let _ = writeln!(s, "  simulation did not converge: {}", first_line(diagnostic));
        }
    }
    s
}

fn gap_lines(m: &Metrics, t: &SpecTargets) -> String {
    let mut s = String::from("Current gaps of the latest design:\n");
    let ss_gap = m.ss - t.ss_max;
    if ss_gap > 0.0 {
        let _ = writeln!(s, "- SS: {ss_gap:.3} mV/dec above the target (reduce)");
    } else {
        let _ = writeln!(s, "- SS: meets the target with {:.3} mV/dec margin", -ss_gap);
    }
    let ioff_gap = (m.ioff / t.ioff_max).log10();
    if ioff_gap > 0.0 {
        let _ = writeln!(s, "- Ioff: {ioff_gap:.3} decades above the target (reduce)");
    } else {
        let _ = writeln!(s, "- Ioff: meets the target with {:.3} decades margin", -ioff_gap);
    }
    let ion_gap = (t.ion_min / m.ion).log10();
    if ion_gap > 0.0 {
        let _ = writeln!(s, "- Ion: {ion_gap:.3} decades below the target (increase)");
    } else {
        let _ = writeln!(s, "- Ion: meets the target with {:.3} decades margin", -ion_gap);
    }
    let onoff_gap = t.onoff_min - m.onoff;
    if onoff_gap > 0.0 {
        let _ = writeln!(s, "- log10(Ion/Ioff): {onoff_gap:.3} decades below the target (increase)");
    } else {
        let _ = writeln!(s, "- log10(Ion/Ioff): meets the target with {:.3} decades margin", -onoff_gap);
    }
    s
}

fn objective(mode: GuidanceMode, t: &SpecTargets, latest: &Metrics) -> String {
    match mode {
        GuidanceMode::Qualitative => "Objective: improve the device. Increase Ion, decrease Ioff, reduce SS, and \
            raise the on-off ratio. Propose the next design."
            .to_string(),
        GuidanceMode::Quantitative => {
            let [ss, ioff, ion, onoff] = target_numerals(t);
            let mut s = format!(
                "Objective: meet every design specification at Vdd = {} V and T = {} K:\n\
                 - SS <= {ss} mV/dec\n- Ioff <= {ioff} A/um\n- Ion >= {ion} A/um\n- log10(Ion/Ioff) >= {onoff}\n",
                fmt_num(t.vdd),
                fmt_num(t.temperature)
            );
            s.push_str(&gap_lines(latest, t));
            s.push_str("Propose the next design that closes these gaps.");
            s
        }
    }
}

/// Builds the per-iteration optimization prompt from the last
/// [`HISTORY_WINDOW`] records. The latest record must have converged.
pub fn build_prompt(
    history: &[IterationRecord],
    space: &ParamSpace,
    targets: &SpecTargets,
    mode: GuidanceMode,
    options: PromptOptions,
) -> Result<String, AgentError> {
    let last = history.last().ok_or(AgentError::EmptyHistory)?;
    let latest = match (&last.outcome, &last.metrics) {
        (SimulationOutcome::Converged { .. }, Some(m)) => m.metrics,
        _ => return Err(AgentError::InvalidHistory(format!("iter_{} has no metrics", last.index))),
    };
    let window = &history[history.len().saturating_sub(HISTORY_WINDOW)..];
    let mut s = String::new();
    let _ = writeln!(s, "{ROLE}\n");
    let _ = writeln!(s, "{}", space_table(space));
    let _ = writeln!(s, "Most recent iterations (oldest first):");
    for r in window {
        s.push_str(&record_block(r));
    }
    if options.include_bands {
        if let Some(bands) = history.iter().rev().find_map(|r| match &r.outcome {
            SimulationOutcome::Converged { bands: Some(b), .. } => Some(b),
            _ => None,
        }) {
            let _ = writeln!(
                s,
                "\nBand diagram of the latest converged design: channel barrier {:.4} eV in the OFF state and {:.4} eV in the ON state.",
                bands.off.barrier_height(),
                bands.on.barrier_height()
            );
        }
    }
    let _ = writeln!(s, "\n{METRIC_DEFINITIONS}\n");
    let _ = writeln!(s, "{}\n", objective(mode, targets, &latest));
    s.push_str(&contract());
    s.push('\n');
    Ok(s)
}

fn tail_lines(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

/// Builds the non-convergence recovery prompt. Without a convergent record,
/// the seed design stands in as the last good point.
pub fn build_recovery_prompt(
    last_good: Option<&IterationRecord>,
    seed: &DesignParams,
    failed: &DesignParams,
    diagnostic: &str,
    space: &ParamSpace,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{ROLE}\n");
    let _ = writeln!(s, "{}", space_table(space));
    s.push_str("The simulation of the most recent design failed to converge.\n\n");
    match last_good {
        Some(r) => {
            let _ = writeln!(s, "Most recent convergent design (iter_{}):", r.index);
            let _ = writeln!(s, "```json\n{}\n```", params_json_pretty(&r.params));
            if let Some(m) = &r.metrics {
                let _ = writeln!(s, "Its metrics: {}", metrics_line(&m.metrics));
            }
        }
        None => {
            let _ = writeln!(s, "No design has converged yet; the starting design was:");
            let _ = writeln!(s, "```json\n{}\n```", params_json_pretty(seed));
        }
    }
    let _ = writeln!(s, "\nFailed design:\n```json\n{}\n```", params_json_pretty(failed));
    let _ = writeln!(
        s,
        "\nSolver diagnostic (last {DIAGNOSTIC_TAIL_LINES} lines):\n```\n{}\n```\n",
        tail_lines(diagnostic, DIAGNOSTIC_TAIL_LINES)
    );
    s.push_str(
        "Non-convergence usually means the structure or bias point is physically implausible (for example \
         a gate much shorter than the channel thickness, an oxide too thin to mesh, or junctions without \
         enough doping contrast). Propose a design that lies between the failed design and the most \
         recent convergent design, moving away from whatever made the failed design extreme.\n\n",
    );
    s.push_str(&contract());
    s.push('\n');
    s
}

/// Recovery prompt for a history whose last record did not converge.
pub fn recovery_prompt_for(history: &[IterationRecord], seed: &DesignParams, space: &ParamSpace) -> Option<String> {
    let last = history.last()?;
    let SimulationOutcome::NonConvergent { diagnostic } = &last.outcome else {
        return None;
    };
    let last_good = history.iter().rev().find(|r| r.metrics.is_some());
    Some(build_recovery_prompt(last_good, seed, &last.params, diagnostic, space))
}
