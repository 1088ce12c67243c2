//! Device command-file emitter.

use std::fmt::Write as _;

use super::{ensure_valid, header_bindings, DeckError, ModelSet, SweepConfig, SweepKind};
use crate::numfmt::fmt_num;
use crate::params::DesignParams;

fn quasistationary(s: &mut String, contact: &str, goal: f64, intervals: Option<usize>, ac: bool) {
    let step = match intervals {
        Some(n) => fmt_num(1.0 / n as f64),
        None => "0.05".to_string(),
    };
    let _ = writeln!(
        s,
        "  Quasistationary ( InitialStep = {step} MaxStep = {step} MinStep = 1e-5 \
         Goal {{ Name = \"{contact}\" Voltage = {} }} ) {{",
        fmt_num(goal)
    );
    match (intervals, ac) {
        (Some(n), true) => {
            let _ = writeln!(
                s,
                "    ACCoupled ( StartFrequency = 1e6 EndFrequency = 1e6 NumberOfPoints = 1 Decade \
                 Node ( \"source\" \"drain\" \"gate\" ) Exclude ( \"gate\" ) \
                 ACCompute ( Time = ( Range = ( 0 1 ) Intervals = {n} ) ) ) {{ Poisson Electron Hole }}"
            );
        }
        (Some(n), false) => {
            s.push_str("    Coupled { Poisson Electron Hole }\n");
            let _ = writeln!(s, "    CurrentPlot ( Time = ( Range = ( 0 1 ) Intervals = {n} ) )");
        }
        (None, _) => s.push_str("    Coupled { Poisson Electron Hole }\n"),
    }
    s.push_str("  }\n");
}

/// Emits the device command file. The Solve section encodes `sweep` as a
/// quasistationary ramp with `num_points - 1` plot intervals.
pub fn generate_sdevice(params: &DesignParams, sweep: &SweepConfig, models: ModelSet) -> Result<String, DeckError> {
    ensure_valid(params)?;
    sweep.check()?;
    let mut s = String::new();
    let _ = writeln!(s, "* Gate-all-around nanosheet FET device simulation: {} sweep", sweep.sweep_kind.label());
    for (field, value) in header_bindings(params) {
        let _ = writeln!(s, "#define {} {value}", field.name());
    }

    s.push_str(
        "\nFile {\n  Grid = \"nsfet_msh.tdr\"\n  Current = \"nsfet_des.plt\"\n  Plot = \"nsfet_des.tdr\"\n  Output = \"nsfet_des.log\"\n}\n",
    );

    s.push_str("\nElectrode {\n");
    s.push_str("  { Name = \"source\" Voltage = 0.0 }\n");
    s.push_str("  { Name = \"drain\" Voltage = 0.0 }\n");
    let _ = writeln!(
        s,
        "  {{ Name = \"gate\" Voltage = 0.0 WorkFunction = {} }}",
        fmt_num(params.gate_workfunction)
    );
    s.push_str("}\n");

    s.push_str("\nPhysics {\n");
    s.push_str("  EffectiveIntrinsicDensity ( OldSlotboom )\n");
    s.push_str("  Mobility ( DopingDependence HighFieldSaturation Enormal ( Lombardi ) )\n");
    s.push_str("  Recombination ( SRH ( DopingDependence ) )\n");
    if models == ModelSet::DdQuantum {
        s.push_str("  eQuantumPotential\n");
    }
    s.push_str("}\n");

    s.push_str(
        "\nPlot {\n  eDensity hDensity eCurrent hCurrent\n  ConductionBandEnergy ValenceBandEnergy\n  \
         eQuasiFermiEnergy hQuasiFermiEnergy\n  ElectricField Potential SpaceCharge\n}\n",
    );

    s.push_str(
        "\nMath {\n  Extrapolate\n  Derivatives\n  RelErrControl\n  Digits = 5\n  Notdamped = 50\n  \
         Iterations = 20\n  Method = Blocked\n  SubMethod = Super\n  ExitOnFailure\n}\n",
    );

    let intervals = sweep.num_points() - 1;
    s.push_str("\nSolve {\n");
    s.push_str("  Coupled ( Iterations = 100 ) { Poisson }\n");
    s.push_str("  Coupled { Poisson Electron Hole }\n");
    match sweep.sweep_kind {
        SweepKind::IdVg | SweepKind::Cv => {
            if sweep.fixed_bias != 0.0 {
                quasistationary(&mut s, "drain", sweep.fixed_bias, None, false);
            }
            if sweep.start != 0.0 {
                quasistationary(&mut s, "gate", sweep.start, None, false);
            }
            let ac = sweep.sweep_kind == SweepKind::Cv;
            quasistationary(&mut s, "gate", sweep.stop, Some(intervals), ac);
        }
        SweepKind::IdVd => {
            if sweep.fixed_bias != 0.0 {
                quasistationary(&mut s, "gate", sweep.fixed_bias, None, false);
            }
            if sweep.start != 0.0 {
                quasistationary(&mut s, "drain", sweep.start, None, false);
            }
            quasistationary(&mut s, "drain", sweep.stop, Some(intervals), false);
        }
    }
    s.push_str("}\n");
    Ok(s)
}
