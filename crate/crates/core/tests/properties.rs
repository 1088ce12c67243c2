use proptest::prelude::*;

use tcadflow_core::agent::score;
use tcadflow_core::deckgen::{
    generate_deck_pair, generate_sde, generate_sdevice, parse_deck, DeckKind, MeshDensity, ModelSet, SweepConfig,
};
use tcadflow_core::numfmt::{fmt_num, numeric_values};
use tcadflow_core::orchestrator::{self, RunConfig, Termination};
use tcadflow_core::params::{
    clamp, validate, DesignParams, Field, ParamSpace, ParamVector, SpecTargets, FIELD_COUNT,
};
use tcadflow_core::postproc::extract_metrics;
use tcadflow_core::surrogate::{band_diagram, simulate_iv, thermionic_swing_limit, Bias, IvCurve};

fn from_unit(u: &[f64]) -> DesignParams {
    let space = ParamSpace::default();
    let mut v = ParamVector([0.0; FIELD_COUNT]);
    for (i, f) in Field::ALL.into_iter().enumerate() {
        let b = space.bound(f);
        v[f] = b.from_coord(b.to_coord(b.lower) + u[i] * b.coord_span());
    }
    clamp(&v, &space).unwrap()
}

fn design() -> impl Strategy<Value = DesignParams> {
    prop::collection::vec(0.0..=1.0f64, FIELD_COUNT).prop_map(|u| from_unit(&u))
}

fn raw_vector() -> impl Strategy<Value = ParamVector> {
    prop::collection::vec(-1e21..1e21f64, FIELD_COUNT).prop_map(|v| ParamVector(v.try_into().unwrap()))
}

fn sweep() -> SweepConfig {
    SweepConfig::idvg(0.65)
}

proptest! {
    #[test]
    fn clamp_is_idempotent_and_lands_in_bounds(v in raw_vector()) {
        let space = ParamSpace::default();
        let once = clamp(&v, &space).unwrap();
        prop_assert!(validate(&once, &space).is_in_bounds());
        prop_assert_eq!(clamp(&once.to_vector(), &space).unwrap(), once);
    }

    #[test]
    fn sde_header_round_trips(p in design(), mesh in prop_oneof![Just(MeshDensity::Coarse), Just(MeshDensity::Default), Just(MeshDensity::Fine)]) {
        let parsed = parse_deck(&generate_sde(&p, mesh).unwrap(), DeckKind::Sde);
        prop_assert!(parsed.is_clean(), "{:?}", parsed.diagnostics);
        prop_assert_eq!(parsed.design_params().unwrap(), p);
    }

    #[test]
    fn sdevice_decks_are_clean(p in design(), quantum in any::<bool>()) {
        let models = if quantum { ModelSet::DdQuantum } else { ModelSet::DriftDiffusion };
        let parsed = parse_deck(&generate_sdevice(&p, &sweep(), models).unwrap(), DeckKind::Sdevice);
        prop_assert!(parsed.is_clean(), "{:?}", parsed.diagnostics);
        for s in ["Electrode", "Physics", "Plot", "Math", "Solve"] {
            prop_assert!(parsed.sections.iter().any(|x| x == s), "missing {}", s);
        }
    }

    #[test]
    fn deck_metadata_numbers_match_the_design(p in design()) {
        let deck = generate_deck_pair(&p, &sweep(), MeshDensity::Default, ModelSet::DriftDiffusion).unwrap();
        for f in Field::ALL {
            prop_assert_eq!(deck.metadata[f.name()].as_f64().unwrap(), p.get(f));
        }
    }

    #[test]
    fn formatted_numbers_parse_back_exactly(x in prop::num::f64::NORMAL) {
        prop_assert_eq!(numeric_values(&fmt_num(x)), vec![x]);
    }

    #[test]
    fn surrogate_curves_are_physical(p in design()) {
        let out = simulate_iv(&p, &sweep()).unwrap();
        if let Some(iv) = out.iv() {
            prop_assert!(iv.points.windows(2).all(|w| w[1].1 > w[0].1));
            if let Ok(m) = extract_metrics(iv, 0.65) {
                prop_assert!(m.ss >= thermionic_swing_limit(300.0) - 1e-9, "ss {}", m.ss);
            }
            let on = band_diagram(&p, Bias::On).unwrap();
            let off = band_diagram(&p, Bias::Off).unwrap();
            for d in [&on, &off] {
                prop_assert!(d.ec.iter().zip(&d.ev).all(|(c, v)| (c - v - 1.12).abs() < 1e-12));
            }
            prop_assert!(off.barrier_height() > on.barrier_height());
        }
    }

    #[test]
    fn longer_gates_never_raise_the_swing(p in design(), extra in 0.1..10.0f64) {
        let longer = DesignParams { gate_length: (p.gate_length + extra).min(30.0), ..p.clone() };
        let (Some(a), Some(b)) = (simulate_iv(&p, &sweep()).unwrap().iv().cloned(), simulate_iv(&longer, &sweep()).unwrap().iv().cloned()) else {
            return Ok(());
        };
        if let (Ok(ma), Ok(mb)) = (extract_metrics(&a, 0.65), extract_metrics(&b, 0.65)) {
            prop_assert!(mb.ss <= ma.ss + 1e-9, "{} -> {}", ma.ss, mb.ss);
        }
    }

    #[test]
    fn doubling_a_short_gate_lowers_the_swing(p in design()) {
        prop_assume!(p.gate_length <= 15.0);
        let doubled = DesignParams { gate_length: 2.0 * p.gate_length, ..p.clone() };
        let ss = |q: &DesignParams| simulate_iv(q, &sweep()).unwrap().iv().and_then(|iv| extract_metrics(iv, 0.65).ok()).map(|m| m.ss);
        if let (Some(a), Some(b)) = (ss(&p), ss(&doubled)) {
            prop_assert!(b < a, "{a} -> {b}");
        }
    }

    #[test]
    fn higher_workfunction_never_raises_leakage(p in design(), extra in 0.01..0.3f64) {
        let higher = DesignParams { gate_workfunction: (p.gate_workfunction + extra).min(4.9), ..p.clone() };
        let ioff = |q: &DesignParams| simulate_iv(q, &sweep()).unwrap().iv().map(|iv| iv.points[0].1);
        if let (Some(a), Some(b)) = (ioff(&p), ioff(&higher)) {
            prop_assert!(b <= a, "{a} -> {b}");
        }
    }

    #[test]
    fn pure_exponential_swing_is_recovered(s in 59.6..300.0f64, a in -14.0..-10.0f64, step_mv in 1.0..10.0f64) {
        let vdd = 0.65;
        let n = (vdd / (step_mv * 1e-3)).ceil() as usize;
        let pts = (0..=n).map(|k| {
            let vg = vdd * k as f64 / n as f64;
            (vg, 10f64.powf(a) * 10f64.powf(vg * 1e3 / s))
        }).collect();
        let iv = IvCurve::new(vdd, 300.0, pts).unwrap();
        let m = extract_metrics(&iv, vdd).unwrap();
        prop_assert!((m.ss - s).abs() < 0.1, "{} vs {}", m.ss, s);
        prop_assert!((m.onoff - (m.ion / m.ioff).log10()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn loop_invariants_hold_from_random_seeds(p in design(), seed in 0u64..1000, budget in 1usize..15) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { max_iterations: budget, seed, ..RunConfig::new(p, dir.path()) };
        let t = SpecTargets::default();
        let report = orchestrator::run_loop(&cfg).unwrap();
        prop_assert!(report.trajectory.len() <= budget);
        prop_assert_eq!(report.iterations, report.trajectory.len());
        let mut best = f64::INFINITY;
        for (i, r) in report.trajectory.iter().enumerate() {
            prop_assert_eq!(r.index, i);
            prop_assert_eq!(r.metrics.is_some(), r.outcome.is_converged());
            if i > 0 {
                prop_assert_eq!(r.recovery, !report.trajectory[i - 1].outcome.is_converged());
            }
            if let Some(m) = &r.metrics {
                best = best.min(score(&m.metrics, &t));
            }
        }
        if let Some(b) = report.best() {
            prop_assert_eq!(b.score(&t), Some(best));
        }
        if report.termination == Termination::Success {
            prop_assert!(report.trajectory.last().unwrap().meets_all());
        }
    }
}
