//! CSV and SVG emission for trajectories, Id-Vg curves and band diagrams.

use std::fmt::Write as _;

use crate::orchestrator::IterationRecord;
use crate::params::SpecTargets;
use crate::surrogate::{BandDiagram, BandPair, IvCurve};

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 60.0;

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One row per iteration; metric cells are empty for non-convergent iterations.
pub fn trajectory_csv(records: &[IterationRecord]) -> String {
    let mut s = String::from("iteration,ss_mv_dec,ioff_a_per_um,ion_a_per_um,onoff_log10,converged,recovery\n");
    for r in records {
        let m = r.metrics.as_ref().map(|m| m.metrics);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.index,
            num(m.map(|m| m.ss)),
            num(m.map(|m| m.ioff)),
            num(m.map(|m| m.ion)),
            num(m.map(|m| m.onoff)),
            r.outcome.is_converged() && m.is_some(),
            r.recovery
        );
    }
    s
}

pub fn iv_csv(iv: &IvCurve) -> String {
    iv.to_csv()
}

pub fn bands_csv(bands: &BandPair) -> String {
    let mut s = String::from("bias,x,ec,ev,efn,efp\n");
    for (label, d) in [("on", &bands.on), ("off", &bands.off)] {
        for i in 0..d.position.len() {
            let _ = writeln!(s, "{label},{:e},{:e},{:e},{:e},{:e}", d.position[i], d.ec[i], d.ev[i], d.efn[i], d.efp[i]);
        }
    }
    s
}

/// Linear or log10 axis mapping into a panel.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let pad = (hi - lo) * 0.05;
        Self { lo: lo - pad, hi: hi + pad, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }
}

struct Panel {
    x0: f64,
    y0: f64,
    x: Axis,
    y: Axis,
}

impl Panel {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.x0 + MARGIN + self.x.frac(x) * (PANEL_W - 1.5 * MARGIN),
            self.y0 + MARGIN / 2.0 + (1.0 - self.y.frac(y)) * (PANEL_H - 1.5 * MARGIN),
        )
    }

    fn frame(&self, s: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, t) = (self.x0 + MARGIN, self.y0 + MARGIN / 2.0);
        let (w, h) = (PANEL_W - 1.5 * MARGIN, PANEL_H - 1.5 * MARGIN);
        let _ = writeln!(s, r#"<rect x="{l:.2}" y="{t:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{title}</text>"#, l + w / 2.0, t - 8.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#, l + w / 2.0, t + h + 32.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{ylabel}</text>"#,
            l - 40.0,
            t + h / 2.0,
            l - 40.0,
            t + h / 2.0
        );
        let fmt_tick = |a: &Axis, v: f64| if a.log { format!("1e{:.1}", v) } else { format!("{v:.3}") };
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, l - 4.0, t + h, fmt_tick(&self.y, self.y.lo));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, l - 4.0, t + 10.0, fmt_tick(&self.y, self.y.hi));
        let _ = writeln!(s, r#"<text x="{l:.2}" y="{:.2}" font-size="10">{}</text>"#, t + h + 14.0, fmt_tick(&self.x, self.x.lo));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, l + w, t + h + 14.0, fmt_tick(&self.x, self.x.hi));
    }

    fn polyline(&self, s: &mut String, class: &str, style: &str, pts: &[(f64, f64)]) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (a, b) = self.px(x, y);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline class="{class}" fill="none" {style} points="{}"/>"#, coords.join(" "));
    }
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    )
}

/// Four metric panels against iteration, each with its spec line. Runs of
/// convergent iterations are separate polylines, so failures show as gaps.
pub fn trajectory_svg(records: &[IterationRecord], targets: &SpecTargets) -> String {
    type Getter = fn(&crate::postproc::Metrics) -> f64;
    let panels: [(&str, &str, bool, f64, Getter); 4] = [
        ("SS", "mV/dec", false, targets.ss_max, |m| m.ss),
        ("Ioff", "A/um", true, targets.ioff_max, |m| m.ioff),
        ("Ion", "A/um", true, targets.ion_min, |m| m.ion),
        ("log10(Ion/Ioff)", "decades", false, targets.onoff_min, |m| m.onoff),
    ];
    let mut s = svg_open(2.0 * PANEL_W, 2.0 * PANEL_H);
    let n = records.len().max(1);
    for (k, (name, unit, log, spec, get)) in panels.into_iter().enumerate() {
        let values: Vec<Option<f64>> = records.iter().map(|r| r.metrics.as_ref().map(|m| get(&m.metrics))).collect();
        let y = Axis::fit(values.iter().flatten().copied().chain([spec]), log);
        let x = Axis { lo: -0.5, hi: n as f64 - 0.5, log: false };
        let panel = Panel { x0: (k % 2) as f64 * PANEL_W, y0: (k / 2) as f64 * PANEL_H, x, y };
        panel.frame(&mut s, name, "iteration", unit);
        panel.polyline(&mut s, "spec", r#"stroke="red" stroke-dasharray="6 4""#, &[(x.lo, spec), (x.hi, spec)]);
        let mut run: Vec<(f64, f64)> = Vec::new();
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(v) => run.push((i as f64, *v)),
                None if !run.is_empty() => {
                    panel.polyline(&mut s, "metric", r#"stroke="steelblue""#, &run);
                    run.clear();
                }
                None => {}
            }
        }
        if !run.is_empty() {
            panel.polyline(&mut s, "metric", r#"stroke="steelblue""#, &run);
        }
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = v {
                let (a, b) = panel.px(i as f64, *v);
                let _ = writeln!(s, r#"<circle class="point" cx="{a:.2}" cy="{b:.2}" r="3" fill="steelblue"/>"#);
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Id-Vg curve on a log current axis, one polyline vertex per sample.
pub fn iv_svg(iv: &IvCurve) -> String {
    let x = Axis::fit(iv.vg(), false);
    let y = Axis::fit(iv.id(), true);
    let panel = Panel { x0: 0.0, y0: 0.0, x, y };
    let mut s = svg_open(PANEL_W, PANEL_H);
    panel.frame(&mut s, &format!("Id-Vg at Vd = {} V", iv.vd), "Vg (V)", "Id (A/um, log)");
    panel.polyline(&mut s, "iv", r#"stroke="steelblue""#, &iv.points);
    s.push_str("</svg>\n");
    s
}

fn band_series(d: &BandDiagram, values: &[f64]) -> Vec<(f64, f64)> {
    d.position.iter().copied().zip(values.iter().copied()).collect()
}

/// ON and OFF band diagrams side by side: Ec/Ev as solid lines, quasi-Fermi
/// levels dashed.
pub fn bands_svg(bands: &BandPair) -> String {
    let all = |f: fn(&BandDiagram) -> &Vec<f64>| {
        f(&bands.on).iter().chain(f(&bands.off).iter()).copied().collect::<Vec<f64>>()
    };
    let ys: Vec<f64> = [all(|d| &d.ec), all(|d| &d.ev), all(|d| &d.efn), all(|d| &d.efp)].concat();
    let y = Axis::fit(ys.into_iter(), false);
    let mut s = svg_open(2.0 * PANEL_W, PANEL_H);
    for (k, (label, d)) in [("on", &bands.on), ("off", &bands.off)].into_iter().enumerate() {
        let x = Axis::fit(d.position.iter().copied(), false);
        let panel = Panel { x0: k as f64 * PANEL_W, y0: 0.0, x, y };
        panel.frame(&mut s, &format!("{} state", label.to_uppercase()), "position (um)", "energy (eV)");
        panel.polyline(&mut s, &format!("ec-{label}"), r#"stroke="black""#, &band_series(d, &d.ec));
        panel.polyline(&mut s, &format!("ev-{label}"), r#"stroke="black""#, &band_series(d, &d.ev));
        panel.polyline(&mut s, &format!("efn-{label}"), r#"stroke="blue" stroke-dasharray="4 3""#, &band_series(d, &d.efn));
        panel.polyline(&mut s, &format!("efp-{label}"), r#"stroke="red" stroke-dasharray="4 3""#, &band_series(d, &d.efp));
    }
    s.push_str("</svg>\n");
    s
}
