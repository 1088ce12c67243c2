//! Figure-of-merit extraction from Id-Vg curves and spec gating.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::SpecTargets;
use crate::surrogate::{BandPair, IvCurve};

pub const RESULT_SCHEMA_VERSION: &str = "1.0";
/// JSON schema of [`ResultDocument`].
pub const RESULT_SCHEMA: &str = include_str!("../schemas/result.schema.json");

/// Lower edge of the subthreshold window, as a multiple of Ioff.
pub const WINDOW_LOW_FACTOR: f64 = 3.0;
/// Upper edge of the subthreshold window, as a divisor of Ion.
pub const WINDOW_HIGH_DIVISOR: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("range error: {0}")]
    Range(String),
    #[error("degenerate curve: subthreshold window holds {0} points, need 3")]
    DegenerateCurve(usize),
    #[error("non-monotonic curve between vg={0} and vg={1}")]
    NonMonotonic(f64, f64),
}

/// Extracted figures of merit. Currents in A/µm, swing in mV/dec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ion: f64,
    pub ioff: f64,
    pub ss: f64,
    /// log10(ion / ioff)
    pub onoff: f64,
}

impl Metrics {
    pub fn from_currents(ion: f64, ioff: f64, ss: f64) -> Self {
        Self { ion, ioff, ss, onoff: (ion / ioff).log10() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecVerdicts {
    pub ss: bool,
    pub ioff: bool,
    pub ion: bool,
    pub onoff: bool,
    pub meets_all: bool,
}

/// Metrics together with their verdicts against a [`SpecTargets`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub verdicts: SpecVerdicts,
}

impl PerformanceMetrics {
    pub fn new(metrics: Metrics, targets: &SpecTargets) -> Self {
        Self { metrics, verdicts: check_spec(&metrics, targets) }
    }

    pub fn meets_all(&self) -> bool {
        self.verdicts.meets_all
    }
}

/// Current at `vg`, interpolated linearly in (vg, log10 id). Grid points are
/// returned bit-exactly; targets up to half a step beyond either end take the
/// end value.
fn current_at(iv: &IvCurve, vg: f64) -> Result<f64, MetricsError> {
    let pts = &iv.points;
    if let Some(&(_, id)) = pts.iter().find(|p| p.0 == vg) {
        return Ok(id);
    }
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    if vg < first.0 {
        let half = 0.5 * (pts[1].0 - first.0);
        return if first.0 - vg <= half {
            Ok(first.1)
        } else {
            Err(MetricsError::Range(format!("sweep starts at {} V, above {vg} V", first.0)))
        };
    }
    if vg > last.0 {
        let half = 0.5 * (last.0 - pts[pts.len() - 2].0);
        return if vg - last.0 <= half {
            Ok(last.1)
        } else {
            Err(MetricsError::Range(format!("sweep ends at {} V, below {vg} V", last.0)))
        };
    }
    let i = pts.partition_point(|p| p.0 < vg);
    let (a, b) = (pts[i - 1], pts[i]);
    let t = (vg - a.0) / (b.0 - a.0);
    let log = a.1.log10() + t * (b.1.log10() - a.1.log10());
    Ok(10f64.powf(log))
}

/// Extracts Ion, Ioff, SS and log10 on/off ratio from a transfer curve.
///
/// SS is the minimum local swing over consecutive points whose currents both
/// lie in `[3·Ioff, Ion/30]`.
pub fn extract_metrics(iv: &IvCurve, vdd: f64) -> Result<Metrics, MetricsError> {
    if iv.points.len() < 2 {
        return Err(MetricsError::Range("curve has fewer than two points".into()));
    }
    if (iv.vd - vdd).abs() > 1e-9 * vdd.abs().max(1.0) {
        return Err(MetricsError::Range(format!("curve drain bias {} V differs from vdd {vdd} V", iv.vd)));
    }
    let ioff = current_at(iv, 0.0)?;
    let ion = current_at(iv, vdd)?;

    let lo = WINDOW_LOW_FACTOR * ioff;
    let hi = ion / WINDOW_HIGH_DIVISOR;
    let inside = |id: f64| id >= lo && id <= hi;
    let count = iv.points.iter().filter(|p| inside(p.1)).count();
    if count < 3 {
        return Err(MetricsError::DegenerateCurve(count));
    }
    let mut ss = f64::INFINITY;
    for w in iv.points.windows(2) {
        let ((v0, i0), (v1, i1)) = (w[0], w[1]);
        if !(inside(i0) && inside(i1)) {
            continue;
        }
        let swing = (v1 - v0) / (i1.log10() - i0.log10()) * 1e3;
        if !swing.is_finite() || swing <= 0.0 {
            return Err(MetricsError::NonMonotonic(v0, v1));
        }
        ss = ss.min(swing);
    }
    if !ss.is_finite() {
        return Err(MetricsError::DegenerateCurve(count));
    }
    Ok(Metrics::from_currents(ion, ioff, ss))
}

/// Inclusive comparison of each metric against its target.
pub fn check_spec(m: &Metrics, t: &SpecTargets) -> SpecVerdicts {
    let ss = m.ss <= t.ss_max;
    let ioff = m.ioff <= t.ioff_max;
    let ion = m.ion >= t.ion_min;
    let onoff = m.onoff >= t.onoff_min;
    SpecVerdicts { ss, ioff, ion, onoff, meets_all: ss && ioff && ion && onoff }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub vd: f64,
    pub temperature: f64,
    pub vg: Vec<f64>,
    pub id: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub barrier_height_ev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandsSummary {
    pub on: BandSummary,
    pub off: BandSummary,
}

/// Versioned JSON result handed to the reasoning stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub schema_version: String,
    pub ion_a_per_um: f64,
    pub ioff_a_per_um: f64,
    pub ss_mv_dec: f64,
    pub onoff_log10: f64,
    pub verdicts: SpecVerdicts,
    pub iv: CurveData,
    pub bands: Option<BandsSummary>,
}

impl ResultDocument {
    pub fn metrics(&self) -> Metrics {
        Metrics { ion: self.ion_a_per_um, ioff: self.ioff_a_per_um, ss: self.ss_mv_dec, onoff: self.onoff_log10 }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("result document serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn package_results(m: &PerformanceMetrics, iv: &IvCurve, bands: Option<&BandPair>) -> ResultDocument {
    ResultDocument {
        schema_version: RESULT_SCHEMA_VERSION.to_string(),
        ion_a_per_um: m.metrics.ion,
        ioff_a_per_um: m.metrics.ioff,
        ss_mv_dec: m.metrics.ss,
        onoff_log10: m.metrics.onoff,
        verdicts: m.verdicts,
        iv: CurveData {
            vd: iv.vd,
            temperature: iv.temperature,
            vg: iv.vg().collect(),
            id: iv.id().collect(),
        },
        bands: bands.map(|b| BandsSummary {
            on: BandSummary { barrier_height_ev: b.on.barrier_height() },
            off: BandSummary { barrier_height_ev: b.off.barrier_height() },
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_curve(a: f64, s_mv: f64, vdd: f64, n: usize) -> IvCurve {
        let pts = (0..=n)
            .map(|i| {
                let vg = if i == n { vdd } else { vdd * i as f64 / n as f64 };
                (vg, a * 10f64.powf(vg / (s_mv * 1e-3)))
            })
            .collect();
        IvCurve::new(vdd, 300.0, pts).unwrap()
    }

    #[test]
    fn onoff_matches_table_columns() {
        let after = Metrics::from_currents(2.31e-3, 8.26e-9, 60.38);
        assert!((after.onoff - 5.45).abs() <= 0.01);
        let before = Metrics::from_currents(4.23e-3, 3.40e-5, 286.72);
        assert!((before.onoff - 2.10).abs() <= 0.01);
    }

    #[test]
    fn pure_exponential_gives_exact_swing() {
        let iv = exp_curve(1e-12, 60.0, 0.30, 60);
        let m = extract_metrics(&iv, 0.30).unwrap();
        assert!((m.ss - 60.0).abs() < 0.1, "{}", m.ss);
    }

    #[test]
    fn grid_points_are_returned_bit_exactly() {
        let iv = exp_curve(3.3e-11, 75.0, 0.65, 65);
        let m = extract_metrics(&iv, 0.65).unwrap();
        assert_eq!(m.ioff.to_bits(), iv.points[0].1.to_bits());
        assert_eq!(m.ion.to_bits(), iv.points[65].1.to_bits());
        assert!((m.onoff - (m.ion / m.ioff).log10()).abs() < 1e-9);
    }

    #[test]
    fn off_grid_bias_interpolates_in_log_space() {
        let pts = vec![(-0.01, 1e-10), (0.01, 1e-8), (0.2, 1e-6), (0.3, 1e-5), (0.4, 1e-4), (0.5, 1e-3)];
        let iv = IvCurve::new(0.5, 300.0, pts).unwrap();
        assert!((current_at(&iv, 0.0).unwrap() / 1e-9 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_sweep_is_range_error() {
        let iv = exp_curve(1e-12, 60.0, 0.30, 30);
        assert!(matches!(extract_metrics(&iv, 0.65), Err(MetricsError::Range(_))));
    }

    #[test]
    fn flat_curve_is_degenerate() {
        let pts = (0..=10).map(|i| (i as f64 * 0.065, 1e-6 * (1.0 + i as f64 * 1e-3))).collect();
        let iv = IvCurve::new(0.65, 300.0, pts).unwrap();
        assert!(matches!(extract_metrics(&iv, 0.65), Err(MetricsError::DegenerateCurve(_))));
    }

    #[test]
    fn dip_inside_window_is_non_monotonic() {
        let mut iv = exp_curve(1e-12, 60.0, 0.30, 60);
        iv.points[20].1 = iv.points[19].1 * 0.99;
        assert!(matches!(extract_metrics(&iv, 0.30), Err(MetricsError::NonMonotonic(..))));
    }

    #[test]
    fn verdicts_follow_table() {
        let t = SpecTargets::default();
        let after = Metrics { ss: 60.38, ioff: 8.26e-9, ion: 2.31e-3, onoff: 5.45 };
        assert!(check_spec(&after, &t).meets_all);
        let before = Metrics { ss: 286.72, ioff: 3.40e-5, ion: 4.23e-3, onoff: 2.10 };
        let v = check_spec(&before, &t);
        assert_eq!((v.ss, v.ioff, v.ion, v.onoff, v.meets_all), (false, false, true, false, false));
        let edge = Metrics { ss: t.ss_max, ioff: t.ioff_max, ion: t.ion_min, onoff: t.onoff_min };
        assert!(check_spec(&edge, &t).meets_all);
    }

    #[test]
    fn package_round_trips_and_allows_missing_bands() {
        let iv = exp_curve(1e-12, 65.0, 0.65, 65);
        let m = PerformanceMetrics::new(extract_metrics(&iv, 0.65).unwrap(), &SpecTargets::default());
        let doc = package_results(&m, &iv, None);
        let text = doc.to_json_pretty();
        assert!(text.contains("\"bands\": null"));
        let back = ResultDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.metrics().ss.to_bits(), m.metrics.ss.to_bits());
    }
}
