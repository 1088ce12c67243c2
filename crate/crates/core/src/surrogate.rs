//! Analytic gate-all-around nanosheet-FET model.
//!
//! Maps a [`DesignParams`] to an Id-Vg transfer curve and ON/OFF band
//! diagrams. The functional forms capture short-channel swing degradation,
//! drain-induced barrier lowering, the Ion/Ioff trade-off and gate control of
//! the source-channel barrier. Coefficients live in [`SurrogateModel`]; the
//! defaults are produced by `examples/calibrate.rs`.
//!
//! Currents are reported per µm of gate-all-around effective width
//! (see [`DesignParams::effective_width_um`]).
//!
//! Non-convergence is rule based: designs that violate the aspect, oxide or
//! junction-contrast rules yield [`SimulationOutcome::NonConvergent`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deckgen::{SweepConfig, SweepKind};
use crate::params::DesignParams;

/// Boltzmann constant (eV/K).
pub const BOLTZMANN_EV: f64 = 8.617_333_262e-5;
/// Silicon bandgap (eV).
pub const SILICON_BANDGAP: f64 = 1.12;
/// Default lattice temperature (K).
pub const ROOM_TEMPERATURE: f64 = 300.0;
/// Source/drain extension length used for band diagrams (nm).
pub const SD_LENGTH_NM: f64 = 10.0;
/// Samples per band diagram.
pub const BAND_SAMPLES: usize = 241;

const EPS0_F_PER_CM: f64 = 8.854_187_812_8e-14;
const K_SIO2: f64 = 3.9;

/// Thermal voltage kT/q (V).
pub fn thermal_voltage(temperature: f64) -> f64 {
    BOLTZMANN_EV * temperature
}

/// Thermionic swing limit (kT/q)·ln10 in mV/dec.
pub fn thermionic_swing_limit(temperature: f64) -> f64 {
    thermal_voltage(temperature) * std::f64::consts::LN_10 * 1e3
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported sweep {0:?}: the surrogate only models IdVg")]
    UnsupportedSweep(SweepKind),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("parameters do not converge: {0}")]
    NonConvergentParams(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
}

/// Transfer characteristic at fixed drain bias. Currents in A/µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvCurve {
    pub vd: f64,
    pub temperature: f64,
    /// `(vg, id)` pairs, vg strictly increasing.
    pub points: Vec<(f64, f64)>,
}

impl IvCurve {
    /// Builds a curve, enforcing strictly increasing vg and finite positive id.
    pub fn new(vd: f64, temperature: f64, points: Vec<(f64, f64)>) -> Result<Self, SurrogateError> {
        if points.len() < 2 {
            return Err(SurrogateError::InvalidCurve("need at least two points".into()));
        }
        for (i, &(vg, id)) in points.iter().enumerate() {
            if !vg.is_finite() || !(id.is_finite() && id > 0.0) {
                return Err(SurrogateError::InvalidCurve(format!(
                    "point {i}: vg={vg}, id={id} must be finite with id > 0"
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(SurrogateError::InvalidCurve(format!(
                "vg not strictly increasing at point {}",
                i + 1
            )));
        }
        Ok(Self { vd, temperature, points })
    }

    pub fn vg(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn id(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// `vg,id` CSV with scientific-notation values.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vg,id\n");
        for &(vg, id) in &self.points {
            let _ = writeln!(s, "{vg:e},{id:e}");
        }
        s
    }

    /// Sidecar metadata for [`IvCurve::to_csv`].
    pub fn sidecar_json(&self, effective_width_um: Option<f64>) -> serde_json::Value {
        serde_json::json!({
            "vd": self.vd,
            "temperature": self.temperature,
            "w_eff_um": effective_width_um,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Bias {
    On,
    Off,
}

/// Band edges and quasi-Fermi levels along source-channel-drain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDiagram {
    pub bias: Bias,
    /// Position along transport (µm)
    pub position: Vec<f64>,
    pub ec: Vec<f64>,
    pub ev: Vec<f64>,
    pub efn: Vec<f64>,
    pub efp: Vec<f64>,
}

impl BandDiagram {
    /// Peak conduction-band energy relative to the source contact edge (eV).
    pub fn barrier_height(&self) -> f64 {
        let source = self.ec[0];
        self.ec.iter().fold(f64::NEG_INFINITY, |m, &e| m.max(e)) - source
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,ec,ev,efn,efp\n");
        for i in 0..self.position.len() {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{:e}",
                self.position[i], self.ec[i], self.ev[i], self.efn[i], self.efp[i]
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPair {
    pub on: BandDiagram,
    pub off: BandDiagram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SimulationOutcome {
    Converged {
        iv: IvCurve,
        /// Absent when the backend cannot produce band data.
        bands: Option<BandPair>,
    },
    NonConvergent { diagnostic: String },
}

impl SimulationOutcome {
    pub fn is_converged(&self) -> bool {
        matches!(self, SimulationOutcome::Converged { .. })
    }

    pub fn iv(&self) -> Option<&IvCurve> {
        match self {
            SimulationOutcome::Converged { iv, .. } => Some(iv),
            SimulationOutcome::NonConvergent { .. } => None,
        }
    }
}

/// Coefficient table of the analytic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    /// c1: scale length λ = c1·sqrt(t_sheet·eot) (nm)
    pub lambda_scale: f64,
    /// c2: short-channel swing coefficient in n = 1 + n_res + c2·exp(-L/2λ)
    pub swing_coeff: f64,
    /// Residual ideality excess of a long-channel device
    pub swing_residual: f64,
    /// c3: DIBL coefficient (V/V)
    pub dibl_coeff: f64,
    /// c4: threshold shift per decade of channel doping (V)
    pub doping_vth_slope: f64,
    /// Workfunction giving zero threshold at reference doping (eV)
    pub workfunction_ref: f64,
    /// Reference channel doping (cm^-3)
    pub doping_ref: f64,
    /// I0: injection-limited prefactor, in series with the drive term (A/µm)
    pub sub_prefactor: f64,
    /// k_on: drive-current coefficient (A/µm per F/cm² per V^α)
    pub drive_coeff: f64,
    /// α: overdrive exponent
    pub overdrive_exponent: f64,
    /// Inversion-layer thickness added to eot for C_inv (nm)
    pub inversion_offset_nm: f64,
    /// Gate length at which velocity saturation halves the drive (nm)
    pub saturation_length_nm: f64,
    /// Spacer length at which access resistance halves the drive (nm)
    pub spacer_resistance_nm: f64,
    /// c5: degeneracy Efn − Ec in n+ regions (eV)
    pub degeneracy_ev: f64,
    /// φ0: source-channel barrier at vg = Vth (eV)
    pub barrier_at_threshold: f64,
    /// c6: barrier lowering per volt of gate overdrive (eV/V)
    pub barrier_gate_coupling: f64,
    /// Residual ON-state barrier (eV)
    pub barrier_residual: f64,
    /// Smoothing width of the residual-barrier clamp (eV)
    pub barrier_softness: f64,
    /// Lattice temperature (K)
    pub temperature: f64,
}

impl Default for SurrogateModel {
    fn default() -> Self {
        Self {
            lambda_scale: 0.8,
            swing_coeff: 10.0,
            swing_residual: 0.005,
            dibl_coeff: 20.0,
            doping_vth_slope: 0.05,
            workfunction_ref: 4.25,
            doping_ref: 1e16,
            sub_prefactor: 1e-4,
            drive_coeff: 16000.0,
            overdrive_exponent: 2.0,
            inversion_offset_nm: 0.4,
            saturation_length_nm: 20.0,
            spacer_resistance_nm: 30.0,
            degeneracy_ev: 0.1,
            barrier_at_threshold: 0.2,
            barrier_gate_coupling: 0.9,
            barrier_residual: 0.05,
            barrier_softness: 0.02,
            temperature: ROOM_TEMPERATURE,
        }
    }
}

/// Closed-form electrostatics of one design at one drain bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Electrostatics {
    /// Scale length (nm)
    pub lambda_nm: f64,
    /// Swing ideality factor n
    pub ideality: f64,
    /// Subthreshold swing (V/dec)
    pub swing_v: f64,
    /// Threshold voltage including DIBL (V)
    pub vth: f64,
}

/// Reason a design falls outside the convergent region, if any.
pub fn non_convergence_reason(p: &DesignParams) -> Option<String> {
    let mut reasons = Vec::new();
    if p.gate_length < 2.0 * p.sheet_thickness {
        reasons.push(format!(
            "aspect rule: gate_length {} nm < 2 x sheet_thickness {} nm",
            p.gate_length, p.sheet_thickness
        ));
    }
    if p.eot < 0.4 {
        reasons.push(format!("thin-oxide rule: eot {} nm < 0.4 nm", p.eot));
    }
    if p.sd_doping / p.channel_doping < 10.0 {
        reasons.push(format!(
            "junction-contrast rule: sd_doping/channel_doping = {:.3} < 10",
            p.sd_doping / p.channel_doping
        ));
    }
    if reasons.is_empty() {
        None
    } else {
        Some(format!("solver divergence emulated: {}", reasons.join("; ")))
    }
}

fn check_structure(p: &DesignParams) -> Result<(), SurrogateError> {
    let v = p.structural_violations();
    if v.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        Err(SurrogateError::InvalidParams(msgs.join("; ")))
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Numerically safe ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl SurrogateModel {
    pub fn thermal_voltage(&self) -> f64 {
        thermal_voltage(self.temperature)
    }

    pub fn electrostatics(&self, p: &DesignParams, vd: f64) -> Electrostatics {
        let lambda_nm = self.lambda_scale * (p.sheet_thickness * p.eot).sqrt();
        let ideality =
            1.0 + self.swing_residual + self.swing_coeff * (-p.gate_length / (2.0 * lambda_nm)).exp();
        let swing_v = ideality * self.thermal_voltage() * std::f64::consts::LN_10;
        let dibl = self.dibl_coeff * (-p.gate_length / lambda_nm).exp() * vd;
        let vth = (p.gate_workfunction - self.workfunction_ref)
            + self.doping_vth_slope * (p.channel_doping / self.doping_ref).log10()
            - dibl;
        Electrostatics { lambda_nm, ideality, swing_v, vth }
    }

    /// Inversion capacitance per area (F/cm²).
    pub fn inversion_capacitance(&self, eot_nm: f64) -> f64 {
        K_SIO2 * EPS0_F_PER_CM / ((eot_nm + self.inversion_offset_nm) * 1e-7)
    }

    /// Drain current per µm of effective width (A/µm) at gate bias `vg`.
    ///
    /// Both regimes share the gate dependence `softplus((vg - Vth)/w)^α` with
    /// `w = α·n·kT/q`: deep below threshold it reduces to `10^((vg - Vth)/SS)`,
    /// far above it to `((vg - Vth)/w)^α`. The subthreshold prefactor and the
    /// drive coefficient act in series on that common shape, so the curve is
    /// smooth and strictly increasing, and its local swing,
    /// `n·(kT/q)·ln10·softplus(x)/logistic(x)`, depends only on `n` and
    /// `vg - Vth`. It never drops below `n·(kT/q)·ln10`.
    pub fn drain_current(&self, p: &DesignParams, es: &Electrostatics, vg: f64) -> f64 {
        let alpha = self.overdrive_exponent;
        let width = alpha * es.ideality * self.thermal_voltage();
        let shape = softplus((vg - es.vth) / width).powf(alpha);
        let vsat = 1.0
            / ((1.0 + p.gate_length / self.saturation_length_nm)
                * (1.0 + p.spacer_length / self.spacer_resistance_nm));
        let drive = self.drive_coeff * self.inversion_capacitance(p.eot) * vsat * width.powf(alpha);
        shape / (1.0 / self.sub_prefactor + 1.0 / drive)
    }

    pub fn simulate_iv(
        &self,
        p: &DesignParams,
        sweep: &SweepConfig,
    ) -> Result<SimulationOutcome, SurrogateError> {
        check_structure(p)?;
        if sweep.sweep_kind != SweepKind::IdVg {
            return Err(SurrogateError::UnsupportedSweep(sweep.sweep_kind));
        }
        sweep.check().map_err(|e| SurrogateError::InvalidSweep(e.to_string()))?;
        if let Some(reason) = non_convergence_reason(p) {
            return Ok(SimulationOutcome::NonConvergent { diagnostic: reason });
        }
        let vd = sweep.fixed_bias;
        let es = self.electrostatics(p, vd);
        let points = sweep
            .grid()
            .into_iter()
            .map(|vg| (vg, self.drain_current(p, &es, vg)))
            .collect();
        let iv = IvCurve::new(vd, self.temperature, points)?;
        let bands = BandPair {
            on: self.band_diagram_at(p, Bias::On, vd)?,
            off: self.band_diagram_at(p, Bias::Off, vd)?,
        };
        Ok(SimulationOutcome::Converged { iv, bands: Some(bands) })
    }

    /// Source-channel barrier (eV) at a given gate bias, softly clamped below
    /// at the residual ON-state barrier.
    pub fn barrier(&self, vth: f64, vg: f64) -> f64 {
        let raw = self.barrier_at_threshold - self.barrier_gate_coupling * (vg - vth);
        let excess = raw - self.barrier_residual;
        self.barrier_residual + self.barrier_softness * softplus(excess / self.barrier_softness)
    }

    /// Band diagram at ON (vg = vd = vdd) or OFF (vg = 0, vd = vdd) bias.
    pub fn band_diagram(&self, p: &DesignParams, bias: Bias) -> Result<BandDiagram, SurrogateError> {
        self.band_diagram_at(p, bias, p.vdd)
    }

    fn band_diagram_at(
        &self,
        p: &DesignParams,
        bias: Bias,
        vd: f64,
    ) -> Result<BandDiagram, SurrogateError> {
        check_structure(p)?;
        if let Some(reason) = non_convergence_reason(p) {
            return Err(SurrogateError::NonConvergentParams(reason));
        }
        let es = self.electrostatics(p, vd);
        let vg = match bias {
            Bias::On => vd,
            Bias::Off => 0.0,
        };
        let phi_b = self.barrier(es.vth, vg);

        let x_source = SD_LENGTH_NM;
        let x_drain = SD_LENGTH_NM + 2.0 * p.spacer_length + p.gate_length;
        let total = x_drain + SD_LENGTH_NM;
        let half_width = es.lambda_nm.min(SD_LENGTH_NM / 2.0).min((x_drain - x_source) / 4.0);
        let rise = |x: f64, x0: f64| smoothstep((x - (x0 - half_width)) / (2.0 * half_width));

        let n = BAND_SAMPLES;
        let mut d = BandDiagram {
            bias,
            position: Vec::with_capacity(n),
            ec: Vec::with_capacity(n),
            ev: Vec::with_capacity(n),
            efn: Vec::with_capacity(n),
            efp: Vec::with_capacity(n),
        };
        // Source electron quasi-Fermi level is the energy reference.
        let ec_source = -self.degeneracy_ev;
        for i in 0..n {
            let x = total * i as f64 / (n - 1) as f64;
            let up = rise(x, x_source);
            let down = rise(x, x_drain);
            let ec = ec_source + phi_b * (up - down) - vd * down;
            let efn = -vd * down;
            let efp = match bias {
                Bias::Off => efn,
                Bias::On => 0.0,
            };
            d.position.push(x * 1e-3);
            d.ec.push(ec);
            d.ev.push(ec - SILICON_BANDGAP);
            d.efn.push(efn);
            d.efp.push(efp);
        }
        Ok(d)
    }
}

/// Simulates an Id-Vg sweep with the calibrated default model.
pub fn simulate_iv(p: &DesignParams, sweep: &SweepConfig) -> Result<SimulationOutcome, SurrogateError> {
    SurrogateModel::default().simulate_iv(p, sweep)
}

/// Band diagram with the calibrated default model.
pub fn band_diagram(p: &DesignParams, bias: Bias) -> Result<BandDiagram, SurrogateError> {
    SurrogateModel::default().band_diagram(p, bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep() -> SweepConfig {
        SweepConfig::idvg(0.65)
    }

    #[test]
    fn thermionic_limit_value() {
        let limit = thermionic_swing_limit(300.0);
        assert!((limit - 59.526).abs() < 1e-3, "{limit}");
        assert!((thermal_voltage(300.0) - 0.025852).abs() < 1e-6);
    }

    #[test]
    fn aspect_rule_fires() {
        let p = DesignParams { gate_length: 4.0, sheet_thickness: 5.0, ..DesignParams::reference() };
        match simulate_iv(&p, &sweep()).unwrap() {
            SimulationOutcome::NonConvergent { diagnostic } => assert!(diagnostic.contains("aspect rule")),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn oxide_and_junction_rules_fire() {
        let thin = DesignParams { eot: 0.35, ..DesignParams::reference() };
        assert!(!simulate_iv(&thin, &sweep()).unwrap().is_converged());
        let flat = DesignParams { sd_doping: 5e16, ..DesignParams::reference() };
        assert!(!simulate_iv(&flat, &sweep()).unwrap().is_converged());
    }

    #[test]
    fn reference_converges_with_monotone_curve() {
        let out = simulate_iv(&DesignParams::reference(), &sweep()).unwrap();
        let iv = out.iv().expect("converged");
        assert_eq!(iv.points.len(), 66);
        assert!(iv.points.windows(2).all(|w| w[1].1 > w[0].1));
    }

    #[test]
    fn rejects_non_idvg_sweeps() {
        let s = SweepConfig::idvd(0.65, 0.65);
        assert_eq!(
            simulate_iv(&DesignParams::reference(), &s).unwrap_err(),
            SurrogateError::UnsupportedSweep(SweepKind::IdVd)
        );
    }

    #[test]
    fn band_gap_is_constant_and_fermi_levels_pin_contacts() {
        let p = DesignParams::reference();
        for bias in [Bias::On, Bias::Off] {
            let d = band_diagram(&p, bias).unwrap();
            assert!(d.ec.iter().zip(&d.ev).all(|(c, v)| (c - v - 1.12).abs() < 1e-12));
            assert!(d.position.windows(2).all(|w| w[1] > w[0]));
            let last = d.efn.len() - 1;
            assert!((d.efn[0] - d.efn[last] - p.vdd).abs() < 1e-12);
            assert!((d.ec[0] - d.efn[0] + 0.1).abs() < 1e-12);
        }
        let on = band_diagram(&p, Bias::On).unwrap();
        let last = on.efp.len() - 1;
        assert!((on.efp[last] - on.efn[last] - p.vdd).abs() < 1e-12);
    }

    #[test]
    fn off_barrier_exceeds_on_barrier() {
        let p = DesignParams::reference();
        let on = band_diagram(&p, Bias::On).unwrap().barrier_height();
        let off = band_diagram(&p, Bias::Off).unwrap().barrier_height();
        assert!(off > on, "off {off} on {on}");
    }

    #[test]
    fn band_diagram_refuses_non_convergent_designs() {
        let p = DesignParams { gate_length: 8.0, sheet_thickness: 5.0, ..DesignParams::reference() };
        assert!(matches!(
            band_diagram(&p, Bias::Off),
            Err(SurrogateError::NonConvergentParams(_))
        ));
    }

    #[test]
    fn deterministic() {
        let a = simulate_iv(&DesignParams::reference(), &sweep()).unwrap();
        let b = simulate_iv(&DesignParams::reference(), &sweep()).unwrap();
        assert_eq!(a, b);
    }
}
