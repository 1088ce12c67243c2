//! Design-point types, parameter-space bounds and IRDS-style specification targets.
//!
//! A [`DesignParams`] is the canonical 11-field design vector for an n-type
//! nanosheet FET. [`ParamVector`] is the unconstrained numeric form used by
//! searchers and agent output before projection into a [`ParamSpace`].

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FIELD_COUNT: usize = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("unrepairable parameters: {0}")]
    Unrepairable(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

/// One design-vector component, in declared order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    GateLength,
    SheetWidth,
    SheetThickness,
    NumSheets,
    VerticalPitch,
    Eot,
    GateWorkfunction,
    ChannelDoping,
    SdDoping,
    SpacerLength,
    Vdd,
}

impl Field {
    pub const ALL: [Field; FIELD_COUNT] = [
        Field::GateLength,
        Field::SheetWidth,
        Field::SheetThickness,
        Field::NumSheets,
        Field::VerticalPitch,
        Field::Eot,
        Field::GateWorkfunction,
        Field::ChannelDoping,
        Field::SdDoping,
        Field::SpacerLength,
        Field::Vdd,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::GateLength => "gate_length",
            Field::SheetWidth => "sheet_width",
            Field::SheetThickness => "sheet_thickness",
            Field::NumSheets => "num_sheets",
            Field::VerticalPitch => "vertical_pitch",
            Field::Eot => "eot",
            Field::GateWorkfunction => "gate_workfunction",
            Field::ChannelDoping => "channel_doping",
            Field::SdDoping => "sd_doping",
            Field::SpacerLength => "spacer_length",
            Field::Vdd => "vdd",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Field::GateLength
            | Field::SheetWidth
            | Field::SheetThickness
            | Field::VerticalPitch
            | Field::Eot
            | Field::SpacerLength => "nm",
            Field::NumSheets => "",
            Field::GateWorkfunction => "eV",
            Field::ChannelDoping | Field::SdDoping => "cm^-3",
            Field::Vdd => "V",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One candidate nanosheet-FET design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignParams {
    /// Gate length (nm)
    pub gate_length: f64,
    /// Sheet width (nm)
    pub sheet_width: f64,
    /// Sheet thickness (nm)
    pub sheet_thickness: f64,
    /// Number of stacked sheets
    pub num_sheets: u32,
    /// Sheet-to-sheet pitch (nm)
    pub vertical_pitch: f64,
    /// Equivalent oxide thickness (nm)
    pub eot: f64,
    /// Gate metal workfunction (eV)
    pub gate_workfunction: f64,
    /// Channel doping (cm^-3)
    pub channel_doping: f64,
    /// Source/drain doping (cm^-3)
    pub sd_doping: f64,
    /// Spacer length (nm)
    pub spacer_length: f64,
    /// Supply voltage (V)
    pub vdd: f64,
}

impl DesignParams {
    /// Plausible 2 nm-node reference design.
    pub fn reference() -> Self {
        Self {
            gate_length: 14.0,
            sheet_width: 25.0,
            sheet_thickness: 5.0,
            num_sheets: 3,
            vertical_pitch: 10.0,
            eot: 0.7,
            gate_workfunction: 4.6,
            channel_doping: 1e16,
            sd_doping: 1e20,
            spacer_length: 5.0,
            vdd: 0.65,
        }
    }

    /// Short-gate, low-workfunction starting point that leaks and switches poorly.
    pub fn bad_seed() -> Self {
        Self {
            gate_length: 10.0,
            eot: 1.0,
            gate_workfunction: 4.35,
            ..Self::reference()
        }
    }

    pub fn get(&self, field: Field) -> f64 {
        match field {
            Field::GateLength => self.gate_length,
            Field::SheetWidth => self.sheet_width,
            Field::SheetThickness => self.sheet_thickness,
            Field::NumSheets => f64::from(self.num_sheets),
            Field::VerticalPitch => self.vertical_pitch,
            Field::Eot => self.eot,
            Field::GateWorkfunction => self.gate_workfunction,
            Field::ChannelDoping => self.channel_doping,
            Field::SdDoping => self.sd_doping,
            Field::SpacerLength => self.spacer_length,
            Field::Vdd => self.vdd,
        }
    }

    pub fn to_vector(&self) -> ParamVector {
        let mut v = ParamVector([0.0; FIELD_COUNT]);
        for field in Field::ALL {
            v[field] = self.get(field);
        }
        v
    }

    /// Builds a design point from a vector whose `num_sheets` entry is an exact
    /// non-negative integer. No bound or structure checks are applied.
    pub fn from_vector(v: &ParamVector) -> Result<Self, ParamsError> {
        let sheets = v[Field::NumSheets];
        if !(sheets.is_finite() && sheets >= 0.0 && sheets.fract() == 0.0 && sheets <= u32::MAX as f64) {
            return Err(ParamsError::Invalid(format!(
                "num_sheets must be a non-negative integer, got {sheets}"
            )));
        }
        Ok(Self {
            gate_length: v[Field::GateLength],
            sheet_width: v[Field::SheetWidth],
            sheet_thickness: v[Field::SheetThickness],
            num_sheets: sheets as u32,
            vertical_pitch: v[Field::VerticalPitch],
            eot: v[Field::Eot],
            gate_workfunction: v[Field::GateWorkfunction],
            channel_doping: v[Field::ChannelDoping],
            sd_doping: v[Field::SdDoping],
            spacer_length: v[Field::SpacerLength],
            vdd: v[Field::Vdd],
        })
    }

    /// Gate-all-around effective width in µm: sheets × perimeter.
    pub fn effective_width_um(&self) -> f64 {
        f64::from(self.num_sheets) * 2.0 * (self.sheet_width + self.sheet_thickness) * 1e-3
    }

    /// Structural invariants that hold independently of any parameter space.
    pub fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for field in Field::ALL {
            let value = self.get(field);
            let bad = match field {
                Field::NumSheets => self.num_sheets < 1,
                _ => !(value.is_finite() && value > 0.0),
            };
            if bad {
                out.push(Violation {
                    field,
                    value,
                    kind: ViolationKind::NotPositive,
                });
            }
        }
        if self.vertical_pitch <= self.sheet_thickness {
            out.push(Violation {
                field: Field::VerticalPitch,
                value: self.vertical_pitch,
                kind: ViolationKind::Structural(format!(
                    "vertical_pitch must exceed sheet_thickness ({})",
                    self.sheet_thickness
                )),
            });
        }
        if self.sd_doping <= self.channel_doping {
            out.push(Violation {
                field: Field::SdDoping,
                value: self.sd_doping,
                kind: ViolationKind::Structural(format!(
                    "sd_doping must exceed channel_doping ({:e})",
                    self.channel_doping
                )),
            });
        }
        out
    }
}

/// Unconstrained numeric design vector indexed by [`Field`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector(pub [f64; FIELD_COUNT]);

impl Index<Field> for ParamVector {
    type Output = f64;
    fn index(&self, field: Field) -> &f64 {
        &self.0[field.index()]
    }
}

impl IndexMut<Field> for ParamVector {
    fn index_mut(&mut self, field: Field) -> &mut f64 {
        &mut self.0[field.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    #[serde(default)]
    pub integer: bool,
}

impl Bound {
    pub const fn linear(lower: f64, upper: f64) -> Self {
        Self { lower, upper, scale: Scale::Linear, integer: false }
    }

    pub const fn log10(lower: f64, upper: f64) -> Self {
        Self { lower, upper, scale: Scale::Log10, integer: false }
    }

    pub const fn integer(lower: f64, upper: f64) -> Self {
        Self { lower, upper, scale: Scale::Linear, integer: true }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    /// Maps a raw value to the search coordinate (log10 for log-scaled bounds).
    pub fn to_coord(&self, value: f64) -> f64 {
        match self.scale {
            Scale::Linear => value,
            Scale::Log10 => value.log10(),
        }
    }

    pub fn from_coord(&self, coord: f64) -> f64 {
        match self.scale {
            Scale::Linear => coord,
            Scale::Log10 => 10f64.powf(coord),
        }
    }

    /// Width of the bound in search coordinates.
    pub fn coord_span(&self) -> f64 {
        self.to_coord(self.upper) - self.to_coord(self.lower)
    }

    /// Rounds integer fields and clamps into the bound.
    pub fn project(&self, value: f64) -> f64 {
        if self.integer {
            let lo = self.lower.ceil();
            let hi = self.upper.floor();
            value.round().clamp(lo, hi)
        } else {
            value.clamp(self.lower, self.upper)
        }
    }
}

/// Per-field bounds for the design vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub gate_length: Bound,
    pub sheet_width: Bound,
    pub sheet_thickness: Bound,
    pub num_sheets: Bound,
    pub vertical_pitch: Bound,
    pub eot: Bound,
    pub gate_workfunction: Bound,
    pub channel_doping: Bound,
    pub sd_doping: Bound,
    pub spacer_length: Bound,
    pub vdd: Bound,
}

impl Default for ParamSpace {
    fn default() -> Self {
        Self::nsfet_default()
    }
}

impl ParamSpace {
    /// Shipped design space for the n-type nanosheet FET.
    pub fn nsfet_default() -> Self {
        Self {
            gate_length: Bound::linear(8.0, 30.0),
            sheet_width: Bound::linear(10.0, 50.0),
            sheet_thickness: Bound::linear(3.0, 8.0),
            num_sheets: Bound::integer(1.0, 5.0),
            vertical_pitch: Bound::linear(9.0, 20.0),
            eot: Bound::linear(0.3, 1.5),
            gate_workfunction: Bound::linear(4.3, 4.9),
            channel_doping: Bound::log10(1e15, 1e18),
            sd_doping: Bound::log10(1e19, 5e20),
            spacer_length: Bound::linear(3.0, 10.0),
            vdd: Bound::linear(0.6, 0.7),
        }
    }

    pub fn bound(&self, field: Field) -> &Bound {
        match field {
            Field::GateLength => &self.gate_length,
            Field::SheetWidth => &self.sheet_width,
            Field::SheetThickness => &self.sheet_thickness,
            Field::NumSheets => &self.num_sheets,
            Field::VerticalPitch => &self.vertical_pitch,
            Field::Eot => &self.eot,
            Field::GateWorkfunction => &self.gate_workfunction,
            Field::ChannelDoping => &self.channel_doping,
            Field::SdDoping => &self.sd_doping,
            Field::SpacerLength => &self.spacer_length,
            Field::Vdd => &self.vdd,
        }
    }

    pub fn bound_mut(&mut self, field: Field) -> &mut Bound {
        match field {
            Field::GateLength => &mut self.gate_length,
            Field::SheetWidth => &mut self.sheet_width,
            Field::SheetThickness => &mut self.sheet_thickness,
            Field::NumSheets => &mut self.num_sheets,
            Field::VerticalPitch => &mut self.vertical_pitch,
            Field::Eot => &mut self.eot,
            Field::GateWorkfunction => &mut self.gate_workfunction,
            Field::ChannelDoping => &mut self.channel_doping,
            Field::SdDoping => &mut self.sd_doping,
            Field::SpacerLength => &mut self.spacer_length,
            Field::Vdd => &mut self.vdd,
        }
    }

    /// Checks that every bound is ordered and log bounds are positive.
    pub fn check(&self) -> Result<(), ParamsError> {
        for field in Field::ALL {
            let b = self.bound(field);
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(ParamsError::InvalidSpace(format!(
                    "{field}: lower {} must be below upper {}",
                    b.lower, b.upper
                )));
            }
            if b.scale == Scale::Log10 && b.lower <= 0.0 {
                return Err(ParamsError::InvalidSpace(format!(
                    "{field}: log10-scaled bound needs positive limits"
                )));
            }
            if b.integer && b.lower.ceil() > b.upper.floor() {
                return Err(ParamsError::InvalidSpace(format!(
                    "{field}: integer bound contains no integer"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    BelowLower { bound: f64 },
    AboveUpper { bound: f64 },
    NotPositive,
    Structural(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: Field,
    pub value: f64,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::BelowLower { bound } => {
                write!(f, "{} = {} is below lower bound {}", self.field, self.value, bound)
            }
            ViolationKind::AboveUpper { bound } => {
                write!(f, "{} = {} is above upper bound {}", self.field, self.value, bound)
            }
            ViolationKind::NotPositive => write!(f, "{} = {} must be positive", self.field, self.value),
            ViolationKind::Structural(msg) => write!(f, "{}: {}", self.field, msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validation {
    InBounds,
    Violations(Vec<Violation>),
}

impl Validation {
    pub fn is_in_bounds(&self) -> bool {
        matches!(self, Validation::InBounds)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Validation::InBounds => &[],
            Validation::Violations(v) => v,
        }
    }
}

/// Checks `params` against the bounds of `space` and the structural invariants.
pub fn validate(params: &DesignParams, space: &ParamSpace) -> Validation {
    let mut out = params.structural_violations();
    for field in Field::ALL {
        let value = params.get(field);
        let b = space.bound(field);
        if value < b.lower {
            out.push(Violation { field, value, kind: ViolationKind::BelowLower { bound: b.lower } });
        } else if value > b.upper {
            out.push(Violation { field, value, kind: ViolationKind::AboveUpper { bound: b.upper } });
        } else if value.is_nan() {
            out.push(Violation { field, value, kind: ViolationKind::NotPositive });
        }
    }
    if out.is_empty() {
        Validation::InBounds
    } else {
        out.sort_by_key(|v| v.field);
        Validation::Violations(out)
    }
}

/// Projects every component into its bound and rounds integer fields.
///
/// Projection on the raw value is identical to projection in log space for
/// log10-scaled fields, so both scales share one code path.
pub fn clamp(raw: &ParamVector, space: &ParamSpace) -> Result<DesignParams, ParamsError> {
    space.check()?;
    let mut v = *raw;
    for field in Field::ALL {
        if !v[field].is_finite() {
            return Err(ParamsError::Unrepairable(format!("{field} is not a finite number")));
        }
        v[field] = space.bound(field).project(v[field]);
    }
    let params = DesignParams::from_vector(&v)?;
    let structural = params.structural_violations();
    if let Some(first) = structural.first() {
        return Err(ParamsError::Unrepairable(first.to_string()));
    }
    Ok(params)
}

/// [`clamp`] for an already-typed design point.
pub fn clamp_params(params: &DesignParams, space: &ParamSpace) -> Result<DesignParams, ParamsError> {
    clamp(&params.to_vector(), space)
}

/// Specification targets a design must meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecTargets {
    /// Maximum subthreshold swing (mV/dec)
    pub ss_max: f64,
    /// Maximum off-current (A/µm)
    pub ioff_max: f64,
    /// Minimum on-current (A/µm)
    pub ion_min: f64,
    /// Minimum log10(Ion/Ioff)
    pub onoff_min: f64,
    /// Supply voltage (V)
    pub vdd: f64,
    /// Temperature (K)
    pub temperature: f64,
}

impl Default for SpecTargets {
    /// IRDS-2024 high-performance logic targets for the 2 nm node.
    fn default() -> Self {
        Self {
            ss_max: 72.0,
            ioff_max: 1.0e-8,
            ion_min: 7.87e-4,
            onoff_min: 4.90,
            vdd: 0.65,
            temperature: 300.0,
        }
    }
}

impl SpecTargets {
    pub fn check(&self) -> Result<(), ParamsError> {
        let all = [self.ss_max, self.ioff_max, self.ion_min, self.onoff_min, self.vdd, self.temperature];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ParamsError::Invalid("spec targets must be finite and positive".into()));
        }
        if self.onoff_min > (self.ion_min / self.ioff_max).log10() + 0.01 {
            return Err(ParamsError::Invalid(format!(
                "onoff_min {} inconsistent with ion_min/ioff_max",
                self.onoff_min
            )));
        }
        Ok(())
    }
}
