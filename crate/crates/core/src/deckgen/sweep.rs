use serde::{Deserialize, Serialize};

use super::DeckError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepKind {
    IdVg,
    IdVd,
    #[serde(rename = "CV")]
    Cv,
}

impl SweepKind {
    pub fn label(self) -> &'static str {
        match self {
            SweepKind::IdVg => "IdVg",
            SweepKind::IdVd => "IdVd",
            SweepKind::Cv => "CV",
        }
    }
}

/// A bias sweep. For `IdVg` the gate is swept at fixed drain bias; for `IdVd`
/// the drain is swept at fixed gate bias; for `CV` the gate is swept with the
/// drain held at the fixed bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sweep_kind: SweepKind,
    /// Fixed bias on the non-swept terminal (V)
    pub fixed_bias: f64,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

pub const MIN_SWEEP_POINTS: usize = 10;

impl SweepConfig {
    /// Gate sweep 0 → `vdd` at fixed drain bias `vdd`, 10 mV step.
    pub fn idvg(vdd: f64) -> Self {
        Self { sweep_kind: SweepKind::IdVg, fixed_bias: vdd, start: 0.0, stop: vdd, step: 0.01 }
    }

    pub fn idvd(vg: f64, vdd: f64) -> Self {
        Self { sweep_kind: SweepKind::IdVd, fixed_bias: vg, start: 0.0, stop: vdd, step: 0.01 }
    }

    pub fn cv(vd: f64, vdd: f64) -> Self {
        Self { sweep_kind: SweepKind::Cv, fixed_bias: vd, start: 0.0, stop: vdd, step: 0.01 }
    }

    /// Number of grid points; the step is rounded so that both ends lie on the grid.
    pub fn num_points(&self) -> usize {
        ((self.stop - self.start) / self.step).round() as usize + 1
    }

    pub fn check(&self) -> Result<(), DeckError> {
        let finite = [self.fixed_bias, self.start, self.stop, self.step].iter().all(|v| v.is_finite());
        if !finite || self.start >= self.stop || self.step <= 0.0 {
            return Err(DeckError::InvalidSweep(format!(
                "need start < stop and step > 0 (start={}, stop={}, step={})",
                self.start, self.stop, self.step
            )));
        }
        if self.num_points() < MIN_SWEEP_POINTS {
            return Err(DeckError::InvalidSweep(format!(
                "sweep yields {} points, need at least {MIN_SWEEP_POINTS}",
                self.num_points()
            )));
        }
        Ok(())
    }

    /// Sweep grid with exact endpoints.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.num_points();
        let span = self.stop - self.start;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.stop
                } else {
                    self.start + span * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idvg_grid_has_66_points_with_exact_ends() {
        let s = SweepConfig::idvg(0.65);
        s.check().unwrap();
        let g = s.grid();
        assert_eq!(g.len(), 66);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[65], 0.65);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_short_or_inverted_sweeps() {
        let mut s = SweepConfig::idvg(0.65);
        s.step = 0.1;
        assert!(s.check().is_err());
        let mut s = SweepConfig::idvg(0.65);
        s.stop = -0.1;
        assert!(s.check().is_err());
    }
}
