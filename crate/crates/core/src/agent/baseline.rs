//! Deterministic compass search over the design space.
//!
//! The searcher keeps no state between calls: every proposal is a function of
//! the history alone, which makes resumed runs continue exactly where an
//! uninterrupted run would.

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, Proposal, ProposalRequest};
use crate::numfmt::fmt_num;
use crate::orchestrator::IterationRecord;
use crate::params::{clamp, DesignParams, Field, ParamSpace, SpecTargets};
use crate::postproc::Metrics;

/// Hinge distance to the targets: zero exactly when all four are met.
pub fn score(m: &Metrics, t: &SpecTargets) -> f64 {
    (m.ss - t.ss_max).max(0.0) / t.ss_max
        + (m.ioff / t.ioff_max).log10().max(0.0)
        + (t.ion_min / m.ion).log10().max(0.0)
        + (t.onoff_min - m.onoff).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinateSearch {
    /// First step as a fraction of each bound's width in search coordinates.
    pub initial_fraction: f64,
    /// Step multiplier applied when a level is exhausted.
    pub shrink: f64,
    /// Number of step levels before the search gives up.
    pub levels: u32,
    /// Selects which direction is polled first on each axis; 0 polls `+` first everywhere.
    pub seed: u64,
}

impl Default for CoordinateSearch {
    fn default() -> Self {
        Self { initial_fraction: 0.25, shrink: 0.5, levels: 8, seed: 0 }
    }
}

const SAME_POINT_TOL: f64 = 1e-9;

fn same_point(a: &DesignParams, b: &DesignParams, space: &ParamSpace) -> bool {
    Field::ALL.iter().all(|&f| {
        let bound = space.bound(f);
        let (x, y) = (bound.to_coord(a.get(f)), bound.to_coord(b.get(f)));
        (x - y).abs() <= SAME_POINT_TOL * bound.coord_span().max(1.0)
    })
}

fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Candidate {
    params: DesignParams,
    field: Field,
    delta: f64,
    predicted: f64,
    order: usize,
}

impl CoordinateSearch {
    fn signs(&self, field: Field) -> [f64; 2] {
        if self.seed != 0 && (mix(self.seed) >> field.index()) & 1 == 1 {
            [-1.0, 1.0]
        } else {
            [1.0, -1.0]
        }
    }

    fn step(&self, field: Field, level: u32, space: &ParamSpace) -> f64 {
        let b = space.bound(field);
        let s = self.initial_fraction * b.coord_span() * self.shrink.powi(level as i32);
        if b.integer {
            s.round().max(1.0)
        } else {
            s
        }
    }

    /// Proposes the next design from `history`, or [`AgentError::ExhaustedSpace`].
    pub fn next(
        &self,
        history: &[IterationRecord],
        seed_design: &DesignParams,
        space: &ParamSpace,
        targets: &SpecTargets,
    ) -> Result<(DesignParams, String), AgentError> {
        if history.is_empty() {
            return Err(AgentError::EmptyHistory);
        }
        let scored: Vec<(&DesignParams, f64)> = history
            .iter()
            .filter_map(|r| r.metrics.as_ref().map(|m| (&r.params, score(&m.metrics, targets))))
            .collect();
        // Earliest record wins ties so the center only moves on strict improvement.
        let (center, center_score) = scored
            .iter()
            .fold(None::<(&DesignParams, f64)>, |best, &(p, s)| match best {
                Some((_, bs)) if bs <= s => best,
                _ => Some((p, s)),
            })
            .unwrap_or((seed_design, f64::INFINITY));
        let known = |p: &DesignParams| history.iter().any(|r| same_point(&r.params, p, space));
        let score_at = |p: &DesignParams| scored.iter().find(|(q, _)| same_point(q, p, space)).map(|(_, s)| *s);

        for level in 0..self.levels {
            let mut best: Option<Candidate> = None;
            let mut order = 0;
            for field in Field::ALL {
                let b = space.bound(field);
                let step = self.step(field, level, space);
                let c0 = b.to_coord(center.get(field));
                for sign in self.signs(field) {
                    order += 1;
                    let mut v = center.to_vector();
                    v[field] = b.from_coord(c0 + sign * step);
                    let Ok(params) = clamp(&v, space) else { continue };
                    if params.get(field) == center.get(field) || known(&params) {
                        continue;
                    }
                    let mut mirror = center.to_vector();
                    mirror[field] = b.from_coord(c0 - sign * step);
                    let predicted = match clamp(&mirror, space).ok().and_then(|m| score_at(&m)) {
                        Some(opposite) if center_score.is_finite() => center_score + (center_score - opposite),
                        _ => center_score,
                    };
                    let delta = b.to_coord(params.get(field)) - c0;
                    let cand = Candidate { params, field, delta, predicted, order };
                    let better = match &best {
                        None => true,
                        Some(cur) => cand.predicted < cur.predicted
                            || (cand.predicted == cur.predicted && cand.order < cur.order),
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
            if let Some(c) = best {
                let unit = if space.bound(c.field).scale == crate::params::Scale::Log10 { " decades" } else { "" };
                let rationale = format!(
                    "compass step on {} by {}{} at level {} from the best design so far (score {})",
                    c.field,
                    fmt_num(c.delta),
                    unit,
                    level,
                    if center_score.is_finite() { format!("{center_score:.4}") } else { "n/a".into() }
                );
                return Ok((c.params, rationale));
            }
        }
        Err(AgentError::ExhaustedSpace)
    }
}

/// [`Agent`] wrapper around [`CoordinateSearch`].
#[derive(Debug, Clone, Default)]
pub struct BaselineAgent {
    pub strategy: CoordinateSearch,
}

impl BaselineAgent {
    pub fn new(strategy: CoordinateSearch) -> Self {
        Self { strategy }
    }
}

impl Agent for BaselineAgent {
    fn name(&self) -> &str {
        "baseline"
    }

    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Proposal, AgentError> {
        let (params, rationale) = self.strategy.next(req.history, req.seed_design, req.space, req.targets)?;
        Ok(Proposal { params, rationale, raw_response: String::new(), retries: 0 })
    }
}
