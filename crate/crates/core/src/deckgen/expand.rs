//! Design-variant expansion around a base design.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DeckError;
use crate::params::{validate, DesignParams, Field, ParamSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum ExpandStrategy {
    /// Cartesian product; each axis gets `levels` evenly spaced values
    /// (in log coordinates for log-scaled fields) spanning its bound.
    /// A single level keeps the base value.
    Grid { axes: Vec<(Field, usize)> },
    LatinHypercube { axes: Vec<Field>, n: usize, seed: u64 },
}

fn grid_levels(field: Field, levels: usize, base: &DesignParams, space: &ParamSpace) -> Vec<f64> {
    let b = space.bound(field);
    if levels <= 1 {
        return vec![base.get(field)];
    }
    let (lo, span) = (b.to_coord(b.lower), b.coord_span());
    let mut out: Vec<f64> = (0..levels)
        .map(|k| {
            let v = match k {
                0 => b.lower,
                k if k == levels - 1 => b.upper,
                k => b.from_coord(lo + span * k as f64 / (levels - 1) as f64),
            };
            b.project(v)
        })
        .collect();
    out.dedup();
    out
}

fn accept(out: &mut Vec<DesignParams>, p: DesignParams, space: &ParamSpace) {
    if !validate(&p, space).is_in_bounds() {
        tracing::debug!(?p, "skipping variant outside the design space");
        return;
    }
    if !out.contains(&p) {
        out.push(p);
    }
}

/// Expands `base` along the selected axes. Variants that violate a bound or
/// a structural invariant are skipped and duplicates are dropped, so the result
/// may be shorter than the nominal product or sample count.
pub fn expand_variants(
    base: &DesignParams,
    space: &ParamSpace,
    strategy: &ExpandStrategy,
) -> Result<Vec<DesignParams>, DeckError> {
    space.check().map_err(|e| DeckError::InvalidParams(e.to_string()))?;
    if let Some(v) = validate(base, space).violations().first() {
        return Err(DeckError::InvalidParams(format!("base design: {v}")));
    }
    let mut out = Vec::new();
    match strategy {
        ExpandStrategy::Grid { axes } => {
            if axes.is_empty() {
                return Err(DeckError::EmptySelection);
            }
            let values: Vec<(Field, Vec<f64>)> =
                axes.iter().map(|&(f, k)| (f, grid_levels(f, k, base, space))).collect();
            let total: usize = values.iter().map(|(_, v)| v.len()).product();
            for mut idx in 0..total {
                let mut v = base.to_vector();
                for (field, levels) in values.iter().rev() {
                    v[*field] = levels[idx % levels.len()];
                    idx /= levels.len();
                }
                if let Ok(p) = DesignParams::from_vector(&v) {
                    accept(&mut out, p, space);
                }
            }
        }
        ExpandStrategy::LatinHypercube { axes, n, seed } => {
            if axes.is_empty() {
                return Err(DeckError::EmptySelection);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut strata: Vec<Vec<usize>> = Vec::with_capacity(axes.len());
            for _ in axes {
                let mut perm: Vec<usize> = (0..*n).collect();
                perm.shuffle(&mut rng);
                strata.push(perm);
            }
            for i in 0..*n {
                let mut v = base.to_vector();
                for (field, perm) in axes.iter().zip(&strata) {
                    let b = space.bound(*field);
                    let u = (perm[i] as f64 + rng.random::<f64>()) / *n as f64;
                    v[*field] = b.project(b.from_coord(b.to_coord(b.lower) + u * b.coord_span()));
                }
                if let Ok(p) = DesignParams::from_vector(&v) {
                    accept(&mut out, p, space);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> ParamSpace {
        ParamSpace::nsfet_default()
    }

    #[test]
    fn three_by_three_grid() {
        let s = ExpandStrategy::Grid { axes: vec![(Field::GateLength, 3), (Field::Eot, 3)] };
        let v = expand_variants(&DesignParams::reference(), &space(), &s).unwrap();
        assert_eq!(v.len(), 9);
    }

    #[test]
    fn grid_includes_bounds() {
        let s = ExpandStrategy::Grid { axes: vec![(Field::GateLength, 3), (Field::ChannelDoping, 4)] };
        let v = expand_variants(&DesignParams::reference(), &space(), &s).unwrap();
        for f in [Field::GateLength, Field::ChannelDoping] {
            let b = *space().bound(f);
            assert!(v.iter().any(|p| p.get(f) == b.lower));
            assert!(v.iter().any(|p| p.get(f) == b.upper));
        }
        let mut dopings: Vec<f64> = v.iter().map(|p| p.channel_doping).collect();
        dopings.sort_by(f64::total_cmp);
        dopings.dedup();
        assert!((dopings[1] - 1e16).abs() / 1e16 < 1e-9);
    }

    #[test]
    fn integer_axis_levels_are_integral() {
        let s = ExpandStrategy::Grid { axes: vec![(Field::NumSheets, 5)] };
        let v = expand_variants(&DesignParams::reference(), &space(), &s).unwrap();
        let sheets: Vec<u32> = v.iter().map(|p| p.num_sheets).collect();
        assert_eq!(sheets, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn latin_hypercube_is_deterministic_and_in_bounds() {
        let s = ExpandStrategy::LatinHypercube {
            axes: vec![Field::GateLength, Field::Eot, Field::GateWorkfunction],
            n: 100,
            seed: 7,
        };
        let a = expand_variants(&DesignParams::reference(), &space(), &s).unwrap();
        let b = expand_variants(&DesignParams::reference(), &space(), &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.iter().all(|p| validate(p, &space()).is_in_bounds()));
        let mut strata = vec![0usize; 100];
        for p in &a {
            let b = *space().bound(Field::GateLength);
            let k = (((p.gate_length - b.lower) / (b.upper - b.lower)) * 100.0).floor() as usize;
            strata[k.min(99)] += 1;
        }
        assert!(strata.iter().all(|&c| c == 1));
    }

    #[test]
    fn empty_selection_and_bad_base() {
        let s = ExpandStrategy::Grid { axes: vec![] };
        assert!(matches!(
            expand_variants(&DesignParams::reference(), &space(), &s),
            Err(DeckError::EmptySelection)
        ));
        let base = DesignParams { gate_length: 100.0, ..DesignParams::reference() };
        let s = ExpandStrategy::Grid { axes: vec![(Field::Eot, 2)] };
        assert!(matches!(expand_variants(&base, &space(), &s), Err(DeckError::InvalidParams(_))));
    }
}
