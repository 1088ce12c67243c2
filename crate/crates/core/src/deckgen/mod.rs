//! Simulation deck emission and parsing, design-variant expansion and
//! query/deck corpus construction.
//!
//! Structure scripts use the Scheme-style `(sdegeo:...)`/`(sdedr:...)` command
//! dialect; device command files use the brace-delimited section format. Both
//! start with a header binding one named constant per design field, which is
//! what [`parse_deck`] recovers.

mod corpus;
mod expand;
mod parse;
mod sde;
mod sdevice;
mod sweep;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::fmt_num;
use crate::params::{DesignParams, Field};

pub use corpus::{
    build_corpus, build_corpus_with, query_numbers_in_metadata, records_to_jsonl, CorpusOptions, CorpusRecord,
    LlmQueryAugmenter, Provenance, QueryAugmenter, QueryTemplates,
};
pub use expand::{expand_variants, ExpandStrategy};
pub use parse::{parse_deck, DeckKind, Diagnostic, ParsedDeck};
pub use sde::generate_sde;
pub use sdevice::generate_sdevice;
pub use sweep::{SweepConfig, SweepKind, MIN_SWEEP_POINTS};

#[derive(Debug, Error)]
pub enum DeckError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("no axes selected for expansion")]
    EmptySelection,
    #[error("template error: {0}")]
    Template(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Mesh density tag. Channel refinement is sheet_thickness / 4, / 6 and / 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshDensity {
    Coarse,
    #[default]
    Default,
    Fine,
}

impl MeshDensity {
    pub fn channel_divisor(self) -> f64 {
        match self {
            MeshDensity::Coarse => 4.0,
            MeshDensity::Default => 6.0,
            MeshDensity::Fine => 8.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MeshDensity::Coarse => "coarse",
            MeshDensity::Default => "default",
            MeshDensity::Fine => "fine",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModelSet {
    #[default]
    #[serde(rename = "drift-diffusion")]
    DriftDiffusion,
    #[serde(rename = "dd+quantum")]
    DdQuantum,
}

impl ModelSet {
    pub fn label(self) -> &'static str {
        match self {
            ModelSet::DriftDiffusion => "drift-diffusion",
            ModelSet::DdQuantum => "dd+quantum",
        }
    }
}

/// Generated structure and device scripts plus their metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeckPair {
    pub sde_script: String,
    pub sdevice_script: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub(crate) fn ensure_valid(params: &DesignParams) -> Result<(), DeckError> {
    let v = params.structural_violations();
    if v.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        Err(DeckError::InvalidParams(msgs.join("; ")))
    }
}

/// Header lines binding each design field, one per line, in declared order.
pub(crate) fn header_bindings(params: &DesignParams) -> impl Iterator<Item = (Field, String)> + '_ {
    Field::ALL.into_iter().map(move |f| (f, fmt_num(params.get(f))))
}

fn number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
}

pub fn deck_metadata(
    params: &DesignParams,
    sweep: &SweepConfig,
    mesh: MeshDensity,
    models: ModelSet,
) -> BTreeMap<String, serde_json::Value> {
    use serde_json::Value;
    let mut m = BTreeMap::new();
    m.insert("device_family".into(), Value::from("nanosheet-fet"));
    m.insert("dimensionality".into(), Value::from("3D"));
    m.insert("sweep_type".into(), Value::from(sweep.sweep_kind.label()));
    m.insert("mesh".into(), Value::from(mesh.label()));
    m.insert("models".into(), Value::from(models.label()));
    for f in Field::ALL {
        m.insert(f.name().into(), number(params.get(f)));
    }
    m.insert("sweep_fixed_bias".into(), number(sweep.fixed_bias));
    m.insert("sweep_start".into(), number(sweep.start));
    m.insert("sweep_stop".into(), number(sweep.stop));
    m.insert("sweep_step".into(), number(sweep.step));
    m
}

pub fn generate_deck_pair(
    params: &DesignParams,
    sweep: &SweepConfig,
    mesh: MeshDensity,
    models: ModelSet,
) -> Result<DeckPair, DeckError> {
    Ok(DeckPair {
        sde_script: generate_sde(params, mesh)?,
        sdevice_script: generate_sdevice(params, sweep, models)?,
        metadata: deck_metadata(params, sweep, mesh, models),
    })
}

/// Paths of a written deck pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeckFiles {
    pub sde: PathBuf,
    pub sdevice: PathBuf,
}

impl DeckFiles {
    pub fn in_dir(dir: &Path, name: &str) -> Self {
        Self { sde: dir.join(format!("{name}_dvs.cmd")), sdevice: dir.join(format!("{name}_des.cmd")) }
    }
}

/// Writes `<name>_dvs.cmd` and `<name>_des.cmd` into `dir`.
pub fn write_deck_pair(deck: &DeckPair, dir: &Path, name: &str) -> Result<DeckFiles, DeckError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DeckError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = DeckFiles::in_dir(dir, name);
    fs::write(&files.sde, &deck.sde_script).map_err(io_err(&files.sde))?;
    fs::write(&files.sdevice, &deck.sdevice_script).map_err(io_err(&files.sdevice))?;
    Ok(files)
}

/// Base name used for deck files and tool outputs.
pub const DEFAULT_DECK_NAME: &str = "nsfet";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_round_trips_through_json() {
        let deck = generate_deck_pair(
            &DesignParams::reference(),
            &SweepConfig::idvg(0.65),
            MeshDensity::Default,
            ModelSet::DriftDiffusion,
        )
        .unwrap();
        let text = serde_json::to_string(&deck).unwrap();
        let back: DeckPair = serde_json::from_str(&text).unwrap();
        assert_eq!(back, deck);
        assert_eq!(deck.metadata["gate_length"], serde_json::json!(14.0));
        assert_eq!(deck.metadata["sweep_type"], "IdVg");
    }

    #[test]
    fn writes_conventional_file_names() {
        let dir = tempfile::tempdir().unwrap();
        let deck = generate_deck_pair(
            &DesignParams::reference(),
            &SweepConfig::idvg(0.65),
            MeshDensity::Fine,
            ModelSet::DdQuantum,
        )
        .unwrap();
        let files = write_deck_pair(&deck, dir.path(), "nsfet").unwrap();
        assert!(files.sde.ends_with("nsfet_dvs.cmd"));
        assert!(files.sdevice.ends_with("nsfet_des.cmd"));
        assert_eq!(fs::read_to_string(&files.sde).unwrap(), deck.sde_script);
    }
}
