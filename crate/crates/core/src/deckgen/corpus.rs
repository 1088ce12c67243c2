//! Query/deck corpus construction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{generate_deck_pair, DeckError, DeckPair, MeshDensity, ModelSet, SweepConfig, SweepKind};
use crate::agent::{ChatMessage, ChatRequest, ChatTransport};
use crate::numfmt::{fmt_num, numeric_values};
use crate::params::{DesignParams, Field};

/// Query phrasings. Placeholders are `{field_name}` for any design field plus
/// `{sweep}`, which expands to a sweep description. Templates must not contain
/// literal digits, so every number in a rendered query comes from metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplates {
    pub templates: Vec<String>,
}

impl Default for QueryTemplates {
    fn default() -> Self {
        let t = [
            "Write Sentaurus structure and device scripts for a gate-all-around nanosheet FET with \
             {num_sheets} stacked sheets, a {gate_length} nm gate, {sheet_width} nm wide and \
             {sheet_thickness} nm thick sheets, and simulate {sweep}.",
            "I need a nanosheet transistor deck: gate length {gate_length} nm, EOT {eot} nm, gate \
             work function {gate_workfunction} eV, channel doping {channel_doping} per cubic cm. \
             Please run {sweep}.",
            "Generate SDE and SDevice inputs for a stacked nanosheet device ({num_sheets} sheets at \
             {vertical_pitch} nm pitch, spacers of {spacer_length} nm, source/drain doping \
             {sd_doping} per cubic cm) and set up {sweep}.",
            "Set up a TCAD simulation of a GAA nanosheet FET whose gate is {gate_length} nm long \
             with a {gate_workfunction} eV metal over {eot} nm EOT. The solve should perform {sweep}.",
            "Create the simulation scripts for a nanosheet FET with {sheet_thickness} nm silicon \
             sheets, {sheet_width} nm width and supply {vdd} V; I want {sweep}.",
        ];
        Self { templates: t.iter().map(|s| s.to_string()).collect() }
    }
}

impl QueryTemplates {
    pub fn check(&self) -> Result<(), DeckError> {
        if self.templates.is_empty() {
            return Err(DeckError::Template("template set is empty".into()));
        }
        for t in &self.templates {
            if t.chars().any(|c| c.is_ascii_digit()) {
                return Err(DeckError::Template(format!("template contains a literal digit: {t}")));
            }
            let mut rest = t.as_str();
            while let Some(open) = rest.find('{') {
                let close = rest[open..]
                    .find('}')
                    .ok_or_else(|| DeckError::Template(format!("unclosed placeholder in: {t}")))?;
                let name = &rest[open + 1..open + close];
                if name != "sweep" && Field::from_name(name).is_none() {
                    return Err(DeckError::Template(format!("unknown placeholder {{{name}}}")));
                }
                rest = &rest[open + close + 1..];
            }
        }
        Ok(())
    }
}

fn sweep_phrase(sweep: &SweepConfig) -> String {
    let (a, b, s, f) = (fmt_num(sweep.start), fmt_num(sweep.stop), fmt_num(sweep.step), fmt_num(sweep.fixed_bias));
    match sweep.sweep_kind {
        SweepKind::IdVg => {
            format!("an Id-Vg transfer sweep with the gate ramped from {a} V to {b} V in {s} V steps at a drain bias of {f} V")
        }
        SweepKind::IdVd => {
            format!("an Id-Vd output sweep with the drain ramped from {a} V to {b} V in {s} V steps at a gate bias of {f} V")
        }
        SweepKind::Cv => {
            format!("a C-V sweep of the gate from {a} V to {b} V in {s} V steps with the drain held at {f} V")
        }
    }
}

fn render(template: &str, params: &DesignParams, sweep: &SweepConfig) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').unwrap_or(rest.len() - open);
        let name = &rest[open + 1..close.min(rest.len())];
        match Field::from_name(name) {
            Some(f) => out.push_str(&fmt_num(params.get(f))),
            None => out.push_str(&sweep_phrase(sweep)),
        }
        rest = &rest[(close + 1).min(rest.len())..];
    }
    out.push_str(rest);
    out
}

fn collect_numbers(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.extend(n.as_f64()),
        Value::Array(a) => a.iter().for_each(|x| collect_numbers(x, out)),
        Value::Object(o) => o.values().for_each(|x| collect_numbers(x, out)),
        _ => {}
    }
}

/// True when every numeric token in `query` equals some number in `metadata`.
pub fn query_numbers_in_metadata(query: &str, metadata: &BTreeMap<String, Value>) -> bool {
    let mut known = Vec::new();
    metadata.values().for_each(|v| collect_numbers(v, &mut known));
    numeric_values(query).iter().all(|q| known.iter().any(|k| k == q))
}

/// Where a record came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_design: String,
    /// Fields whose value differs from the base design.
    pub variation: BTreeMap<String, f64>,
    pub variant_index: usize,
    pub sweep_index: usize,
    /// `template` or `augmented`.
    pub query_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub query: String,
    pub deck: DeckPair,
    pub provenance: Provenance,
}

impl CorpusRecord {
    /// The JSONL object: `query`, `sde`, `sdevice`, `metadata` (provenance nested in metadata).
    pub fn to_json(&self) -> Value {
        let mut meta: serde_json::Map<String, Value> =
            self.deck.metadata.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        meta.insert("provenance".into(), serde_json::to_value(&self.provenance).unwrap_or(Value::Null));
        serde_json::json!({
            "query": self.query,
            "sde": self.deck.sde_script,
            "sdevice": self.deck.sdevice_script,
            "metadata": meta,
        })
    }
}

pub fn records_to_jsonl(records: &[CorpusRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json().to_string());
        out.push('\n');
    }
    out
}

/// Rewrites template queries into freer phrasing.
pub trait QueryAugmenter {
    fn augment(&mut self, query: &str, metadata: &BTreeMap<String, Value>) -> Result<String, String>;
}

const AUGMENT_SYSTEM_PROMPT: &str = "You rewrite requests for semiconductor device simulation scripts. \
Given the design metadata and a draft request, produce one request in the voice of a device engineer \
asking for TCAD structure and device scripts. Keep every number exactly as it appears in the draft and \
do not introduce any other number. Reply with the request text only.";

/// Query augmentation through a chat-completion transport.
pub struct LlmQueryAugmenter {
    pub transport: Box<dyn ChatTransport>,
    pub model: String,
    pub temperature: f64,
}

impl QueryAugmenter for LlmQueryAugmenter {
    fn augment(&mut self, query: &str, metadata: &BTreeMap<String, Value>) -> Result<String, String> {
        let meta = serde_json::to_string_pretty(metadata).map_err(|e| e.to_string())?;
        let req = ChatRequest {
            model: self.model.clone(),
            messages: vec![
                ChatMessage::system(AUGMENT_SYSTEM_PROMPT),
                ChatMessage::user(format!("Metadata:\n{meta}\n\nDraft request:\n{query}")),
            ],
            temperature: self.temperature,
        };
        let text = self.transport.complete(&req).map_err(|e| e.to_string())?;
        let text = text.trim();
        if text.is_empty() {
            Err("empty augmentation".into())
        } else {
            Ok(text.to_string())
        }
    }
}

/// Deck settings and base design shared by all records.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOptions {
    pub base: DesignParams,
    pub base_id: String,
    pub mesh: MeshDensity,
    pub models: ModelSet,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            base: DesignParams::reference(),
            base_id: "nsfet-reference".into(),
            mesh: MeshDensity::Default,
            models: ModelSet::DriftDiffusion,
        }
    }
}

/// SplitMix64 finalizer; decorrelates consecutive record seeds.
fn record_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn build_corpus(
    variants: &[DesignParams],
    sweeps: &[SweepConfig],
    templates: &QueryTemplates,
    seed: u64,
) -> Result<Vec<CorpusRecord>, DeckError> {
    build_corpus_with(variants, sweeps, templates, seed, &CorpusOptions::default(), None)
}

/// One record per (variant, sweep), variant-major. Each record draws its
/// template from its own RNG seeded by `seed` and the record index. Records
/// whose decks fail to generate are logged and skipped. Augmented queries that
/// mention a number missing from the metadata fall back to the template query.
pub fn build_corpus_with(
    variants: &[DesignParams],
    sweeps: &[SweepConfig],
    templates: &QueryTemplates,
    seed: u64,
    options: &CorpusOptions,
    mut augmenter: Option<&mut dyn QueryAugmenter>,
) -> Result<Vec<CorpusRecord>, DeckError> {
    templates.check()?;
    let mut out = Vec::with_capacity(variants.len() * sweeps.len());
    for (vi, variant) in variants.iter().enumerate() {
        for (si, sweep) in sweeps.iter().enumerate() {
            let index = vi * sweeps.len() + si;
            let deck = match generate_deck_pair(variant, sweep, options.mesh, options.models) {
                Ok(d) => d,
                Err(e) => {
                    tracing::warn!(variant = vi, sweep = si, error = %e, "skipping corpus record");
                    continue;
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(seed, index));
            let template = &templates.templates[rng.random_range(0..templates.templates.len())];
            let mut query = render(template, variant, sweep);
            let mut query_source = "template";
            if let Some(aug) = augmenter.as_deref_mut() {
                match aug.augment(&query, &deck.metadata) {
                    Ok(q) if query_numbers_in_metadata(&q, &deck.metadata) => {
                        query = q;
                        query_source = "augmented";
                    }
                    Ok(_) => tracing::warn!(index, "augmented query invents numbers; keeping template"),
                    Err(e) => tracing::warn!(index, error = %e, "augmentation failed; keeping template"),
                }
            }
            let variation = Field::ALL
                .into_iter()
                .filter(|&f| variant.get(f) != options.base.get(f))
                .map(|f| (f.name().to_string(), variant.get(f)))
                .collect();
            out.push(CorpusRecord {
                query,
                deck,
                provenance: Provenance {
                    base_design: options.base_id.clone(),
                    variation,
                    variant_index: vi,
                    sweep_index: si,
                    query_source: query_source.into(),
                },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variants() -> Vec<DesignParams> {
        (0..9).map(|k| DesignParams { gate_length: 10.0 + k as f64, ..DesignParams::reference() }).collect()
    }

    #[test]
    fn cardinality_and_determinism() {
        let t = QueryTemplates::default();
        let sweeps = [SweepConfig::idvg(0.65)];
        let a = build_corpus(&variants(), &sweeps, &t, 11).unwrap();
        assert_eq!(a.len(), 9);
        let b = build_corpus(&variants(), &sweeps, &t, 11).unwrap();
        assert_eq!(records_to_jsonl(&a), records_to_jsonl(&b));
    }

    #[test]
    fn gate_length_template_substitutes_value() {
        let t = QueryTemplates { templates: vec!["A device with a {gate_length} nm gate; run {sweep}.".into()] };
        let recs = build_corpus(&variants(), &[SweepConfig::idvg(0.65)], &t, 0).unwrap();
        for r in &recs {
            let gl = r.deck.metadata["gate_length"].as_f64().unwrap();
            assert!(r.query.contains(&format!("{} nm gate", fmt_num(gl))));
        }
    }

    #[test]
    fn every_query_number_is_in_metadata() {
        let sweeps = [SweepConfig::idvg(0.65), SweepConfig::idvd(0.65, 0.65), SweepConfig::cv(0.0, 0.65)];
        let recs = build_corpus(&variants(), &sweeps, &QueryTemplates::default(), 3).unwrap();
        assert_eq!(recs.len(), 27);
        for r in &recs {
            assert!(!r.query.is_empty());
            assert!(query_numbers_in_metadata(&r.query, &r.deck.metadata), "{}", r.query);
        }
    }

    #[test]
    fn templates_are_validated() {
        let bad = QueryTemplates { templates: vec!["gate of 5 nm".into()] };
        assert!(matches!(bad.check(), Err(DeckError::Template(_))));
        let unknown = QueryTemplates { templates: vec!["{colour}".into()] };
        assert!(unknown.check().is_err());
        assert!(QueryTemplates { templates: vec![] }.check().is_err());
        QueryTemplates::default().check().unwrap();
    }

    #[test]
    fn jsonl_keys() {
        let recs = build_corpus(&variants()[..1], &[SweepConfig::idvg(0.65)], &QueryTemplates::default(), 0).unwrap();
        let line = records_to_jsonl(&recs);
        let v: Value = serde_json::from_str(line.trim()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["metadata", "query", "sde", "sdevice"]);
        assert_eq!(v["metadata"]["provenance"]["variation"]["gate_length"], 10.0);
    }

    struct Inventive;
    impl QueryAugmenter for Inventive {
        fn augment(&mut self, _: &str, _: &BTreeMap<String, Value>) -> Result<String, String> {
            Ok("Simulate a 999 nm device".into())
        }
    }

    struct Faithful;
    impl QueryAugmenter for Faithful {
        fn augment(&mut self, q: &str, _: &BTreeMap<String, Value>) -> Result<String, String> {
            Ok(format!("Hello! {q}"))
        }
    }

    #[test]
    fn augmentation_falls_back_when_numbers_are_invented() {
        let opts = CorpusOptions::default();
        let sweeps = [SweepConfig::idvg(0.65)];
        let t = QueryTemplates::default();
        let plain = build_corpus(&variants()[..2], &sweeps, &t, 5).unwrap();
        let mut inv = Inventive;
        let fb = build_corpus_with(&variants()[..2], &sweeps, &t, 5, &opts, Some(&mut inv)).unwrap();
        assert_eq!(fb[0].query, plain[0].query);
        assert_eq!(fb[0].provenance.query_source, "template");
        let mut ok = Faithful;
        let aug = build_corpus_with(&variants()[..2], &sweeps, &t, 5, &opts, Some(&mut ok)).unwrap();
        assert!(aug[0].query.starts_with("Hello!"));
        assert_eq!(aug[0].provenance.query_source, "augmented");
    }
}
