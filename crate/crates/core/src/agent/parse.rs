//! Extraction of a design proposal from free-form model output.

use serde_json::{Map, Value};
use thiserror::Error;

use super::Proposal;
use crate::params::{clamp, DesignParams, Field, ParamSpace, ParamVector, FIELD_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in the response")]
    NoJsonFound,
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("unrepairable parameters: {0}")]
    UnrepairableParams(String),
}

/// First parseable JSON object in `text`, scanning each `{` in order.
fn first_object(text: &str) -> Option<Map<String, Value>> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

/// Parses the first JSON object of `response` as a design plus optional
/// `rationale`, then clamps it into `space`. Numbers must be JSON numbers;
/// strings such as `"14 nm"` are rejected.
pub fn parse_proposal(response: &str, space: &ParamSpace) -> Result<Proposal, ParseError> {
    let mut obj = first_object(response).ok_or(ParseError::NoJsonFound)?;
    let rationale = match obj.remove("rationale") {
        None => String::new(),
        Some(Value::String(s)) => s,
        Some(other) => return Err(ParseError::SchemaError(format!("rationale must be a string, got {other}"))),
    };
    let mut extra: Vec<&String> = obj.keys().filter(|k| Field::from_name(k).is_none()).collect();
    if !extra.is_empty() {
        extra.sort();
        return Err(ParseError::SchemaError(format!("unexpected fields: {extra:?}")));
    }
    let mut v = ParamVector([0.0; FIELD_COUNT]);
    let mut missing = Vec::new();
    for f in Field::ALL {
        match obj.get(f.name()) {
            None => missing.push(f.name()),
            Some(Value::Number(n)) => {
                v[f] = n.as_f64().ok_or_else(|| ParseError::SchemaError(format!("{f} is not representable")))?
            }
            Some(other) => return Err(ParseError::SchemaError(format!("{f} must be a number, got {other}"))),
        }
    }
    if !missing.is_empty() {
        return Err(ParseError::SchemaError(format!("missing fields: {}", missing.join(", "))));
    }
    let params: DesignParams = clamp(&v, space).map_err(|e| ParseError::UnrepairableParams(e.to_string()))?;
    Ok(Proposal { params, rationale, raw_response: response.to_string(), retries: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn json_for(p: &DesignParams) -> String {
        serde_json::to_string(p).unwrap()
    }

    #[test]
    fn fenced_json_parses_verbatim() {
        let p = DesignParams::reference();
        let text = format!("Here is my design.\n```json\n{}\n```\nGood luck!", json_for(&p));
        let prop = parse_proposal(&text, &ParamSpace::default()).unwrap();
        assert_eq!(prop.params, p);
        assert_eq!(prop.raw_response, text);
    }

    #[test]
    fn out_of_bound_values_are_clamped() {
        let mut v: Value = serde_json::to_value(DesignParams::reference()).unwrap();
        v["gate_length"] = 45.0.into();
        v["rationale"] = "longer gate".into();
        let prop = parse_proposal(&v.to_string(), &ParamSpace::default()).unwrap();
        assert_eq!(prop.params.gate_length, 30.0);
        assert_eq!(prop.rationale, "longer gate");
    }

    #[test]
    fn prose_only_has_no_json() {
        assert_eq!(parse_proposal("I think we should shorten the gate.", &ParamSpace::default()).unwrap_err(), ParseError::NoJsonFound);
        assert_eq!(parse_proposal("set {gate_length} higher", &ParamSpace::default()).unwrap_err(), ParseError::NoJsonFound);
    }

    #[test]
    fn missing_and_extra_fields_are_schema_errors() {
        let mut v: Value = serde_json::to_value(DesignParams::reference()).unwrap();
        v.as_object_mut().unwrap().remove("eot");
        assert!(matches!(parse_proposal(&v.to_string(), &ParamSpace::default()), Err(ParseError::SchemaError(_))));
        let mut v: Value = serde_json::to_value(DesignParams::reference()).unwrap();
        v["fin_height"] = 3.0.into();
        assert!(matches!(parse_proposal(&v.to_string(), &ParamSpace::default()), Err(ParseError::SchemaError(_))));
    }

    #[test]
    fn malformed_numerics_are_rejected() {
        let mut v: Value = serde_json::to_value(DesignParams::reference()).unwrap();
        v["gate_length"] = "14 nm".into();
        assert!(matches!(parse_proposal(&v.to_string(), &ParamSpace::default()), Err(ParseError::SchemaError(_))));
    }

    #[test]
    fn fractional_sheet_count_is_rounded() {
        let mut v: Value = serde_json::to_value(DesignParams::reference()).unwrap();
        v["num_sheets"] = 3.7.into();
        assert_eq!(parse_proposal(&v.to_string(), &ParamSpace::default()).unwrap().params.num_sheets, 4);
    }

    #[test]
    fn structurally_impossible_design_is_unrepairable() {
        let mut v: Value = serde_json::to_value(DesignParams::reference()).unwrap();
        v["sheet_thickness"] = 8.0.into();
        v["vertical_pitch"] = 6.0.into();
        let mut space = ParamSpace::default();
        space.bound_mut(Field::VerticalPitch).lower = 3.0;
        assert!(matches!(
            parse_proposal(&v.to_string(), &space),
            Err(ParseError::UnrepairableParams(_))
        ));
    }
}
