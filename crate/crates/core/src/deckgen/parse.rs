//! Structural parser for emitted decks: delimiter balance, section layout and
//! header bindings. It does not evaluate Scheme or the device command language.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::params::{DesignParams, Field, ParamVector, FIELD_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeckKind {
    #[serde(rename = "SDE")]
    Sde,
    #[serde(rename = "SDevice")]
    Sdevice,
}

const SDE_SECTIONS: &[&str] = &["parameters", "regions", "doping", "contacts", "mesh", "build"];
const SDE_MANDATORY: &[&str] = &["parameters", "regions", "doping", "contacts", "mesh"];
const SDEVICE_SECTIONS: &[&str] = &["File", "Electrode", "Physics", "Plot", "Math", "Solve", "System"];
const SDEVICE_MANDATORY: &[&str] = &["Electrode", "Physics", "Plot", "Math", "Solve"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based line number; 0 for whole-file diagnostics.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedDeck {
    /// Every numeric top-level binding, by name.
    pub params: BTreeMap<String, f64>,
    /// Section names in order of appearance.
    pub sections: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedDeck {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }

    /// Rebuilds the design point from the header, if every field is bound.
    pub fn design_params(&self) -> Option<DesignParams> {
        let mut v = ParamVector([0.0; FIELD_COUNT]);
        for f in Field::ALL {
            v[f] = *self.params.get(f.name())?;
        }
        DesignParams::from_vector(&v).ok()
    }
}

pub fn parse_deck(text: &str, kind: DeckKind) -> ParsedDeck {
    let mut out = ParsedDeck::default();
    match kind {
        DeckKind::Sde => parse_sde(text, &mut out),
        DeckKind::Sdevice => parse_sdevice(text, &mut out),
    }
    let mandatory = match kind {
        DeckKind::Sde => SDE_MANDATORY,
        DeckKind::Sdevice => SDEVICE_MANDATORY,
    };
    let missing: Vec<&str> =
        mandatory.iter().copied().filter(|m| !out.sections.iter().any(|s| s == m)).collect();
    if !missing.is_empty() {
        out.diagnostics.push(Diagnostic {
            line: 0,
            message: format!("missing mandatory sections: {}", missing.join(", ")),
        });
    }
    out
}

/// Tracks open delimiters across lines, skipping strings and comments.
struct Balance {
    stack: Vec<(char, usize)>,
}

impl Balance {
    fn new() -> Self {
        Self { stack: Vec::new() }
    }

    /// Feeds one line of code (comments already removed).
    fn feed(&mut self, code: &str, line: usize, diags: &mut Vec<Diagnostic>) {
        let mut in_string = false;
        let mut escaped = false;
        for c in code.chars() {
            if in_string {
                match (escaped, c) {
                    (true, _) => escaped = false,
                    (false, '\\') => escaped = true,
                    (false, '"') => in_string = false,
                    _ => {}
                }
                continue;
            }
            match c {
                '"' => in_string = true,
                '(' | '{' | '[' => self.stack.push((c, line)),
                ')' | '}' | ']' => {
                    let open = match c {
                        ')' => '(',
                        '}' => '{',
                        _ => '[',
                    };
                    match self.stack.last() {
                        Some(&(o, _)) if o == open => {
                            self.stack.pop();
                        }
                        Some(&(o, l)) => diags.push(Diagnostic {
                            line,
                            message: format!("unbalanced '{c}': expected closer for '{o}' opened at line {l}"),
                        }),
                        None => diags.push(Diagnostic { line, message: format!("unbalanced '{c}'") }),
                    }
                }
                _ => {}
            }
        }
        if in_string {
            diags.push(Diagnostic { line, message: "unterminated string".into() });
        }
    }

    fn depth(&self, opener: char) -> usize {
        self.stack.iter().filter(|(c, _)| *c == opener).count()
    }

    fn finish(self, diags: &mut Vec<Diagnostic>) {
        for (c, line) in self.stack {
            diags.push(Diagnostic { line, message: format!("unbalanced '{c}' is never closed") });
        }
    }
}

/// Strips a trailing `;` comment that is not inside a string.
fn strip_scheme_comment(line: &str) -> &str {
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
        } else if c == '"' {
            in_string = true;
        } else if c == ';' {
            return &line[..i];
        }
    }
    line
}

fn parse_binding<'a>(mut tokens: impl Iterator<Item = &'a str>) -> Option<(&'a str, f64)> {
    let name = tokens.next()?;
    let value = tokens.next()?.parse::<f64>().ok()?;
    if tokens.next().is_some() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return None;
    }
    Some((name, value))
}

fn parse_sde(text: &str, out: &mut ParsedDeck) {
    let mut balance = Balance::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if let Some(rest) = trimmed.strip_prefix(";;") {
            if let Some(name) = rest.trim().strip_prefix("@section") {
                let name = name.trim().to_string();
                if !SDE_SECTIONS.contains(&name.as_str()) {
                    out.diagnostics.push(Diagnostic { line, message: format!("unknown section '{name}'") });
                }
                out.sections.push(name);
            }
            continue;
        }
        let code = strip_scheme_comment(raw);
        if balance.depth('(') == 0 {
            let c = code.trim();
            if let Some(inner) = c.strip_prefix("(define ").and_then(|s| s.strip_suffix(')')) {
                if let Some((name, value)) = parse_binding(inner.split_whitespace()) {
                    out.params.insert(name.to_string(), value);
                }
            }
        }
        balance.feed(code, line, &mut out.diagnostics);
    }
    balance.finish(&mut out.diagnostics);
}

fn parse_sdevice(text: &str, out: &mut ParsedDeck) {
    let mut balance = Balance::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if let Some(rest) = trimmed.strip_prefix("#define") {
            if let Some((name, value)) = parse_binding(rest.split_whitespace()) {
                out.params.insert(name.to_string(), value);
            }
            continue;
        }
        if trimmed.starts_with('*') || trimmed.starts_with('#') {
            continue;
        }
        if balance.depth('{') == 0 && balance.depth('(') == 0 {
            if let Some(head) = trimmed.split('{').next().filter(|_| trimmed.contains('{')) {
                let name = head.trim();
                if !name.is_empty() {
                    if !SDEVICE_SECTIONS.contains(&name) {
                        out.diagnostics.push(Diagnostic { line, message: format!("unknown section '{name}'") });
                    }
                    out.sections.push(name.to_string());
                }
            }
        }
        balance.feed(raw, line, &mut out.diagnostics);
    }
    balance.finish(&mut out.diagnostics);
}
