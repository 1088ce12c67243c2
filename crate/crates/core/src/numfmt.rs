//! Canonical number formatting shared by deck emitters, corpus queries and prompts.
//!
//! Every formatter here produces the shortest string that parses back to the
//! same `f64`, so emitted decks round-trip bit-exactly.

/// Plain decimal for moderate magnitudes, exponent form otherwise.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Scientific notation with at least one fractional mantissa digit: `1.0e-8`, `7.87e-4`.
pub fn fmt_sci(v: f64) -> String {
    let s = format!("{v:e}");
    match s.split_once('e') {
        Some((mantissa, exp)) if !mantissa.contains('.') => format!("{mantissa}.0e{exp}"),
        _ => s,
    }
}

/// Scientific notation with a fixed number of mantissa decimals.
pub fn fmt_sci_prec(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$e}")
}

/// Every maximal numeric token in `text`, in order of appearance.
///
/// A token starts at a digit (or a `-`/`.` directly followed by one, when not
/// glued to a preceding word) and extends over digits, one decimal point and
/// an optional exponent. Trailing sentence punctuation is not consumed.
pub fn numeric_tokens(text: &str) -> Vec<&str> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let starts_number = |j: usize| j < b.len() && b[j].is_ascii_digit();
        let glued = i > 0 && (b[i - 1].is_ascii_alphanumeric() || b[i - 1] == b'_');
        let start = i;
        let mut j = i;
        if !glued && b[j] == b'-' && (starts_number(j + 1) || (b.get(j + 1) == Some(&b'.') && starts_number(j + 2))) {
            j += 1;
        }
        if !glued && b[j] == b'.' && starts_number(j + 1) {
            j += 1;
        }
        if !starts_number(j) || (glued && j == i) {
            i += 1;
            continue;
        }
        while starts_number(j) {
            j += 1;
        }
        if j + 1 < b.len() && b[j] == b'.' && b[j + 1].is_ascii_digit() && !text[start..j].contains('.') {
            j += 1;
            while starts_number(j) {
                j += 1;
            }
        }
        if j < b.len() && (b[j] == b'e' || b[j] == b'E') {
            let mut k = j + 1;
            if k < b.len() && (b[k] == b'-' || b[k] == b'+') {
                k += 1;
            }
            if starts_number(k) {
                j = k;
                while starts_number(j) {
                    j += 1;
                }
            }
        }
        out.push(&text[start..j]);
        i = j;
    }
    out
}

/// [`numeric_tokens`] parsed as `f64`.
pub fn numeric_values(text: &str) -> Vec<f64> {
    numeric_tokens(text).into_iter().filter_map(|t| t.parse().ok()).collect()
}
