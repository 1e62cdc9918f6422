//! Offspring law files: `{"p": {"<count>": <probability>, ...}}`.
//!
//! Counts are non-negative decimal integers given as object keys. A
//! probability is either a JSON number or a decimal string such as `"0.25"`.

use std::path::Path;

use gw_core::{LawError, OffspringLaw};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum LawFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("law file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("law file must be an object with a single key \"p\"")]
    Shape,
    #[error("offspring count key {0:?} is negative")]
    NegativeCount(String),
    #[error("offspring count key {0:?} is not an integer")]
    NonIntegerCount(String),
    #[error("probability for count {count} must be a number or a decimal string")]
    BadProbability { count: u64 },
    #[error(transparent)]
    Law(#[from] LawError),
}

fn parse_count(key: &str) -> Result<u64, LawFileError> {
    let t = key.trim();
    if let Some(rest) = t.strip_prefix('-') {
        if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
            return Err(LawFileError::NegativeCount(key.into()));
        }
    }
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LawFileError::NonIntegerCount(key.into()));
    }
    t.parse().map_err(|_| LawFileError::NonIntegerCount(key.into()))
}

fn parse_prob(count: u64, v: &Value) -> Result<f64, LawFileError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or(LawFileError::BadProbability { count }),
        Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| LawFileError::BadProbability { count }),
        _ => Err(LawFileError::BadProbability { count }),
    }
}

pub fn parse_law(text: &str) -> Result<OffspringLaw, LawFileError> {
    let root: Value = serde_json::from_str(text)?;
    let obj = root.as_object().ok_or(LawFileError::Shape)?;
    if obj.len() != 1 {
        return Err(LawFileError::Shape);
    }
    let p = obj.get("p").and_then(Value::as_object).ok_or(LawFileError::Shape)?;
    let mut entries = Vec::with_capacity(p.len());
    for (key, v) in p {
        let count = parse_count(key)?;
        entries.push((count, parse_prob(count, v)?));
    }
    Ok(OffspringLaw::validate(&entries)?)
}

pub fn load_law(path: &Path) -> Result<OffspringLaw, LawFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| LawFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_law(&text)
}

/// Serializes a law in the same format, probabilities with 17 significant digits.
pub fn law_to_json(law: &OffspringLaw) -> String {
    let mut p = serde_json::Map::new();
    for (k, prob) in law.support() {
        p.insert(k.to_string(), Value::String(crate::table::format_float(prob)));
    }
    let mut root = serde_json::Map::new();
    root.insert("p".into(), Value::Object(p));
    Value::Object(root).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_strings() {
        let law = parse_law(r#"{"p": {"2": 0.5, "3": "0.5"}}"#).unwrap();
        assert_eq!(law.min_count(), 2);
        assert_eq!(law.max_count(), 3);
        assert_eq!(law.prob(3), 0.5);
    }

    #[test]
    fn rejected_keys() {
        assert!(matches!(
            parse_law(r#"{"p": {"-1": 0.5, "2": 0.5}}"#),
            Err(LawFileError::NegativeCount(_))
        ));
        assert!(matches!(
            parse_law(r#"{"p": {"1.5": 0.5, "2": 0.5}}"#),
            Err(LawFileError::NonIntegerCount(_))
        ));
        assert!(matches!(
            parse_law(r#"{"p": {"x": 1}}"#),
            Err(LawFileError::NonIntegerCount(_))
        ));
        assert!(matches!(parse_law(r#"{"q": {}}"#), Err(LawFileError::Shape)));
        assert!(matches!(
            parse_law(r#"{"p": {"2": true}}"#),
            Err(LawFileError::BadProbability { count: 2 })
        ));
        assert!(matches!(
            parse_law(r#"{"p": {"0": 0.5, "2": 0.5}}"#),
            Err(LawFileError::Law(LawError::HasZeroOffspring { .. }))
        ));
    }

    #[test]
    fn round_trip() {
        let law = parse_law(r#"{"p": {"1": "0.3", "4": "0.7"}}"#).unwrap();
        let again = parse_law(&law_to_json(&law)).unwrap();
        assert_eq!(law, again);
    }
}
