//! JSON run summaries.

use gw_core::{Alpha, LawCase, LawProfile};
use serde::Serialize;
use serde_json::Value;

use crate::table::format_float;

/// JSON has no infinities; non-finite values become strings.
pub fn json_number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(format_float(x)))
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub m: Value,
    pub q: Value,
    pub gamma: Value,
    /// A number, or `"infinite"` in the Böttcher case.
    pub alpha: Value,
    pub d: u64,
    pub mu: u64,
    pub beta: Option<Value>,
    pub case: &'static str,
}

impl From<&LawProfile> for ProfileSummary {
    fn from(p: &LawProfile) -> Self {
        Self {
            m: json_number(p.m),
            q: json_number(p.q),
            gamma: json_number(p.gamma),
            alpha: match p.alpha {
                Alpha::Finite(a) => json_number(a),
                Alpha::Infinite => Value::String("infinite".into()),
            },
            d: p.d,
            mu: p.mu,
            beta: p.beta.map(json_number),
            case: match p.case {
                LawCase::Schroeder => "schroeder",
                LawCase::Boettcher => "boettcher",
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: String,
    pub profile: ProfileSummary,
    pub rows: usize,
    /// Scalar results of the run, sorted by key.
    pub values: serde_json::Map<String, Value>,
    pub assertions: Vec<Assertion>,
    pub pass: bool,
}

impl Summary {
    pub fn new(command: &str, profile: &LawProfile) -> Self {
        Self {
            command: command.into(),
            profile: profile.into(),
            rows: 0,
            values: serde_json::Map::new(),
            assertions: Vec::new(),
            pass: true,
        }
    }

    pub fn value(&mut self, key: &str, v: impl Into<Value>) {
        self.values.insert(key.into(), v.into());
    }

    pub fn number(&mut self, key: &str, x: f64) {
        self.values.insert(key.into(), json_number(x));
    }

    pub fn assert(&mut self, a: Assertion) {
        self.pass &= a.pass;
        self.assertions.push(a);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
