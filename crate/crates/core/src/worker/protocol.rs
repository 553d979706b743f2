//! Line-delimited JSON messages exchanged with an evaluation worker.
//!
//! The worker writes a handshake line on startup, then answers one response
//! line per request line, in order.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::objective::{ConstraintSpec, ObjectiveSpec, RawEvaluation};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: u32,
    pub objectives: Vec<ObjectiveSpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub results: Vec<WorkerResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResult {
    pub valid: bool,
    /// `null` stands for a non-finite value.
    #[serde(default)]
    pub objectives: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    pub constraints: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    pub feedback: Option<String>,
}

impl WorkerResult {
    /// Map onto the declared objective and constraint order.
    pub fn to_raw(&self, handshake: &Handshake) -> RawEvaluation {
        if !self.valid {
            return RawEvaluation::invalid(
                self.feedback
                    .clone()
                    .unwrap_or_else(|| "rejected by evaluator".into()),
            );
        }
        let mut objectives = Vec::with_capacity(handshake.objectives.len());
        for spec in &handshake.objectives {
            match self.objectives.get(&spec.name) {
                Some(v) => objectives.push(v.unwrap_or(f64::NAN)),
                None => {
                    return RawEvaluation::invalid(format!(
                        "evaluator omitted objective `{}`",
                        spec.name
                    ))
                }
            }
        }
        let mut constraints = Vec::with_capacity(handshake.constraints.len());
        for spec in &handshake.constraints {
            match self.constraints.get(&spec.name) {
                Some(v) => constraints.push(v.unwrap_or(f64::NAN)),
                None => {
                    return RawEvaluation::invalid(format!(
                        "evaluator omitted constraint `{}`",
                        spec.name
                    ))
                }
            }
        }
        RawEvaluation {
            objectives,
            constraints,
            feedback: self.feedback.clone(),
            valid: true,
            refined_text: None,
        }
    }
}

/// Python's `json` module writes bare `NaN` and `Infinity`; map them to null.
pub fn sanitize_line(line: &str) -> String {
    static TOKENS: OnceLock<Regex> = OnceLock::new();
    let re = TOKENS.get_or_init(|| {
        Regex::new(r"([:\[,]\s*)(?:-?Infinity|NaN)(\s*[,\]}])").expect("valid regex")
    });
    // second pass catches tokens whose leading separator the first one consumed
    let once = re.replace_all(line, "${1}null${2}");
    re.replace_all(&once, "${1}null${2}").into_owned()
}
