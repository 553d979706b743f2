//! Problem abstraction and the built-in desk-scale domains.

mod circle;
mod external;
mod synthetic;
mod text;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::TaskTemplate;
use crate::objective::{ConstraintSpec, ObjectiveSpec, RawEvaluation};

pub use circle::{
    circle_evaluate, circle_repair, CirclePacking, CirclePackingConfig, CirclePackingProblem,
    RepairOutcome, RepairSchedule,
};
pub use external::{external_evaluate, ExternalProblem};
pub use synthetic::{FrontShape, SyntheticConfig, SyntheticProblem};
pub use text::{levenshtein, TextMatchConfig, TextMatchProblem};

/// Domain-decoded form of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Circles(CirclePacking),
    Vector { values: Vec<f64> },
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct DecodeError(pub String);

impl DecodeError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Everything the engine needs to know about a domain.
///
/// `evaluate` must be deterministic for a fixed payload, and `distance` must be
/// symmetric, zero on identical payloads and bounded by 1.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    /// Native objectives, before constraint promotion.
    fn objectives(&self) -> &[ObjectiveSpec];

    fn constraints(&self) -> &[ConstraintSpec];

    fn template(&self) -> &TaskTemplate;

    fn decode(&self, text: &str) -> Result<Payload, DecodeError>;

    /// Deterministic deduplication identity.
    fn canonical_key(&self, payload: &Payload) -> String;

    fn evaluate(&self, payload: &Payload) -> RawEvaluation;

    /// Evaluate several payloads; the result has one entry per input, in order.
    fn evaluate_batch(&self, payloads: &[Payload]) -> Vec<RawEvaluation> {
        payloads.iter().map(|p| self.evaluate(p)).collect()
    }

    /// An unrecoverable evaluator failure since the last call, if any.
    fn take_fatal_error(&self) -> Option<String> {
        None
    }

    fn distance(&self, a: &Payload, b: &Payload) -> f64;

    /// Candidate text for a payload, in the template's output format.
    fn render(&self, payload: &Payload) -> String;

    /// A random starting candidate.
    fn random_candidate(&self, rng: &mut dyn RngCore) -> String;

    /// A domain-legal variation of one (mutation) or two (crossover) parents.
    /// Used by the mock backend.
    fn vary(&self, parents: &[&Payload], rng: &mut dyn RngCore) -> String;
}
