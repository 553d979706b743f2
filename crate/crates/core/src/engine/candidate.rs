use serde::{Deserialize, Serialize};

use crate::backend::JobKind;
use crate::experience::EvidenceEntry;
use crate::objective::EvaluationResult;
use crate::problem::Payload;
use crate::selection::Selectable;

pub type CandidateId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    /// Text as emitted by the backend or supplied as a seed.
    pub text: String,
    /// Corrected rendering reported by the oracle, if any.
    pub refined_text: Option<String>,
    pub payload: Payload,
    pub canonical_key: String,
    pub eval: Option<EvaluationResult>,
    pub generation: u32,
    pub parents: Vec<CandidateId>,
    pub origin: Option<JobKind>,
}

impl Candidate {
    /// The text shown to the backend when this candidate is a parent.
    pub fn display_text(&self) -> &str {
        self.refined_text.as_deref().unwrap_or(&self.text)
    }

    pub fn is_valid(&self) -> bool {
        self.eval
            .as_ref()
            .is_some_and(|e| e.valid && e.fitness.is_some())
    }

    /// Fitness for ranking; 0 for invalid candidates.
    pub fn f(&self) -> f64 {
        self.eval.as_ref().and_then(|e| e.fitness).unwrap_or(0.0)
    }

    pub fn evidence_entry(&self) -> Option<EvidenceEntry> {
        let eval = self.eval.as_ref()?;
        Some(EvidenceEntry {
            id: self.id,
            key: self.canonical_key.clone(),
            text: self.display_text().to_string(),
            raw: eval.raw.clone(),
            normalized: eval.normalized.clone()?,
            fitness: eval.fitness?,
        })
    }
}

impl Selectable for Candidate {
    fn order_key(&self) -> u64 {
        self.id
    }

    fn fitness(&self) -> f64 {
        self.f()
    }

    fn objectives(&self) -> &[f64] {
        self.eval
            .as_ref()
            .and_then(|e| e.normalized.as_deref())
            .unwrap_or(&[])
    }
}

impl Selectable for &Candidate {
    fn order_key(&self) -> u64 {
        (*self).order_key()
    }

    fn fitness(&self) -> f64 {
        (*self).fitness()
    }

    fn objectives(&self) -> &[f64] {
        (*self).objectives()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<CandidateId>,
    pub generation: u32,
    pub size_target: usize,
}
