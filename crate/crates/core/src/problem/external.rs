//! Text-payload problem scored by an out-of-process worker pool.

use std::sync::Mutex;

use rand::{Rng, RngCore};

use super::text::{normalized_edit_distance, one_point_crossover, random_edit};
use super::{DecodeError, Payload, Problem};
use crate::backend::TaskTemplate;
use crate::objective::{ConstraintSpec, ObjectiveSpec, RawEvaluation};
use crate::worker::{WorkerConfig, WorkerError, WorkerPool};

#[derive(Debug)]
pub struct ExternalProblem {
    name: String,
    pool: WorkerPool,
    template: TaskTemplate,
    seeds: Vec<String>,
    fatal: Mutex<Option<WorkerError>>,
}

impl ExternalProblem {
    /// Start the workers; objectives and constraints come from their handshake.
    pub fn start(
        name: impl Into<String>,
        config: WorkerConfig,
        template: TaskTemplate,
        seeds: Vec<String>,
    ) -> Result<Self, WorkerError> {
        Ok(Self {
            name: name.into(),
            pool: WorkerPool::start(config)?,
            template,
            seeds,
            fatal: Mutex::new(None),
        })
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }

    fn text(payload: &Payload) -> Option<&str> {
        match payload {
            Payload::Text { text } => Some(text),
            _ => None,
        }
    }
}

/// Score text payloads through a pool, recording a fatal pool error in `fatal`.
pub fn external_evaluate(
    pool: &WorkerPool,
    payloads: &[Payload],
    fatal: &Mutex<Option<WorkerError>>,
) -> Vec<RawEvaluation> {
    let texts: Vec<String> = payloads
        .iter()
        .map(|p| ExternalProblem::text(p).unwrap_or_default().to_string())
        .collect();
    match pool.evaluate(&texts) {
        Ok(r) => r,
        Err(e) => {
            let reason = format!("evaluator unavailable: {e}");
            fatal.lock().expect("fatal slot").get_or_insert(e);
            texts
                .iter()
                .map(|_| RawEvaluation::invalid(reason.clone()))
                .collect()
        }
    }
}

impl Problem for ExternalProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn objectives(&self) -> &[ObjectiveSpec] {
        &self.pool.handshake().objectives
    }

    fn constraints(&self) -> &[ConstraintSpec] {
        &self.pool.handshake().constraints
    }

    fn template(&self) -> &TaskTemplate {
        &self.template
    }

    fn decode(&self, text: &str) -> Result<Payload, DecodeError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(DecodeError::new("empty candidate"));
        }
        Ok(Payload::Text {
            text: text.to_string(),
        })
    }

    fn canonical_key(&self, payload: &Payload) -> String {
        Self::text(payload).unwrap_or_default().to_string()
    }

    fn evaluate(&self, payload: &Payload) -> RawEvaluation {
        self.evaluate_batch(std::slice::from_ref(payload)).remove(0)
    }

    fn evaluate_batch(&self, payloads: &[Payload]) -> Vec<RawEvaluation> {
        external_evaluate(&self.pool, payloads, &self.fatal)
    }

    fn take_fatal_error(&self) -> Option<String> {
        self.fatal
            .lock()
            .expect("fatal slot")
            .take()
            .map(|e| e.to_string())
    }

    fn distance(&self, a: &Payload, b: &Payload) -> f64 {
        match (Self::text(a), Self::text(b)) {
            (Some(a), Some(b)) => normalized_edit_distance(a, b),
            _ => 1.0,
        }
    }

    fn render(&self, payload: &Payload) -> String {
        Self::text(payload).unwrap_or_default().to_string()
    }

    fn random_candidate(&self, rng: &mut dyn RngCore) -> String {
        if self.seeds.is_empty() {
            return "C".into();
        }
        self.seeds[rng.random_range(0..self.seeds.len())].clone()
    }

    fn vary(&self, parents: &[&Payload], rng: &mut dyn RngCore) -> String {
        let texts: Vec<Vec<char>> = parents
            .iter()
            .filter_map(|p| Self::text(p))
            .map(|t| t.chars().collect())
            .collect();
        let mut alphabet: Vec<char> = texts.iter().flatten().copied().collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        let mut child = match texts.as_slice() {
            [] => return self.random_candidate(rng),
            [a] => a.clone(),
            [a, b, ..] => one_point_crossover(a, b, rng),
        };
        random_edit(&mut child, &alphabet, rng);
        let s: String = child.into_iter().collect();
        match s.trim() {
            "" => self.random_candidate(rng),
            t => t.to_string(),
        }
    }
}
