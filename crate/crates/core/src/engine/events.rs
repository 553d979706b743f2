use std::io::Write;

use serde::{Deserialize, Serialize};

use super::candidate::CandidateId;
use crate::backend::{JobKind, ParseDiagnostic};
use crate::metrics::MetricSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BudgetExhausted,
    GenerationCap,
    /// Several generations in a row produced nothing new to evaluate.
    Stalled,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::BudgetExhausted => "budget_exhausted",
            StopReason::GenerationCap => "generation_cap",
            StopReason::Stalled => "stalled",
        })
    }
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        problem: String,
        seed: u64,
        budget: u64,
        population_size: usize,
        k_offspring: usize,
        calls_per_generation: usize,
        objectives: Vec<String>,
    },
    SeedRejected {
        index: usize,
        reason: String,
    },
    GenerationStarted {
        generation: u32,
        consumed: u64,
    },
    JobPlanned {
        generation: u32,
        job: usize,
        kind: JobKind,
        parents: Vec<CandidateId>,
        downgraded: bool,
        experience_injected: bool,
        prompt_hash: String,
        system: String,
        prompt: String,
    },
    BackendReplied {
        generation: u32,
        job: usize,
        attempts: u32,
        latency_ms: u64,
        input_tokens: Option<u64>,
        output_tokens: Option<u64>,
        candidates: usize,
        expected: usize,
        diagnostics: Vec<ParseDiagnostic>,
        reply: String,
    },
    BackendFailed {
        generation: u32,
        job: usize,
        error: String,
    },
    ProposalRejected {
        generation: u32,
        job: Option<usize>,
        index: usize,
        reason: String,
    },
    ProposalDuplicate {
        generation: u32,
        job: Option<usize>,
        index: usize,
        duplicate_of: CandidateId,
    },
    ProposalDropped {
        generation: u32,
        job: Option<usize>,
        index: usize,
    },
    CandidateEvaluated {
        generation: u32,
        id: CandidateId,
        job: Option<usize>,
        parents: Vec<CandidateId>,
        key: String,
        valid: bool,
        raw: Vec<f64>,
        fitness: Option<f64>,
    },
    Renormalized {
        generation: u32,
        candidates: usize,
    },
    SelectionDone {
        generation: u32,
        survivors: Vec<CandidateId>,
        by_fitness: usize,
        by_pareto: usize,
    },
    ExperienceUpdated {
        generation: u32,
        version: u32,
        words: usize,
        good: Vec<CandidateId>,
        bad: Vec<CandidateId>,
        input_tokens: Option<u64>,
        output_tokens: Option<u64>,
        prompt: String,
        reply: String,
    },
    ExperienceSkipped {
        generation: u32,
        version: u32,
        reason: String,
        prompt: String,
    },
    GenerationFinished {
        generation: u32,
        proposed: usize,
        decoded: usize,
        duplicates: usize,
        evaluated: usize,
        valid: usize,
        consumed: u64,
        metrics: MetricSnapshot,
    },
    RunFinished {
        reason: StopReason,
        generations: u32,
        consumed: u64,
    },
    RunFailed {
        error: String,
    },
}

/// Destination for engine events.
pub trait EventSink {
    fn emit(&mut self, event: &Event);
}

impl EventSink for Vec<Event> {
    fn emit(&mut self, event: &Event) {
        self.push(event.clone());
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&mut self, _: &Event) {}
}

/// Writes one JSON object per line, flushing after each event.
#[derive(Debug)]
pub struct JsonlSink<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    /// First write error, if any occurred.
    pub fn take_error(&mut self) -> Option<std::io::Error> {
        self.error.take()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> EventSink for JsonlSink<W> {
    fn emit(&mut self, event: &Event) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(event).expect("events serialize");
        if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
            self.error = Some(e);
        }
    }
}

/// Fans one event out to two sinks.
pub struct Tee<'a>(pub &'a mut dyn EventSink, pub &'a mut dyn EventSink);

impl EventSink for Tee<'_> {
    fn emit(&mut self, event: &Event) {
        self.0.emit(event);
        self.1.emit(event);
    }
}
