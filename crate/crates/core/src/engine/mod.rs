//! Generation driver: pairing, variation, evaluation, selection and the memo.

mod candidate;
mod config;
mod events;
mod ledger;
mod run;

pub use candidate::{Candidate, CandidateId, Population};
pub use config::RunConfig;
pub use events::{Event, EventSink, JsonlSink, NullSink, StopReason, Tee};
pub use ledger::{Admission, BudgetLedger};
pub use run::{
    initialize_run, random_seeds, ExperienceRecord, GenerationReport, RunState, RunSummary,
    VariationJob,
};
