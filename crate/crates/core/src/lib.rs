//! Evolutionary optimization where a language model proposes the offspring.
//!
//! The engine keeps a population of text candidates, asks a [`backend::Backend`]
//! for variations of selected parents, scores them through a [`problem::Problem`],
//! and selects survivors on scalar fitness and Pareto rank together.

pub mod backend;
pub mod engine;
pub mod error;
pub mod experience;
pub mod metrics;
pub mod objective;
pub mod problem;
pub mod rng;
pub mod selection;
pub mod worker;

pub use error::{Error, Result};
