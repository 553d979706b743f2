use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experience::ExperienceConfig;
use crate::objective::FeedbackAdapter;
use crate::selection::SelectorMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub population_size: usize,
    /// Oracle calls available to the whole run, seeds included.
    pub budget: u64,
    pub k_offspring: usize,
    pub p_exp: f64,
    pub p_crossover: f64,
    pub p_mutation: f64,
    /// Backend calls per generation; `ceil(N / k)` when unset.
    pub calls_per_generation: Option<usize>,
    pub seed: u64,
    pub selector: SelectorMode,
    /// Concurrent backend calls and evaluation chunks.
    pub parallelism: usize,
    pub generation_cap: Option<u32>,
    /// Stop after this many consecutive generations that evaluate nothing new.
    pub stall_generations: u32,
    pub feedback_cap: usize,
    pub experience: ExperienceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            budget: 1000,
            k_offspring: 2,
            p_exp: 0.5,
            p_crossover: 0.8,
            p_mutation: 0.2,
            calls_per_generation: None,
            seed: 0,
            selector: SelectorMode::Hybrid,
            parallelism: 4,
            generation_cap: None,
            stall_generations: 100,
            feedback_cap: FeedbackAdapter::DEFAULT_FEEDBACK_CAP,
            experience: ExperienceConfig::default(),
        }
    }
}

fn probability(field: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in [0, 1], got {p}")))
    }
}

impl RunConfig {
    pub fn calls_per_generation(&self) -> usize {
        self.calls_per_generation
            .unwrap_or_else(|| self.population_size.div_ceil(self.k_offspring.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::config("population_size", "must be at least 1"));
        }
        if self.k_offspring == 0 {
            return Err(Error::config("k_offspring", "must be at least 1"));
        }
        if self.budget < self.population_size as u64 {
            return Err(Error::config(
                "budget",
                format!(
                    "budget {} is smaller than population_size {}",
                    self.budget, self.population_size
                ),
            ));
        }
        probability("p_exp", self.p_exp)?;
        probability("p_crossover", self.p_crossover)?;
        probability("p_mutation", self.p_mutation)?;
        let total = self.p_crossover + self.p_mutation;
        if total <= 0.0 || total > 1.0 + 1e-9 {
            return Err(Error::config(
                "p_crossover",
                format!("p_crossover + p_mutation must lie in (0, 1], got {total}"),
            ));
        }
        if self.calls_per_generation == Some(0) {
            return Err(Error::config("calls_per_generation", "must be at least 1"));
        }
        if self.parallelism == 0 {
            return Err(Error::config("parallelism", "must be at least 1"));
        }
        if self.generation_cap == Some(0) {
            return Err(Error::config(
                "generation_cap",
                "must be at least 1 when set",
            ));
        }
        if self.stall_generations == 0 {
            return Err(Error::config("stall_generations", "must be at least 1"));
        }
        if self.experience.word_cap == 0 {
            return Err(Error::config("experience.word_cap", "must be at least 1"));
        }
        Ok(())
    }
}
