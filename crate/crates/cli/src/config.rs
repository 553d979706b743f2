use std::path::Path;
use std::sync::Arc;

use llmopt_core::backend::{Backend, MockBackend, RemoteBackend, RemoteConfig, TaskTemplate};
use llmopt_core::engine::{random_seeds, RunConfig};
use llmopt_core::experience::ExperienceConfig;
use llmopt_core::objective::FeedbackAdapter;
use llmopt_core::problem::{
    CirclePackingConfig, CirclePackingProblem, ExternalProblem, Problem, SyntheticConfig,
    SyntheticProblem, TextMatchConfig, TextMatchProblem,
};
use llmopt_core::worker::WorkerConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

/// Which problem to optimize. Built-in domains carry their own template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    CirclePacking(CirclePackingConfig),
    Synthetic(SyntheticConfig),
    TextMatch(TextMatchConfig),
    External(ExternalConfig),
}

/// A problem served by external worker processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub name: String,
    pub worker: WorkerConfig,
    pub template: TaskTemplate,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::CirclePacking(CirclePackingConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Mock only: fraction of replies with a broken final tag.
    pub malformed_rate: f64,
    /// US dollars per million tokens, for the cost summary.
    pub input_price_per_million: f64,
    pub output_price_per_million: f64,
    pub remote: RemoteConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            malformed_rate: 0.0,
            input_price_per_million: 0.0,
            output_price_per_million: 0.0,
            remote: RemoteConfig::default(),
        }
    }
}

/// Starting population source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    /// Explicit seed candidates, in the problem's text format.
    pub candidates: Vec<String>,
    /// Random candidates to add; defaults to the population size when no
    /// explicit candidates are given.
    pub random: Option<usize>,
    /// Memo to start from instead of an empty one.
    pub prior_memo: Option<String>,
}

/// The whole TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub problem: ProblemConfig,
    pub backend: BackendConfig,
    pub engine: EngineSection,
    pub experience: ExperienceConfig,
    pub seeds: SeedConfig,
}

/// `[engine]`: every run setting except the memo, which has its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub population_size: usize,
    pub budget: u64,
    pub k_offspring: usize,
    pub p_exp: f64,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub calls_per_generation: Option<usize>,
    pub seed: u64,
    pub selector: llmopt_core::selection::SelectorMode,
    pub parallelism: usize,
    pub generation_cap: Option<u32>,
    pub stall_generations: u32,
    pub feedback_cap: usize,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = RunConfig::default();
        Self {
            population_size: d.population_size,
            budget: d.budget,
            k_offspring: d.k_offspring,
            p_exp: d.p_exp,
            p_crossover: d.p_crossover,
            p_mutation: d.p_mutation,
            calls_per_generation: d.calls_per_generation,
            seed: d.seed,
            selector: d.selector,
            parallelism: d.parallelism,
            generation_cap: d.generation_cap,
            stall_generations: d.stall_generations,
            feedback_cap: d.feedback_cap,
        }
    }
}

impl FileConfig {
    pub fn run_config(&self) -> RunConfig {
        let e = &self.engine;
        RunConfig {
            population_size: e.population_size,
            budget: e.budget,
            k_offspring: e.k_offspring,
            p_exp: e.p_exp,
            p_crossover: e.p_crossover,
            p_mutation: e.p_mutation,
            calls_per_generation: e.calls_per_generation,
            seed: e.seed,
            selector: e.selector,
            parallelism: e.parallelism,
            generation_cap: e.generation_cap,
            stall_generations: e.stall_generations,
            feedback_cap: e.feedback_cap,
            experience: self.experience.clone(),
        }
    }

    pub fn problem_name(&self) -> String {
        match &self.problem {
            ProblemConfig::CirclePacking(_) => "circle_packing".into(),
            ProblemConfig::Synthetic(_) => "synthetic".into(),
            ProblemConfig::TextMatch(_) => "text_match".into(),
            ProblemConfig::External(ext) => ext.name.clone(),
        }
    }

    /// Field-level checks that need no processes or network.
    pub fn validate(&self) -> Result<(), CliError> {
        self.run_config().validate().map_err(CliError::from_core)?;
        let b = &self.backend;
        if !(0.0..=1.0).contains(&b.malformed_rate) {
            return Err(CliError::field(
                "backend.malformed_rate",
                "must lie in [0, 1]",
            ));
        }
        if b.input_price_per_million < 0.0 || b.output_price_per_million < 0.0 {
            return Err(CliError::field(
                "backend.*_price_per_million",
                "must be non-negative",
            ));
        }
        if b.kind == BackendKind::Remote && b.remote.model.trim().is_empty() {
            return Err(CliError::field("backend.remote.model", "must not be empty"));
        }
        match &self.problem {
            ProblemConfig::CirclePacking(config) if config.circles == 0 => {
                return Err(CliError::field("problem.circles", "must be at least 1"));
            }
            ProblemConfig::Synthetic(config) => {
                if config.objectives < 2 || config.dimensions < config.objectives {
                    return Err(CliError::field(
                        "problem.objectives",
                        "need at least 2 objectives and dimensions >= objectives",
                    ));
                }
            }
            ProblemConfig::TextMatch(config) => {
                if config.target.is_empty()
                    || !config.target.chars().all(|c| config.alphabet.contains(c))
                {
                    return Err(CliError::field(
                        "problem.target",
                        "must be non-empty and drawn from the alphabet",
                    ));
                }
            }
            ProblemConfig::External(ExternalConfig {
                worker, template, ..
            }) => {
                if worker.command.is_empty() {
                    return Err(CliError::field(
                        "problem.worker.command",
                        "must not be empty",
                    ));
                }
                if worker.workers == 0 || worker.batch_size == 0 {
                    return Err(CliError::field(
                        "problem.worker",
                        "workers and batch_size must be at least 1",
                    ));
                }
                // objective names are only known after the handshake
                let probe = TaskTemplate {
                    objective_descriptions: Vec::new(),
                    ..template.clone()
                };
                probe.validate(&[]).map_err(CliError::from_core)?;
            }
            _ => {}
        }
        if let Some(0) = self.seeds.random {
            if self.seeds.candidates.is_empty() {
                return Err(CliError::field(
                    "seeds.random",
                    "no seed candidates would be produced",
                ));
            }
        }
        Ok(())
    }

    /// Instantiate the problem; external problems start their workers here.
    pub fn build_problem(&self) -> Result<Arc<dyn Problem>, CliError> {
        let problem: Arc<dyn Problem> = match &self.problem {
            ProblemConfig::CirclePacking(config) => {
                Arc::new(CirclePackingProblem::new(config.clone()))
            }
            ProblemConfig::Synthetic(config) => Arc::new(SyntheticProblem::new(config.clone())),
            ProblemConfig::TextMatch(config) => Arc::new(TextMatchProblem::new(config.clone())),
            ProblemConfig::External(ExternalConfig {
                name,
                worker,
                template,
            }) => Arc::new(
                ExternalProblem::start(
                    name.clone(),
                    worker.clone(),
                    template.clone(),
                    self.seeds.candidates.clone(),
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?,
            ),
        };
        let adapter = FeedbackAdapter::new(problem.objectives(), problem.constraints())
            .map_err(CliError::from_core)?;
        problem
            .template()
            .validate(adapter.objectives())
            .map_err(CliError::from_core)?;
        Ok(problem)
    }

    pub fn build_backend(&self, problem: &Arc<dyn Problem>) -> Result<Box<dyn Backend>, CliError> {
        match self.backend.kind {
            BackendKind::Mock => Ok(Box::new(
                MockBackend::new(self.engine.seed, Arc::clone(problem))
                    .with_malformed_rate(self.backend.malformed_rate),
            )),
            BackendKind::Remote => RemoteBackend::from_env(self.backend.remote.clone())
                .map(|b| Box::new(b) as Box<dyn Backend>)
                .map_err(|e| CliError::field("backend.remote.api_key_env", e.to_string())),
        }
    }

    pub fn backend_name(&self) -> String {
        match self.backend.kind {
            BackendKind::Mock => "mock".into(),
            BackendKind::Remote => format!("remote:{}", self.backend.remote.model),
        }
    }

    /// Explicit seeds followed by random ones from the seed stream.
    pub fn seed_candidates(&self, problem: &dyn Problem) -> Vec<String> {
        let random = self
            .seeds
            .random
            .unwrap_or(if self.seeds.candidates.is_empty() {
                self.engine.population_size
            } else {
                0
            });
        let mut seeds = self.seeds.candidates.clone();
        seeds.extend(random_seeds(problem, random, self.engine.seed));
        seeds
    }

    pub fn estimated_cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        (input_tokens as f64 * self.backend.input_price_per_million
            + output_tokens as f64 * self.backend.output_price_per_million)
            / 1e6
    }
}

/// A parsed config plus the raw table it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: FileConfig,
    /// Effective table after overrides; written as the run snapshot.
    pub table: Table,
    pub overrides: Vec<String>,
}

impl LoadedConfig {
    /// TOML text that replays this run, overrides recorded as leading comments.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for o in &self.overrides {
            out.push_str(&format!("# override: {o}\n"));
        }
        if !self.overrides.is_empty() {
            out.push('\n');
        }
        out.push_str(&toml::to_string_pretty(&self.table).expect("tables serialize"));
        out
    }
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
        CliError::Validation(format!("invalid TOML: {}", e.message()))
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: FileConfig = FileConfig::deserialize(Value::Table(table.clone()))
        .map_err(|e| CliError::Validation(e.message().to_string()))?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        table,
        overrides: overrides.to_vec(),
    })
}

/// Apply one `dotted.key=value` override. Values parse as TOML when they can
/// and fall back to plain strings.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(CliError::Validation(format!(
            "override `{spec}` has an empty key"
        )));
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for part in path {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::field(key, format!("`{part}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
