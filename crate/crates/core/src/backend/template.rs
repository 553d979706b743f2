use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::ObjectiveSpec;

pub const OPEN_TAG: &str = "<candidate>";
pub const CLOSE_TAG: &str = "</candidate>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveDescription {
    pub name: String,
    pub description: String,
}

/// The five-part task template filled in per problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplate {
    pub task_description: String,
    /// Must show the candidate tag convention, typically with an example.
    pub output_format: String,
    #[serde(default)]
    pub mutation_instruction: String,
    #[serde(default)]
    pub crossover_instruction: String,
    #[serde(default)]
    pub additional_requirements: String,
    #[serde(default)]
    pub objective_descriptions: Vec<ObjectiveDescription>,
}

impl TaskTemplate {
    pub fn validate(&self, objectives: &[ObjectiveSpec]) -> Result<()> {
        if !self.output_format.contains(OPEN_TAG) || !self.output_format.contains(CLOSE_TAG) {
            return Err(Error::Template(format!(
                "output_format must show both `{OPEN_TAG}` and `{CLOSE_TAG}`"
            )));
        }
        if self.task_description.trim().is_empty() {
            return Err(Error::Template("task_description is empty".into()));
        }
        for d in &self.objective_descriptions {
            if !objectives.iter().any(|o| o.name == d.name) {
                return Err(Error::Template(format!(
                    "objective description `{}` does not name a declared objective",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn describe(&self, objective: &str) -> Option<&str> {
        self.objective_descriptions
            .iter()
            .find(|d| d.name == objective)
            .map(|d| d.description.as_str())
    }
}
