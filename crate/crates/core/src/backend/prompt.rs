use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::template::{TaskTemplate, CLOSE_TAG, OPEN_TAG};
use crate::objective::{Direction, ObjectiveSpec};

pub const SYSTEM_PREAMBLE: &str = "You are an optimization engine. You propose new candidate \
solutions by editing or recombining the parent candidates you are shown, guided by their \
evaluations. Follow the output format exactly.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Mutation,
    Crossover,
}

impl JobKind {
    pub fn parent_count(self) -> usize {
        match self {
            JobKind::Mutation => 1,
            JobKind::Crossover => 2,
        }
    }
}

/// One parent as shown to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentBlock {
    pub text: String,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_preamble: String,
    pub body: String,
    pub kind: JobKind,
    pub parents: Vec<ParentBlock>,
    pub experience_block: Option<String>,
    pub k_request: usize,
}

/// Assemble the variation prompt for one job.
///
/// Section order is fixed: task, objectives, parents, the instruction for the
/// job kind, additional requirements, optional experience, output format.
pub fn build_prompt(
    template: &TaskTemplate,
    objectives: &[ObjectiveSpec],
    kind: JobKind,
    parents: &[ParentBlock],
    experience: Option<&str>,
    k: usize,
) -> PromptBundle {
    assert_eq!(
        parents.len(),
        kind.parent_count(),
        "parent count does not match job kind"
    );
    let mut body = String::new();

    section(
        &mut body,
        "Task Description",
        template.task_description.trim(),
    );

    let mut objs = String::new();
    for spec in objectives {
        let dir = match spec.direction {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        };
        let _ = write!(objs, "- {} ({dir})", spec.name);
        if let Some(desc) = template.describe(&spec.name) {
            let _ = write!(objs, ": {}", desc.trim());
        }
        objs.push('\n');
    }
    section(&mut body, "Objectives", objs.trim_end());

    let mut parent_text = String::new();
    for (i, p) in parents.iter().enumerate() {
        let _ = write!(
            parent_text,
            "### Parent {}\n```\n{}\n```\nEvaluation:\n{}\n",
            i + 1,
            p.text.trim(),
            p.feedback.trim_end()
        );
    }
    section(&mut body, "Parent Candidates", parent_text.trim_end());

    let (title, instruction, fallback) = match kind {
        JobKind::Mutation => (
            "Mutation Instruction",
            &template.mutation_instruction,
            "Propose variations of the parent candidate.",
        ),
        JobKind::Crossover => (
            "Crossover Instruction",
            &template.crossover_instruction,
            "Propose candidates that combine the strengths of both parents.",
        ),
    };
    let instruction = instruction.trim();
    section(
        &mut body,
        title,
        if instruction.is_empty() {
            fallback
        } else {
            instruction
        },
    );

    let extra = template.additional_requirements.trim();
    if !extra.is_empty() {
        section(&mut body, "Additional Requirements", extra);
    }

    if let Some(memo) = experience {
        section(&mut body, "Experience", memo);
    }

    let format = format!(
        "{}\nPropose exactly {k} new candidate{}. Wrap each one in {OPEN_TAG} and {CLOSE_TAG}.",
        template.output_format.trim(),
        if k == 1 { "" } else { "s" }
    );
    section(&mut body, "Output Format", &format);

    PromptBundle {
        system_preamble: SYSTEM_PREAMBLE.to_string(),
        body,
        kind,
        parents: parents.to_vec(),
        experience_block: experience.map(str::to_string),
        k_request: k,
    }
}

fn section(out: &mut String, title: &str, content: &str) {
    if !out.is_empty() {
        out.push('\n');
    }
    let _ = writeln!(out, "## {title}\n{content}");
}
