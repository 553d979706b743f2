//! String-matching toy domain: reproduce a target phrase.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{DecodeError, Payload, Problem};
use crate::backend::{ObjectiveDescription, TaskTemplate};
use crate::objective::{ConstraintSpec, ObjectiveSpec, RawEvaluation};

/// Edit distance over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance scaled into [0, 1].
pub(crate) fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

/// One random insert, delete or substitute drawn from `alphabet`.
pub(crate) fn random_edit(text: &mut Vec<char>, alphabet: &[char], rng: &mut dyn RngCore) {
    if alphabet.is_empty() {
        return;
    }
    let pick = |rng: &mut dyn RngCore| alphabet[rng.random_range(0..alphabet.len())];
    match rng.random_range(0..3) {
        0 => {
            let at = rng.random_range(0..=text.len());
            let c = pick(rng);
            text.insert(at, c);
        }
        1 if text.len() > 1 => {
            let at = rng.random_range(0..text.len());
            text.remove(at);
        }
        _ if !text.is_empty() => {
            let at = rng.random_range(0..text.len());
            text[at] = pick(rng);
        }
        _ => text.push(pick(rng)),
    }
}

/// One-point crossover on chars.
pub(crate) fn one_point_crossover(a: &[char], b: &[char], rng: &mut dyn RngCore) -> Vec<char> {
    let cut_a = rng.random_range(0..=a.len());
    let cut_b = rng.random_range(0..=b.len());
    a[..cut_a].iter().chain(&b[cut_b..]).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextMatchConfig {
    pub target: String,
    pub alphabet: String,
}

impl Default for TextMatchConfig {
    fn default() -> Self {
        Self {
            target: "evolution finds a way".into(),
            alphabet: "abcdefghijklmnopqrstuvwxyz ".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextMatchProblem {
    target: Vec<char>,
    alphabet: Vec<char>,
    objectives: Vec<ObjectiveSpec>,
    template: TaskTemplate,
}

impl TextMatchProblem {
    pub fn new(config: TextMatchConfig) -> Self {
        let target: Vec<char> = config.target.chars().collect();
        let mut alphabet: Vec<char> = config.alphabet.chars().collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        let len = target.len().max(1) as f64;
        let objectives = vec![
            ObjectiveSpec::maximize("match").with_bounds(0.0, 1.0),
            ObjectiveSpec::minimize("length_error").with_bounds(0.0, len),
        ];
        let template = TaskTemplate {
            task_description: format!(
                "Guess a hidden phrase of {} characters drawn from the alphabet `{}`.",
                target.len(),
                config.alphabet
            ),
            output_format: "Each candidate must begin with <candidate> and end with </candidate>, \
                            containing only the phrase."
                .into(),
            mutation_instruction: "Change, insert or delete a few characters.".into(),
            crossover_instruction: "Splice a prefix of one parent onto a suffix of the other."
                .into(),
            additional_requirements: String::new(),
            objective_descriptions: vec![
                ObjectiveDescription {
                    name: "match".into(),
                    description: "fraction of positions that hold the right character".into(),
                },
                ObjectiveDescription {
                    name: "length_error".into(),
                    description: "absolute difference from the hidden length".into(),
                },
            ],
        };
        Self {
            target,
            alphabet,
            objectives,
            template,
        }
    }

    fn filler(&self) -> char {
        self.alphabet
            .iter()
            .copied()
            .find(|c| !c.is_whitespace())
            .unwrap_or('a')
    }

    fn text(payload: &Payload) -> Option<&str> {
        match payload {
            Payload::Text { text } => Some(text),
            _ => None,
        }
    }
}

impl Problem for TextMatchProblem {
    fn name(&self) -> &str {
        "text_match"
    }

    fn objectives(&self) -> &[ObjectiveSpec] {
        &self.objectives
    }

    fn constraints(&self) -> &[ConstraintSpec] {
        &[]
    }

    fn template(&self) -> &TaskTemplate {
        &self.template
    }

    fn decode(&self, text: &str) -> Result<Payload, DecodeError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(DecodeError::new("empty phrase"));
        }
        if let Some(bad) = text
            .chars()
            .find(|c| self.alphabet.binary_search(c).is_err())
        {
            return Err(DecodeError::new(format!(
                "character {bad:?} is not in the alphabet"
            )));
        }
        if text.chars().count() > 4 * self.target.len().max(1) {
            return Err(DecodeError::new("phrase is far too long"));
        }
        Ok(Payload::Text {
            text: text.to_string(),
        })
    }

    fn canonical_key(&self, payload: &Payload) -> String {
        Self::text(payload).unwrap_or_default().to_string()
    }

    fn evaluate(&self, payload: &Payload) -> RawEvaluation {
        let Some(text) = Self::text(payload) else {
            return RawEvaluation::invalid("payload is not text");
        };
        let chars: Vec<char> = text.chars().collect();
        let hits = self
            .target
            .iter()
            .zip(&chars)
            .filter(|(a, b)| a == b)
            .count();
        let len = self.target.len().max(1);
        let length_error = chars.len().abs_diff(self.target.len()) as f64;
        RawEvaluation {
            objectives: vec![hits as f64 / len as f64, length_error],
            constraints: vec![],
            feedback: Some(format!("{hits} of {} positions correct", self.target.len())),
            valid: true,
            refined_text: None,
        }
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
        let len = self.target.len().max(1) + rng.random_range(0..4);
        let s: String = (0..len)
            .map(|_| self.alphabet[rng.random_range(0..self.alphabet.len())])
            .collect();
        match s.trim() {
            "" => self.filler().to_string(),
            t => t.to_string(),
        }
    }

    fn vary(&self, parents: &[&Payload], rng: &mut dyn RngCore) -> String {
        let texts: Vec<Vec<char>> = parents
            .iter()
            .filter_map(|p| Self::text(p))
            .map(|t| t.chars().collect())
            .collect();
        let mut child = match texts.as_slice() {
            [] => return self.random_candidate(rng),
            [a] => a.clone(),
            [a, b, ..] => one_point_crossover(a, b, rng),
        };
        for _ in 0..rng.random_range(1..=3) {
            random_edit(&mut child, &self.alphabet, rng);
        }
        let s: String = child.into_iter().collect();
        let s = s.trim();
        if s.is_empty() {
            self.filler().to_string()
        } else {
            s.to_string()
        }
    }
}
