//! Multi-objective test family with a closed-form Pareto front.
//!
//! The first `m - 1` coordinates position a point along the front; the rest
//! measure distance from it through `g`, which is zero exactly when every
//! tail coordinate equals `x[0]`.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::{Rng, RngCore};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DecodeError, Payload, Problem};
use crate::backend::{ObjectiveDescription, TaskTemplate};
use crate::objective::{Comparator, ConstraintSpec, ObjectiveSpec, RawEvaluation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontShape {
    #[default]
    Concave,
    Linear,
    Convex,
}

impl FrontShape {
    fn exponent(self) -> i32 {
        match self {
            FrontShape::Concave => 1,
            FrontShape::Linear => 2,
            FrontShape::Convex => 4,
        }
    }

    /// Residual of the front equation: zero on the front, positive behind it.
    pub fn front_residual(self, f: &[f64]) -> f64 {
        let p = 2.0 / self.exponent() as f64;
        f.iter().map(|v| v.max(0.0).powf(p)).sum::<f64>() - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dimensions: usize,
    pub objectives: usize,
    pub shape: FrontShape,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dimensions: 6,
            objectives: 2,
            shape: FrontShape::Concave,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    config: SyntheticConfig,
    objectives: Vec<ObjectiveSpec>,
    constraints: Vec<ConstraintSpec>,
    template: TaskTemplate,
}

impl SyntheticProblem {
    pub fn new(config: SyntheticConfig) -> Self {
        let m = config.objectives.max(1);
        let d = config.dimensions.max(m.saturating_sub(1)).max(1);
        let config = SyntheticConfig {
            dimensions: d,
            objectives: m,
            ..config
        };
        let objectives: Vec<_> = (1..=m)
            .map(|i| ObjectiveSpec::minimize(format!("f{i}")).with_bounds(0.0, 1.0))
            .collect();
        let constraints = vec![ConstraintSpec::new("domain", Comparator::Le, 0.0).soft()];
        let template = TaskTemplate {
            task_description: format!(
                "Propose real vectors x of length {d} with every component in [0, 1]. Each vector \
                 is scored on {m} competing objectives, all to be minimized."
            ),
            output_format: "Each candidate must begin with <candidate> and end with </candidate>, \
                            for example:\n<candidate>\nx = [0.1, 0.5, ...]\n</candidate>"
                .into(),
            mutation_instruction: "Perturb some components of the parent vector.".into(),
            crossover_instruction: "Mix components of the two parent vectors.".into(),
            additional_requirements: "Components outside [0, 1] are clamped and reported as a \
                                      domain violation."
                .into(),
            objective_descriptions: (1..=m)
                .map(|i| ObjectiveDescription {
                    name: format!("f{i}"),
                    description: format!("objective {i} of the trade-off"),
                })
                .collect(),
        };
        Self {
            config,
            objectives,
            constraints,
            template,
        }
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    /// Objective values and total clamping for a raw vector.
    pub fn objective_values(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let m = self.config.objectives;
        let mut clamped = 0.0;
        let x: Vec<f64> = x
            .iter()
            .map(|&v| {
                let c = v.clamp(0.0, 1.0);
                clamped += (v - c).abs();
                c
            })
            .collect();
        let tail = &x[(m - 1).min(x.len())..];
        let g = if tail.is_empty() {
            0.0
        } else {
            tail.iter().map(|v| (v - x[0]).powi(2)).sum::<f64>() / tail.len() as f64
        };
        let angles: Vec<f64> = x[..m - 1].iter().map(|v| v * FRAC_PI_2).collect();
        // u[0] = sin a0, u[i] = cos a0 ... cos a(i-1) sin a(i), u[m-1] = prod cos
        let mut u = Vec::with_capacity(m);
        let mut prefix = 1.0;
        for a in &angles {
            u.push(prefix * a.sin());
            prefix *= a.cos();
        }
        u.push(prefix);
        let e = self.config.shape.exponent();
        let f = u.iter().map(|ui| (1.0 + g) * ui.max(0.0).powi(e)).collect();
        (f, clamped)
    }

    fn values(payload: &Payload) -> Option<&[f64]> {
        match payload {
            Payload::Vector { values } => Some(values),
            _ => None,
        }
    }
}

impl Problem for SyntheticProblem {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn objectives(&self) -> &[ObjectiveSpec] {
        &self.objectives
    }

    fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    fn template(&self) -> &TaskTemplate {
        &self.template
    }

    fn decode(&self, text: &str) -> Result<Payload, DecodeError> {
        static NUMBER: OnceLock<Regex> = OnceLock::new();
        let number = NUMBER.get_or_init(|| {
            Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?").expect("valid regex")
        });
        let body = text.split_once('=').map_or(text, |(_, rhs)| rhs);
        let values: Vec<f64> = number
            .find_iter(body)
            .filter_map(|m| m.as_str().parse().ok())
            .collect();
        if values.len() != self.config.dimensions {
            return Err(DecodeError::new(format!(
                "expected {} components, got {}",
                self.config.dimensions,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecodeError::new("non-finite component"));
        }
        Ok(Payload::Vector { values })
    }

    fn canonical_key(&self, payload: &Payload) -> String {
        Self::values(payload)
            .map(|v| {
                v.iter()
                    .map(|x| format!("{x:.6}"))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .unwrap_or_default()
    }

    fn evaluate(&self, payload: &Payload) -> RawEvaluation {
        let Some(x) = Self::values(payload) else {
            return RawEvaluation::invalid("payload is not a vector");
        };
        if x.len() != self.config.dimensions {
            return RawEvaluation::invalid("wrong vector length");
        }
        let (f, clamped) = self.objective_values(x);
        RawEvaluation {
            objectives: f,
            constraints: vec![clamped],
            feedback: (clamped > 0.0).then(|| "some components were clamped into [0, 1]".into()),
            valid: true,
            refined_text: None,
        }
    }

    fn distance(&self, a: &Payload, b: &Payload) -> f64 {
        match (Self::values(a), Self::values(b)) {
            (Some(a), Some(b)) if a.len() == b.len() && !a.is_empty() => {
                let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
                (sq.sqrt() / (a.len() as f64).sqrt()).min(1.0)
            }
            _ => 1.0,
        }
    }

    fn render(&self, payload: &Payload) -> String {
        let mut out = String::from("x = [");
        if let Some(v) = Self::values(payload) {
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{x:.6}");
            }
        }
        out.push(']');
        out
    }

    fn random_candidate(&self, rng: &mut dyn RngCore) -> String {
        let values = (0..self.config.dimensions)
            .map(|_| rng.random::<f64>())
            .collect();
        self.render(&Payload::Vector { values })
    }

    fn vary(&self, parents: &[&Payload], rng: &mut dyn RngCore) -> String {
        let vecs: Vec<&[f64]> = parents.iter().filter_map(|p| Self::values(p)).collect();
        let Some(first) = vecs.first() else {
            return self.random_candidate(rng);
        };
        let mut child: Vec<f64> = match vecs.get(1) {
            Some(second) if second.len() == first.len() => first
                .iter()
                .zip(second.iter())
                .map(|(a, b)| {
                    let t = rng.random::<f64>();
                    a + t * (b - a)
                })
                .collect(),
            _ => first.to_vec(),
        };
        let sigma = rng.random_range(0.02..0.2);
        for v in &mut child {
            if rng.random_bool(0.5) {
                *v = (*v + rng.random_range(-sigma..sigma)).clamp(0.0, 1.0);
            }
        }
        self.render(&Payload::Vector { values: child })
    }
}
