//! Objective and constraint handling: direction-unified normalization, scalar
//! fitness, constraint promotion and the compact feedback block shown to the
//! backend.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance under which a constraint margin counts as satisfied.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Ranges narrower than this normalize to 0.5.
const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSource {
    #[default]
    Native,
    PromotedConstraint,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub direction: Direction,
    /// Declared raw-unit bounds `(lo, hi)`; running min/max is used when absent.
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default)]
    pub source: ObjectiveSource,
}

impl ObjectiveSpec {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        Self {
            name: name.into(),
            direction,
            bounds: None,
            weight: 1.0,
            source: ObjectiveSource::Native,
        }
    }

    pub fn maximize(name: impl Into<String>) -> Self {
        Self::new(name, Direction::Maximize)
    }

    pub fn minimize(name: impl Into<String>) -> Self {
        Self::new(name, Direction::Minimize)
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    #[default]
    Hard,
    Soft,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub name: String,
    pub comparator: Comparator,
    pub threshold: f64,
    #[serde(default)]
    pub severity: Severity,
    #[serde(default)]
    pub promote: bool,
    /// Violation margin that maps to a normalized score of zero when promoted.
    #[serde(default = "unit_scale")]
    pub margin_scale: f64,
    /// Half-width of the accepted band around the threshold for `=` constraints.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl ConstraintSpec {
    pub fn new(name: impl Into<String>, comparator: Comparator, threshold: f64) -> Self {
        Self {
            name: name.into(),
            comparator,
            threshold,
            severity: Severity::Hard,
            promote: false,
            margin_scale: 1.0,
            tolerance: None,
        }
    }

    pub fn soft(mut self) -> Self {
        self.severity = Severity::Soft;
        self
    }

    pub fn promoted(mut self, margin_scale: f64) -> Self {
        self.promote = true;
        self.margin_scale = margin_scale;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }

    /// Distance past the threshold; zero when satisfied.
    pub fn violation_margin(&self, value: f64) -> f64 {
        let margin = match self.comparator {
            Comparator::Le => value - self.threshold,
            Comparator::Ge => self.threshold - value,
            Comparator::Eq => (value - self.threshold).abs() - self.tolerance.unwrap_or(0.0),
        };
        margin.max(0.0)
    }
}

/// Turn a constraint into a minimize-margin objective.
pub fn promote_constraint(spec: &ConstraintSpec) -> Result<ObjectiveSpec> {
    let field = format!("constraints.{}", spec.name);
    if !spec.promote {
        return Err(Error::config(
            field,
            "constraint is not marked for promotion",
        ));
    }
    if spec.comparator == Comparator::Eq && spec.tolerance.is_none() {
        return Err(Error::config(
            field,
            "equality constraint needs a tolerance band before it can be promoted",
        ));
    }
    if !(spec.margin_scale.is_finite() && spec.margin_scale > 0.0) {
        return Err(Error::config(
            field,
            "margin_scale must be positive and finite",
        ));
    }
    Ok(ObjectiveSpec {
        name: format!("{}_violation", spec.name),
        direction: Direction::Minimize,
        bounds: Some((0.0, spec.margin_scale)),
        weight: 1.0,
        source: ObjectiveSource::PromotedConstraint,
    })
}

/// Running per-objective min/max over everything evaluated so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservedRanges {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl ObservedRanges {
    pub fn new(dimensions: usize) -> Self {
        Self {
            min: vec![f64::INFINITY; dimensions],
            max: vec![f64::NEG_INFINITY; dimensions],
        }
    }

    /// Returns true if any range widened.
    pub fn observe(&mut self, raw: &[f64]) -> bool {
        if self.min.len() < raw.len() {
            self.min.resize(raw.len(), f64::INFINITY);
            self.max.resize(raw.len(), f64::NEG_INFINITY);
        }
        let mut changed = false;
        for (i, &v) in raw.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            if v < self.min[i] {
                self.min[i] = v;
                changed = true;
            }
            if v > self.max[i] {
                self.max[i] = v;
                changed = true;
            }
        }
        changed
    }

    pub fn range(&self, index: usize) -> Option<(f64, f64)> {
        let lo = *self.min.get(index)?;
        let hi = *self.max.get(index)?;
        (lo.is_finite() && hi.is_finite()).then_some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("objective {index} is not finite")]
pub struct NonFiniteObjective {
    pub index: usize,
}

/// Map raw objective values onto `[0, 1]`, larger is better.
pub fn normalize(
    raw: &[f64],
    specs: &[ObjectiveSpec],
    ranges: &ObservedRanges,
) -> std::result::Result<Vec<f64>, NonFiniteObjective> {
    assert_eq!(
        raw.len(),
        specs.len(),
        "objective vector and specs differ in length"
    );
    raw.iter()
        .zip(specs)
        .enumerate()
        .map(|(index, (&value, spec))| {
            if !value.is_finite() {
                return Err(NonFiniteObjective { index });
            }
            let (lo, hi) = match spec.bounds.or_else(|| ranges.range(index)) {
                Some(b) => b,
                None => return Ok(0.5),
            };
            let width = hi - lo;
            let scaled = if width.abs() < DEGENERATE_RANGE {
                0.5
            } else {
                ((value - lo) / width).clamp(0.0, 1.0)
            };
            Ok(match spec.direction {
                Direction::Maximize => scaled,
                Direction::Minimize => 1.0 - scaled,
            })
        })
        .collect()
}

/// Weighted sum of normalized objectives.
pub fn scalarize(normalized: &[f64], specs: &[ObjectiveSpec]) -> f64 {
    assert_eq!(
        normalized.len(),
        specs.len(),
        "objective vector and specs differ in length"
    );
    normalized
        .iter()
        .zip(specs)
        .map(|(v, s)| s.weight * v)
        .sum()
}

/// What a problem's oracle reports before normalization.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawEvaluation {
    /// One value per native objective, in spec order.
    pub objectives: Vec<f64>,
    /// One value per constraint, in spec order.
    pub constraints: Vec<f64>,
    pub feedback: Option<String>,
    pub valid: bool,
    /// A corrected rendering of the candidate (e.g. after geometric repair).
    pub refined_text: Option<String>,
}

impl RawEvaluation {
    pub fn invalid(reason: impl Into<String>) -> Self {
        Self {
            feedback: Some(reason.into()),
            valid: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintValue {
    pub name: String,
    pub comparator: Comparator,
    pub threshold: f64,
    pub value: f64,
    pub margin: f64,
    pub severity: Severity,
}

impl ConstraintValue {
    pub fn satisfied(&self) -> bool {
        self.margin <= FEASIBILITY_TOLERANCE
    }
}

/// Adapter output for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// Raw values for every effective objective, promoted margins included.
    pub raw: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
    pub fitness: Option<f64>,
    pub constraints: Vec<ConstraintValue>,
    pub feedback_text: Option<String>,
    pub valid: bool,
}

impl EvaluationResult {
    pub fn invalid(reason: impl Into<String>) -> Self {
        Self {
            raw: Vec::new(),
            normalized: None,
            fitness: None,
            constraints: Vec::new(),
            feedback_text: Some(reason.into()),
            valid: false,
        }
    }
}

/// Unifies objectives, constraints and textual feedback for one problem.
#[derive(Debug, Clone)]
pub struct FeedbackAdapter {
    objectives: Vec<ObjectiveSpec>,
    constraints: Vec<ConstraintSpec>,
    native_count: usize,
    feedback_cap: usize,
}

impl FeedbackAdapter {
    pub const DEFAULT_FEEDBACK_CAP: usize = 2000;

    pub fn new(native: &[ObjectiveSpec], constraints: &[ConstraintSpec]) -> Result<Self> {
        let mut objectives = native.to_vec();
        for spec in native {
            let field = format!("objectives.{}", spec.name);
            if let Some((lo, hi)) = spec.bounds {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::config(field, "bounds must satisfy lo < hi"));
                }
            }
            if !(spec.weight.is_finite() && spec.weight >= 0.0) {
                return Err(Error::config(
                    field,
                    "weight must be finite and non-negative",
                ));
            }
        }
        for c in constraints {
            if !c.threshold.is_finite() {
                return Err(Error::config(
                    format!("constraints.{}", c.name),
                    "threshold must be finite",
                ));
            }
            if c.promote {
                objectives.push(promote_constraint(c)?);
            }
        }
        let mut seen = BTreeSet::new();
        for o in &objectives {
            if !seen.insert(o.name.as_str()) {
                return Err(Error::config(
                    format!("objectives.{}", o.name),
                    "objective names must be unique",
                ));
            }
        }
        if objectives.is_empty() {
            return Err(Error::config(
                "objectives",
                "at least one objective is required",
            ));
        }
        Ok(Self {
            objectives,
            constraints: constraints.to_vec(),
            native_count: native.len(),
            feedback_cap: Self::DEFAULT_FEEDBACK_CAP,
        })
    }

    pub fn with_feedback_cap(mut self, cap: usize) -> Self {
        self.feedback_cap = cap;
        self
    }

    /// Effective objectives: native ones followed by promoted constraints.
    pub fn objectives(&self) -> &[ObjectiveSpec] {
        &self.objectives
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn dimensions(&self) -> usize {
        self.objectives.len()
    }

    /// True when some objective falls back to running min/max.
    pub fn uses_running_ranges(&self) -> bool {
        self.objectives.iter().any(|o| o.bounds.is_none())
    }

    /// Expand the native raw vector with promoted-constraint margins.
    pub fn effective_raw(&self, raw: &RawEvaluation) -> Option<Vec<f64>> {
        if !raw.valid
            || raw.objectives.len() != self.native_count
            || raw.constraints.len() != self.constraints.len()
        {
            return None;
        }
        let mut out = raw.objectives.clone();
        for (spec, &value) in self.constraints.iter().zip(&raw.constraints) {
            if spec.promote {
                out.push(spec.violation_margin(value));
            }
        }
        Some(out)
    }

    pub fn assess(&self, raw: &RawEvaluation, ranges: &ObservedRanges) -> EvaluationResult {
        if !raw.valid {
            return EvaluationResult::invalid(
                raw.feedback
                    .clone()
                    .unwrap_or_else(|| "rejected by oracle".into()),
            );
        }
        if raw.objectives.len() != self.native_count {
            return EvaluationResult::invalid(format!(
                "expected {} objective values, got {}",
                self.native_count,
                raw.objectives.len()
            ));
        }
        if raw.constraints.len() != self.constraints.len() {
            return EvaluationResult::invalid(format!(
                "expected {} constraint values, got {}",
                self.constraints.len(),
                raw.constraints.len()
            ));
        }
        let constraints: Vec<ConstraintValue> = self
            .constraints
            .iter()
            .zip(&raw.constraints)
            .map(|(spec, &value)| ConstraintValue {
                name: spec.name.clone(),
                comparator: spec.comparator,
                threshold: spec.threshold,
                value,
                margin: if value.is_finite() {
                    spec.violation_margin(value)
                } else {
                    f64::INFINITY
                },
                severity: spec.severity,
            })
            .collect();
        let effective = self.effective_raw(raw).expect("lengths checked above");
        let mut result = EvaluationResult {
            raw: effective,
            normalized: None,
            fitness: None,
            constraints,
            feedback_text: raw.feedback.clone(),
            valid: false,
        };
        if let Some(c) = result
            .constraints
            .iter()
            .find(|c| c.severity == Severity::Hard && !c.satisfied())
        {
            let reason = format!(
                "hard constraint `{}` violated by {}",
                c.name,
                fmt_num(c.margin)
            );
            result.feedback_text = Some(match raw.feedback.as_deref() {
                Some(f) => format!("{reason}; {f}"),
                None => reason,
            });
            return result;
        }
        match normalize(&result.raw, &self.objectives, ranges) {
            Ok(norm) => {
                result.fitness = Some(scalarize(&norm, &self.objectives));
                result.normalized = Some(norm);
                result.valid = true;
            }
            Err(e) => {
                let name = &self.objectives[e.index].name;
                result.feedback_text = Some(format!("objective `{name}` is not finite"));
            }
        }
        result
    }

    /// Recompute normalized values and fitness against updated ranges.
    pub fn renormalize(&self, result: &mut EvaluationResult, ranges: &ObservedRanges) {
        if !result.valid {
            return;
        }
        if let Ok(norm) = normalize(&result.raw, &self.objectives, ranges) {
            result.fitness = Some(scalarize(&norm, &self.objectives));
            result.normalized = Some(norm);
        }
    }

    /// Compact text block describing an evaluation for the next prompt.
    pub fn format_feedback(&self, result: &EvaluationResult) -> String {
        let mut out = String::new();
        if !result.valid {
            let reason = result.feedback_text.as_deref().unwrap_or("no reason given");
            let _ = writeln!(out, "status: INVALID ({reason})");
        }
        if !result.raw.is_empty() {
            out.push_str("objectives:\n");
            for (spec, value) in self.objectives.iter().zip(&result.raw) {
                let arrow = match spec.direction {
                    Direction::Maximize => "maximize",
                    Direction::Minimize => "minimize",
                };
                let _ = writeln!(out, "  {}: {} ({arrow})", spec.name, fmt_num(*value));
            }
        }
        if let Some(f) = result.fitness {
            let _ = writeln!(out, "fitness: {}", fmt_num(f));
        }
        if !result.constraints.is_empty() {
            out.push_str("constraints:\n");
            for c in &result.constraints {
                let status = if c.satisfied() {
                    "satisfied".to_string()
                } else {
                    format!("VIOLATED by margin {}", fmt_num(c.margin))
                };
                let _ = writeln!(
                    out,
                    "  {} {} {}: {} (value {})",
                    c.name,
                    c.comparator.symbol(),
                    fmt_num(c.threshold),
                    status,
                    fmt_num(c.value)
                );
            }
        }
        if result.valid {
            if let Some(text) = &result.feedback_text {
                out.push_str("feedback:\n");
                out.push_str(text);
                out.push('\n');
            }
        }
        truncate_chars(&out, self.feedback_cap)
    }
}

/// Fixed-precision rendering with trailing zeros trimmed.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub const TRUNCATION_MARK: &str = "...[truncated]";

fn truncate_chars(s: &str, cap: usize) -> String {
    if s.chars().count() <= cap {
        return s.to_string();
    }
    let keep = cap.saturating_sub(TRUNCATION_MARK.len());
    let mut out: String = s.chars().take(keep).collect();
    out.push_str(TRUNCATION_MARK);
    out
}
