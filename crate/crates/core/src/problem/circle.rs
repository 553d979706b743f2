//! Circle packing in the unit square: maximize the sum of radii subject to
//! non-overlap and containment, with a deterministic local repair applied to
//! every proposal before scoring.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::{Rng, RngCore};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DecodeError, Payload, Problem};
use crate::backend::{ObjectiveDescription, TaskTemplate};
use crate::objective::{
    fmt_num, Comparator, ConstraintSpec, ObjectiveSpec, RawEvaluation, FEASIBILITY_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirclePacking {
    pub centers: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
}

impl CirclePacking {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn radius_sum(&self) -> f64 {
        self.radii.iter().sum()
    }

    /// Largest `r_i + r_j - d_ij` over all pairs, 0 for a single circle.
    pub fn max_overlap(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d = dist(self.centers[i], self.centers[j]);
                worst = worst.max(self.radii[i] + self.radii[j] - d);
            }
        }
        if worst.is_finite() {
            worst
        } else {
            0.0
        }
    }

    /// Largest distance any circle pokes outside the square.
    pub fn max_boundary_violation(&self) -> f64 {
        self.centers
            .iter()
            .zip(&self.radii)
            .map(|(&[x, y], &r)| (r - x).max(x + r - 1.0).max(r - y).max(y + r - 1.0))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(if self.is_empty() {
                0.0
            } else {
                f64::NEG_INFINITY
            })
    }

    pub fn is_feasible(&self, tolerance: f64) -> bool {
        self.radii.iter().all(|r| r.is_finite() && *r >= 0.0)
            && self.max_overlap() <= tolerance
            && self.max_boundary_violation() <= tolerance
    }

    /// Circles sorted lexicographically by (x, y, r).
    fn sorted_circles(&self) -> Vec<(f64, f64, f64)> {
        let mut v: Vec<_> = self
            .centers
            .iter()
            .zip(&self.radii)
            .map(|(&[x, y], &r)| (x, y, r))
            .collect();
        v.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        });
        v
    }

    pub fn canonical_key(&self) -> String {
        let mut key = String::new();
        for (x, y, r) in self.sorted_circles() {
            let _ = write!(key, "{x:.6},{y:.6},{r:.6};");
        }
        key
    }

    pub fn render(&self) -> String {
        let mut out = String::from("centers = np.array([\n");
        for c in &self.centers {
            let _ = writeln!(out, "    [{:.6}, {:.6}],", c[0], c[1]);
        }
        out.push_str("])\nradii = np.array([\n    ");
        let radii: Vec<String> = self.radii.iter().map(|r| format!("{r:.6}")).collect();
        out.push_str(&radii.join(", "));
        out.push_str("\n])");
        out
    }

    /// Tolerant parser for the `centers = ... radii = ...` format.
    pub fn parse(text: &str) -> Result<Self, DecodeError> {
        static NUMBER: OnceLock<Regex> = OnceLock::new();
        let number = NUMBER.get_or_init(|| {
            Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?").expect("valid regex")
        });
        let lower = text.to_ascii_lowercase();
        let c_at = lower
            .find("centers")
            .ok_or_else(|| DecodeError::new("missing `centers`"))?;
        let r_at = lower
            .find("radii")
            .ok_or_else(|| DecodeError::new("missing `radii`"))?;
        let (centers_src, radii_src) = if c_at < r_at {
            (&text[c_at + 7..r_at], &text[r_at + 5..])
        } else {
            (&text[c_at + 7..], &text[r_at + 5..c_at])
        };
        let nums = |s: &str| -> Result<Vec<f64>, DecodeError> {
            number
                .find_iter(s)
                .map(|m| {
                    m.as_str()
                        .parse::<f64>()
                        .map_err(|e| DecodeError::new(format!("bad number `{}`: {e}", m.as_str())))
                })
                .collect()
        };
        let flat = nums(centers_src)?;
        let radii = nums(radii_src)?;
        if flat.len() % 2 != 0 {
            return Err(DecodeError::new("centers must be (x, y) pairs"));
        }
        if flat.len() / 2 != radii.len() {
            return Err(DecodeError::new(format!(
                "{} centers but {} radii",
                flat.len() / 2,
                radii.len()
            )));
        }
        if flat.iter().chain(&radii).any(|v| !v.is_finite()) {
            return Err(DecodeError::new("non-finite coordinate"));
        }
        Ok(Self {
            centers: flat.chunks(2).map(|c| [c[0], c[1]]).collect(),
            radii,
        })
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Score a packing as-is: objective is the radius sum, constraints report the
/// worst overlap and the worst boundary violation (both `<= 0` when feasible).
pub fn circle_evaluate(packing: &CirclePacking, n: usize) -> RawEvaluation {
    if packing.len() != n || packing.centers.len() != n {
        return RawEvaluation::invalid(format!("expected {n} circles, got {}", packing.len()));
    }
    if packing.radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return RawEvaluation::invalid("radii must be finite and non-negative");
    }
    RawEvaluation {
        objectives: vec![packing.radius_sum()],
        constraints: vec![packing.max_overlap(), packing.max_boundary_violation()],
        feedback: None,
        valid: true,
        refined_text: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairSchedule {
    pub iterations: usize,
    /// Per-iteration radius inflation at the start; decays linearly to zero.
    pub initial_growth: f64,
    pub separation_sweeps: usize,
    /// Passes of the growth schedule; later passes restart from the best
    /// layout with equalized radii.
    pub cycles: usize,
    /// Radius multiplier applied when a later cycle restarts.
    pub restart_shrink: f64,
    pub tolerance: f64,
}

impl Default for RepairSchedule {
    fn default() -> Self {
        Self {
            iterations: 2000,
            initial_growth: 0.05,
            separation_sweeps: 3,
            cycles: 3,
            restart_shrink: 0.5,
            tolerance: FEASIBILITY_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub packing: CirclePacking,
    /// Feasible to tolerance with strictly positive radii.
    pub converged: bool,
}

/// Local repair: inflate radii, push centers inside the square and apart
/// along their center lines, then take the largest uniform scale that is
/// feasible and grow each circle into its remaining slack.
///
/// Returns the best feasible state seen, which is never worse than the
/// feasible projection of the input.
pub fn circle_repair(input: &CirclePacking, schedule: &RepairSchedule) -> RepairOutcome {
    let mut work = sanitize(input);
    if work.is_empty() {
        return RepairOutcome {
            packing: work,
            converged: true,
        };
    }
    project(&mut work);
    scale_to_feasible(&mut work);
    let mut best = work.clone();
    let iterations = schedule.iterations.max(1);
    for cycle in 0..schedule.cycles.max(1) {
        if cycle > 0 {
            // restart from the best layout with equal, shrunken radii
            work = best.clone();
            let mean = work.radius_sum() / work.len() as f64;
            work.radii
                .iter_mut()
                .for_each(|r| *r = mean * schedule.restart_shrink);
        }
        for t in 0..schedule.iterations {
            let growth = schedule.initial_growth * (1.0 - t as f64 / iterations as f64);
            for r in &mut work.radii {
                *r = (r.max(MIN_RADIUS) * (1.0 + growth)).min(0.5);
            }
            for _ in 0..schedule.separation_sweeps.max(1) {
                project(&mut work);
                separate(&mut work);
            }
            project(&mut work);
            scale_to_feasible(&mut work);
            // later cycles keep radii equal until the final stretch
            if cycle == 0 || t * 10 >= iterations * 9 {
                grow_each(&mut work);
            }
            if work.radius_sum() > best.radius_sum() {
                best = work.clone();
            }
        }
    }
    let converged = best.is_feasible(schedule.tolerance) && best.radii.iter().all(|&r| r > 0.0);
    RepairOutcome {
        packing: best,
        converged,
    }
}

const MIN_RADIUS: f64 = 1e-6;
// shrink applied to exact contact factors so rounding never overshoots
const CONTACT_SLACK: f64 = 1.0 - 1e-12;

fn sanitize(input: &CirclePacking) -> CirclePacking {
    let n = input.radii.len().min(input.centers.len());
    let centers = input.centers[..n]
        .iter()
        .map(|&[x, y]| {
            let fix = |v: f64| {
                if v.is_finite() {
                    v.clamp(0.0, 1.0)
                } else {
                    0.5
                }
            };
            [fix(x), fix(y)]
        })
        .collect();
    let radii = input.radii[..n]
        .iter()
        .map(|&r| {
            if r.is_finite() {
                r.abs().clamp(MIN_RADIUS, 0.5)
            } else {
                MIN_RADIUS
            }
        })
        .collect();
    CirclePacking { centers, radii }
}

fn project(p: &mut CirclePacking) {
    for (c, r) in p.centers.iter_mut().zip(p.radii.iter_mut()) {
        *r = r.min(0.5);
        c[0] = c[0].clamp(*r, 1.0 - *r);
        c[1] = c[1].clamp(*r, 1.0 - *r);
    }
}

fn separate(p: &mut CirclePacking) {
    let n = p.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (ci, cj) = (p.centers[i], p.centers[j]);
            let d = dist(ci, cj);
            let overlap = p.radii[i] + p.radii[j] - d;
            if overlap <= 0.0 {
                continue;
            }
            let (ux, uy) = if d > 1e-12 {
                ((cj[0] - ci[0]) / d, (cj[1] - ci[1]) / d)
            } else {
                // coincident centers: fixed pseudo-random direction per pair
                let angle = 2.399_963_229_728_653 * (i * n + j) as f64;
                (angle.cos(), angle.sin())
            };
            let push = overlap / 2.0;
            p.centers[i][0] -= ux * push;
            p.centers[i][1] -= uy * push;
            p.centers[j][0] += ux * push;
            p.centers[j][1] += uy * push;
        }
    }
}

/// Multiply every radius by the largest factor keeping the packing feasible.
fn scale_to_feasible(p: &mut CirclePacking) {
    let mut factor = f64::INFINITY;
    for (&[x, y], &r) in p.centers.iter().zip(&p.radii) {
        if r > 0.0 {
            factor = factor.min(x.min(1.0 - x).min(y).min(1.0 - y) / r);
        }
    }
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            let s = p.radii[i] + p.radii[j];
            if s > 0.0 {
                factor = factor.min(dist(p.centers[i], p.centers[j]) / s);
            }
        }
    }
    if !factor.is_finite() {
        return;
    }
    let factor = (factor * CONTACT_SLACK).max(0.0);
    for r in &mut p.radii {
        *r *= factor;
    }
}

/// Grow each circle, in index order, until it touches a wall or a neighbour.
fn grow_each(p: &mut CirclePacking) {
    for i in 0..p.len() {
        let [x, y] = p.centers[i];
        let mut limit = x.min(1.0 - x).min(y).min(1.0 - y);
        for j in 0..p.len() {
            if j != i {
                limit = limit.min(dist(p.centers[i], p.centers[j]) - p.radii[j]);
            }
        }
        let grown = (limit * CONTACT_SLACK).max(0.0);
        if grown > p.radii[i] {
            p.radii[i] = grown;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CirclePackingConfig {
    pub circles: usize,
    pub repair: bool,
    pub schedule: RepairSchedule,
    pub promote_constraints: bool,
}

impl Default for CirclePackingConfig {
    fn default() -> Self {
        Self {
            circles: 4,
            repair: true,
            schedule: RepairSchedule::default(),
            promote_constraints: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CirclePackingProblem {
    config: CirclePackingConfig,
    objectives: Vec<ObjectiveSpec>,
    constraints: Vec<ConstraintSpec>,
    template: TaskTemplate,
}

impl CirclePackingProblem {
    pub fn new(config: CirclePackingConfig) -> Self {
        let n = config.circles.max(1);
        // sum of radii is at most sqrt(n / pi) by area and Cauchy-Schwarz
        let upper = (n as f64 / PI).sqrt();
        let objectives = vec![ObjectiveSpec::maximize("radii").with_bounds(0.0, upper)];
        let mut constraints = vec![
            ConstraintSpec::new("overlap", Comparator::Le, 0.0).soft(),
            ConstraintSpec::new("boundary", Comparator::Le, 0.0).soft(),
        ];
        if config.promote_constraints {
            constraints = constraints.into_iter().map(|c| c.promoted(0.5)).collect();
        }
        let template = TaskTemplate {
            task_description: format!(
                "This task proposes improved solutions for the circle_packing problem, where {n} \
                 circles must be placed within a unit square."
            ),
            output_format: "Each generated candidate must begin with <candidate> and end with \
                            </candidate>.\nAn example output is:\n<candidate>\ncenters = np.array([\n    \
                            [0.50, 0.50], [0.30, 0.50], ...\n])\nradii = np.array([\n    0.12, 0.10, \
                            ...\n])\n</candidate>"
                .into(),
            mutation_instruction: "Example operations include:\n- modifying circle coordinates or radii."
                .into(),
            crossover_instruction: "Example operations include:\n- swapping coordinate or radius \
                                    values between two parent candidates."
                .into(),
            additional_requirements: "Keep all circle centers inside the unit square.\nLarge changes \
                                      to coordinates, ordering, or radii are allowed and encouraged.\n\
                                      You do not need to ensure validity; overlaps and boundary \
                                      violations will be corrected automatically."
                .into(),
            objective_descriptions: vec![ObjectiveDescription {
                name: "radii".into(),
                description: "The objective radii corresponds to the sum of all circle radii.".into(),
            }],
        };
        Self {
            config,
            objectives,
            constraints,
            template,
        }
    }

    pub fn circles(&self) -> usize {
        self.config.circles
    }

    fn packing(payload: &Payload) -> Option<&CirclePacking> {
        match payload {
            Payload::Circles(p) => Some(p),
            _ => None,
        }
    }
}

impl Problem for CirclePackingProblem {
    fn name(&self) -> &str {
        "circle_packing"
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
        let p = CirclePacking::parse(text)?;
        if p.len() != self.config.circles {
            return Err(DecodeError::new(format!(
                "expected {} circles, got {}",
                self.config.circles,
                p.len()
            )));
        }
        Ok(Payload::Circles(p))
    }

    fn canonical_key(&self, payload: &Payload) -> String {
        Self::packing(payload)
            .map(CirclePacking::canonical_key)
            .unwrap_or_default()
    }

    fn evaluate(&self, payload: &Payload) -> RawEvaluation {
        let Some(p) = Self::packing(payload) else {
            return RawEvaluation::invalid("payload is not a circle packing");
        };
        if !self.config.repair {
            return circle_evaluate(p, self.config.circles);
        }
        let outcome = circle_repair(p, &self.config.schedule);
        let mut eval = circle_evaluate(&outcome.packing, self.config.circles);
        if eval.valid {
            let note = if outcome.converged {
                "repaired to a feasible packing"
            } else {
                "repair did not converge"
            };
            eval.feedback = Some(format!(
                "{note}; sum of radii before repair {}",
                fmt_num(p.radius_sum())
            ));
            eval.refined_text = Some(outcome.packing.render());
        }
        eval
    }

    fn distance(&self, a: &Payload, b: &Payload) -> f64 {
        match (Self::packing(a), Self::packing(b)) {
            (Some(a), Some(b)) if a.len() == b.len() && !a.is_empty() => {
                let (sa, sb) = (a.sorted_circles(), b.sorted_circles());
                let total: f64 = sa
                    .iter()
                    .zip(&sb)
                    .map(|(p, q)| dist([p.0, p.1], [q.0, q.1]))
                    .sum();
                (total / a.len() as f64 * FRAC_1_SQRT_2).min(1.0)
            }
            (Some(a), Some(b)) if a.is_empty() && b.is_empty() => 0.0,
            _ => 1.0,
        }
    }

    fn render(&self, payload: &Payload) -> String {
        Self::packing(payload)
            .map(CirclePacking::render)
            .unwrap_or_default()
    }

    fn random_candidate(&self, rng: &mut dyn RngCore) -> String {
        let n = self.config.circles;
        CirclePacking {
            centers: (0..n)
                .map(|_| [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)])
                .collect(),
            radii: (0..n).map(|_| rng.random_range(0.01..0.1)).collect(),
        }
        .render()
    }

    fn vary(&self, parents: &[&Payload], rng: &mut dyn RngCore) -> String {
        let packs: Vec<&CirclePacking> = parents.iter().filter_map(|p| Self::packing(p)).collect();
        let Some(first) = packs.first() else {
            return self.random_candidate(rng);
        };
        let mut child = if packs.len() >= 2 && packs[1].len() == first.len() {
            let (a, b) = (first.sorted_circles(), packs[1].sorted_circles());
            let picked: Vec<_> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| if rng.random_bool(0.5) { *x } else { *y })
                .collect();
            CirclePacking {
                centers: picked.iter().map(|c| [c.0, c.1]).collect(),
                radii: picked.iter().map(|c| c.2).collect(),
            }
        } else {
            (*first).clone()
        };
        if child.is_empty() {
            return child.render();
        }
        match rng.random_range(0..3) {
            0 => {
                let sigma = rng.random_range(0.01..0.1);
                for c in &mut child.centers {
                    c[0] = (c[0] + rng.random_range(-sigma..sigma)).clamp(0.0, 1.0);
                    c[1] = (c[1] + rng.random_range(-sigma..sigma)).clamp(0.0, 1.0);
                }
            }
            1 => {
                let i = rng.random_range(0..child.len());
                child.centers[i] = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
                child.radii[i] = rng.random_range(0.01..0.1);
            }
            _ => {
                let i = rng.random_range(0..child.len());
                let sigma = rng.random_range(0.05..0.25);
                let c = &mut child.centers[i];
                c[0] = (c[0] + rng.random_range(-sigma..sigma)).clamp(0.0, 1.0);
                c[1] = (c[1] + rng.random_range(-sigma..sigma)).clamp(0.0, 1.0);
            }
        }
        for r in &mut child.radii {
            *r = (*r * rng.random_range(0.8..1.2)).max(MIN_RADIUS);
        }
        child.render()
    }
}
