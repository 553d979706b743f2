//! Run metrics: top-k fitness, AUC against oracle calls, hypervolume,
//! and proposal-level uniqueness/validity/diversity.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Reference coordinate per dimension, in minimization form.
pub const HV_REFERENCE: f64 = 1.1;
/// Largest dimension handled by the exact slicing algorithm.
pub const HV_EXACT_MAX_DIMENSIONS: usize = 4;
/// Samples drawn by the Monte-Carlo estimator above [`HV_EXACT_MAX_DIMENSIONS`].
pub const HV_MONTE_CARLO_SAMPLES: usize = 200_000;
/// How many of the fittest candidates enter the diversity average.
pub const DIVERSITY_TOP: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub generation: u32,
    pub consumed: u64,
    pub top1_f: Option<f64>,
    pub top10_f: Option<f64>,
    pub auc_top10: f64,
    pub hypervolume: f64,
    pub uniqueness: Option<f64>,
    pub validity: Option<f64>,
    pub diversity: Option<f64>,
}

impl MetricSnapshot {
    pub const CSV_HEADER: &'static str =
        "generation,consumed,top1_f,top10_f,auc_top10,hypervolume,uniqueness,validity,diversity";

    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.generation,
            self.consumed,
            opt(self.top1_f),
            opt(self.top10_f),
            self.auc_top10,
            self.hypervolume,
            opt(self.uniqueness),
            opt(self.validity),
            opt(self.diversity),
        )
    }
}

/// Mean fitness of the `k` best distinct entries, `None` when empty.
pub fn top_k_mean<'a>(entries: impl IntoIterator<Item = (&'a str, f64)>, k: usize) -> Option<f64> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (key, f) in entries {
        best.entry(key).and_modify(|v| *v = v.max(f)).or_insert(f);
    }
    let mut values: Vec<f64> = best.into_values().collect();
    if values.is_empty() || k == 0 {
        return None;
    }
    values.sort_by(|a, b| b.total_cmp(a));
    let take = k.min(values.len());
    Some(values[..take].iter().sum::<f64>() / take as f64)
}

/// Budget-normalized area under the running top-`k` mean.
///
/// Position `i` holds the mean of the best `min(k, i)` values among the first
/// `i` calls; a short trace carries its final value out to `budget`.
pub fn auc_top_k(trace: &[f64], k: usize, budget: usize) -> f64 {
    if trace.is_empty() || k == 0 || budget == 0 {
        return 0.0;
    }
    let mut top: Vec<f64> = Vec::with_capacity(k + 1);
    let mut total = 0.0;
    let mut running = 0.0;
    let counted = trace.len().min(budget);
    for &v in &trace[..counted] {
        let pos = top.partition_point(|&x| x >= v);
        if pos < k {
            top.insert(pos, v);
            top.truncate(k);
        }
        running = top.iter().sum::<f64>() / top.len() as f64;
        total += running;
    }
    total += running * (budget - counted) as f64;
    total / budget as f64
}

/// Hypervolume of normalized maximization vectors against `1.1` per
/// dimension, after mapping each component to `1 - value`.
///
/// Exact up to four objectives; above that a seeded Monte-Carlo estimate
/// with [`HV_MONTE_CARLO_SAMPLES`] samples.
pub fn hypervolume<R: Rng + ?Sized>(points: &[&[f64]], rng: &mut R) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let m = first.len();
    let minimized: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().map(|v| 1.0 - v).collect())
        .collect();
    let reference = vec![HV_REFERENCE; m];
    if m <= HV_EXACT_MAX_DIMENSIONS {
        hypervolume_exact(&minimized, &reference)
    } else {
        hypervolume_monte_carlo(&minimized, &reference, HV_MONTE_CARLO_SAMPLES, rng)
    }
}

/// Exact measure of the union of boxes `[p, reference]` (minimization form).
pub fn hypervolume_exact(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let inside: Vec<&[f64]> = points
        .iter()
        .map(|p| p.as_slice())
        .filter(|p| {
            assert_eq!(
                p.len(),
                reference.len(),
                "point and reference differ in dimension"
            );
            p.iter().zip(reference).all(|(x, r)| x < r)
        })
        .collect();
    slice_volume(inside, reference)
}

fn slice_volume(mut points: Vec<&[f64]>, reference: &[f64]) -> f64 {
    let d = reference.len();
    if points.is_empty() {
        return 0.0;
    }
    match d {
        0 => 0.0,
        1 => reference[0] - points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
        2 => {
            points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
            let mut area = 0.0;
            let mut floor = reference[1];
            for p in points {
                if p[1] < floor {
                    area += (reference[0] - p[0]) * (floor - p[1]);
                    floor = p[1];
                }
            }
            area
        }
        _ => {
            points.sort_by(|a, b| a[d - 1].total_cmp(&b[d - 1]));
            let sub_ref = &reference[..d - 1];
            let mut volume = 0.0;
            for i in 0..points.len() {
                let lo = points[i][d - 1];
                let hi = points.get(i + 1).map_or(reference[d - 1], |p| p[d - 1]);
                if hi <= lo {
                    continue;
                }
                let section: Vec<&[f64]> = points[..=i].iter().map(|p| &p[..d - 1]).collect();
                volume += (hi - lo) * slice_volume(prune_dominated(section), sub_ref);
            }
            volume
        }
    }
}

fn prune_dominated(points: Vec<&[f64]>) -> Vec<&[f64]> {
    let weakly_dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y);
    let mut keep: Vec<&[f64]> = Vec::with_capacity(points.len());
    for p in points {
        if keep.iter().any(|k| weakly_dominates(k, p)) {
            continue;
        }
        keep.retain(|k| !weakly_dominates(p, k));
        keep.push(p);
    }
    keep
}

/// Monte-Carlo estimate of the same quantity as [`hypervolume_exact`],
/// sampling the bounding box between the componentwise minimum and the
/// reference.
pub fn hypervolume_monte_carlo<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    reference: &[f64],
    samples: usize,
    rng: &mut R,
) -> f64 {
    let inside: Vec<&[f64]> = points
        .iter()
        .map(|p| p.as_slice())
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x < r))
        .collect();
    if inside.is_empty() || samples == 0 {
        return 0.0;
    }
    let d = reference.len();
    let lower: Vec<f64> = (0..d)
        .map(|j| inside.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let box_volume: f64 = lower.iter().zip(reference).map(|(l, r)| r - l).product();
    let mut sample = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..samples {
        for j in 0..d {
            sample[j] = lower[j] + rng.random::<f64>() * (reference[j] - lower[j]);
        }
        if inside
            .iter()
            .any(|p| p.iter().zip(&sample).all(|(x, s)| x <= s))
        {
            hits += 1;
        }
    }
    box_volume * hits as f64 / samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub uniqueness: f64,
    pub validity: f64,
    pub diversity: f64,
}

/// Proposal rates and top-`DIVERSITY_TOP` diversity.
///
/// `proposal_keys` holds one entry per backend-emitted candidate: its canonical
/// key, or `None` when it could not be decoded. `ranked` must already be sorted
/// by descending fitness.
pub fn population_stats<'a, T>(
    proposal_keys: impl IntoIterator<Item = Option<&'a str>>,
    ranked: &[T],
    distance: impl Fn(&T, &T) -> f64,
) -> Option<PopulationStats> {
    let mut total = 0usize;
    let mut decodable = 0usize;
    let mut distinct = BTreeSet::new();
    for key in proposal_keys {
        total += 1;
        if let Some(k) = key {
            decodable += 1;
            distinct.insert(k);
        }
    }
    if total == 0 {
        return None;
    }
    let top = &ranked[..ranked.len().min(DIVERSITY_TOP)];
    Some(PopulationStats {
        uniqueness: distinct.len() as f64 / total as f64,
        validity: decodable as f64 / total as f64,
        diversity: mean_pairwise_distance(top, distance),
    })
}

pub fn mean_pairwise_distance<T>(items: &[T], distance: impl Fn(&T, &T) -> f64) -> f64 {
    let n = items.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += distance(&items[i], &items[j]);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}
