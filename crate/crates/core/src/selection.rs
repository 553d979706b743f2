//! Survivor selection: scalar-fitness ranking combined with Pareto fronts over
//! normalized (maximization) objective vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which survivor selection arm to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    #[default]
    Hybrid,
    FitnessOnly,
    ParetoOnly,
}

impl std::str::FromStr for SelectorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hybrid" => Ok(Self::Hybrid),
            "fitness_only" => Ok(Self::FitnessOnly),
            "pareto_only" => Ok(Self::ParetoOnly),
            other => Err(format!(
                "unknown selector `{other}` (expected hybrid, fitness_only or pareto_only)"
            )),
        }
    }
}

impl std::fmt::Display for SelectorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hybrid => "hybrid",
            Self::FitnessOnly => "fitness_only",
            Self::ParetoOnly => "pareto_only",
        })
    }
}

/// Anything that can take part in selection.
pub trait Selectable {
    /// Monotone insertion key used to break fitness ties.
    fn order_key(&self) -> u64;
    fn fitness(&self) -> f64;
    fn objectives(&self) -> &[f64];
}

/// `a` dominates `b` under maximization.
///
/// Panics if the vectors differ in length.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    assert_eq!(
        a.len(),
        b.len(),
        "dominance check on vectors of different dimension"
    );
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly_better = true;
        }
    }
    strictly_better
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceRecord {
    pub index: usize,
    pub front_index: usize,
    pub dominated_by_count: usize,
}

/// Partition `points` into non-dominated fronts of indices.
///
/// Front 0 is the non-dominated set; each later front is non-dominated once the
/// earlier ones are removed. Indices inside a front keep insertion order.
pub fn nondominated_fronts(points: &[&[f64]]) -> Vec<Vec<usize>> {
    fronts_with_records(points).0
}

/// Same as [`nondominated_fronts`], also returning each point's record.
pub fn fronts_with_records(points: &[&[f64]]) -> (Vec<Vec<usize>>, Vec<DominanceRecord>) {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(points[i], points[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(points[j], points[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut records: Vec<DominanceRecord> = (0..n)
        .map(|index| DominanceRecord {
            index,
            front_index: 0,
            dominated_by_count: dominated_by[index],
        })
        .collect();

    let mut remaining = dominated_by;
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| remaining[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            records[i].front_index = fronts.len();
            for &j in &dominates_list[i] {
                remaining[j] -= 1;
                if remaining[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    (fronts, records)
}

/// Outcome of one selection round, as indices into the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub by_fitness: usize,
    pub by_pareto: usize,
}

/// Pool indices ordered by descending fitness, ties by insertion order.
pub fn fitness_ranking<T: Selectable>(pool: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[b]
            .fitness()
            .total_cmp(&pool[a].fitness())
            .then(pool[a].order_key().cmp(&pool[b].order_key()))
    });
    order
}

/// Select up to `n` survivors from `pool`.
///
/// Hybrid mode takes `ceil(n/2)` by fitness and fills the rest from successive
/// fronts, uniformly subsampling the front that overflows.
pub fn hybrid_select<T: Selectable, R: Rng + ?Sized>(
    pool: &[T],
    n: usize,
    mode: SelectorMode,
    rng: &mut R,
) -> Selection {
    if pool.len() <= n {
        return Selection {
            indices: (0..pool.len()).collect(),
            by_fitness: 0,
            by_pareto: 0,
        };
    }
    let (fitness_slots, pareto_slots) = match mode {
        SelectorMode::Hybrid => (n.div_ceil(2), n / 2),
        SelectorMode::FitnessOnly => (n, 0),
        SelectorMode::ParetoOnly => (0, n),
    };

    let mut picked = vec![false; pool.len()];
    let mut indices: Vec<usize> = fitness_ranking(pool)
        .into_iter()
        .take(fitness_slots)
        .collect();
    for &i in &indices {
        picked[i] = true;
    }
    let by_fitness = indices.len();

    if pareto_slots > 0 {
        let points: Vec<&[f64]> = pool.iter().map(|c| c.objectives()).collect();
        let mut need = pareto_slots;
        for front in nondominated_fronts(&points) {
            let available: Vec<usize> = front.into_iter().filter(|&i| !picked[i]).collect();
            if available.len() <= need {
                need -= available.len();
                indices.extend(available);
            } else {
                let mut chosen: Vec<usize> = rand::seq::index::sample(rng, available.len(), need)
                    .into_iter()
                    .map(|k| available[k])
                    .collect();
                chosen.sort_unstable();
                indices.extend(chosen);
                need = 0;
            }
            if need == 0 {
                break;
            }
        }
    }
    let by_pareto = indices.len() - by_fitness;
    Selection {
        indices,
        by_fitness,
        by_pareto,
    }
}
