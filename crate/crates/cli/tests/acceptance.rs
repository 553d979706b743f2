//! One PASS/FAIL line per acceptance criterion, written to stderr. The test
//! fails on any FAIL that is not a recorded known gap.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use llmopt_cli::run_dir::{EVENTS_FILE, METRICS_FILE};
use llmopt_cli::{execute_run, parse_config, run_sweep, SweepAxis, SweepSpec};
use llmopt_core::backend::parse_candidates;
use llmopt_core::engine::{initialize_run, Admission, BudgetLedger, Event, NullSink};
use llmopt_core::experience::{maybe_inject, Experience};
use llmopt_core::metrics::{auc_top_k, hypervolume, HV_REFERENCE};
use llmopt_core::objective::{FeedbackAdapter, ObjectiveSpec, ObservedRanges, RawEvaluation};
use llmopt_core::problem::{circle_repair, CirclePacking, RepairSchedule};
use llmopt_core::rng::{stream_rng, Stream};
use llmopt_core::selection::{fitness_ranking, nondominated_fronts, Selectable};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Criteria whose stated target conflicts with its own definition. They are
/// reported as FAIL and do not fail the test; see the detail line.
const KNOWN_GAPS: &[&str] = &["hypervolume"];

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// ---------------------------------------------------------------- hypervolume

/// Independent Monte-Carlo oracle over the bounding box of the
/// minimization-form points.
fn mc_hypervolume(points: &[Vec<f64>], samples: usize, rng: &mut ChaCha20Rng) -> f64 {
    let d: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().map(|v| 1.0 - v).collect())
        .collect();
    let m = points[0].len();
    let lo: Vec<f64> = (0..m)
        .map(|j| d.iter().map(|p| p[j]).fold(HV_REFERENCE, f64::min))
        .collect();
    let volume: f64 = lo.iter().map(|l| HV_REFERENCE - l).product();
    let mut x = vec![0.0; m];
    let mut hits = 0u64;
    for _ in 0..samples {
        for j in 0..m {
            x[j] = rng.random_range(lo[j]..HV_REFERENCE);
        }
        if d.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    volume * hits as f64 / samples as f64
}

fn hv(points: &[Vec<f64>]) -> f64 {
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    hypervolume(&refs, &mut stream_rng(0, Stream::Hypervolume))
}

fn check_hypervolume() -> (Verdict, bool) {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for set in 0..50 {
        let m = 2 + set % 2;
        let n = rng.random_range(1..=10);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random::<f64>()).collect())
            .collect();
        let exact = hv(&points);
        let oracle = mc_hypervolume(&points, 1_000_000, &mut rng);
        worst = worst.max((exact - oracle).abs() / oracle);
    }
    let mc_ok = worst < 0.01;

    let e1 = hv(&[vec![1.0, 1.0]]);
    let e2 = hv(&[vec![0.5, 0.5]]);
    let e3 = hv(&[vec![0.9, 0.2], vec![0.2, 0.9]]);
    let e3_oracle = mc_hypervolume(&[vec![0.9, 0.2], vec![0.2, 0.9]], 1_000_000, &mut rng);
    let ex12 = (e1 - 1.21).abs() < 1e-12 && (e2 - 0.36).abs() < 1e-12;
    let e3_matches_stated = (e3 - 0.36).abs() < 1e-12;
    let e3_consistent = (e3 - 0.51).abs() < 1e-12 && (e3 - e3_oracle).abs() < 0.005;
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(30);

    let detail = format!(
        "50 sets, max rel err vs 1e6-sample oracle {:.4}%; examples 1.21 -> {e1:.4}, 0.36 -> {e2:.4}, \
         third example -> {e3:.4} (oracle {e3_oracle:.4}); stated 0.36 is inconsistent with d = 1 - f \
         and reference 1.1, which give 0.3 + 0.3 - 0.09 = 0.51; {}",
        100.0 * worst,
        secs(elapsed)
    );
    let attainable = mc_ok && ex12 && e3_consistent && fast;
    (
        Verdict::new(attainable && e3_matches_stated, detail),
        attainable,
    )
}

// --------------------------------------------------------------------- fronts

fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let dominates = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
    };
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn check_fronts() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=64);
        let m = rng.random_range(1..=4);
        // coarse grid so ties and duplicates occur
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| rng.random_range(0..6) as f64 / 5.0)
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let mut got = nondominated_fronts(&refs);
        for f in &mut got {
            f.sort_unstable();
        }
        if got != brute_force_fronts(&points) {
            mismatches += 1;
        }
    }
    Verdict::new(
        mismatches == 0,
        format!("100 pools, {mismatches} mismatches against brute-force peeling"),
    )
}

// ------------------------------------------------------------ argmax invariance

struct Scored {
    order: u64,
    f: f64,
}

impl Selectable for Scored {
    fn order_key(&self) -> u64 {
        self.order
    }
    fn fitness(&self) -> f64 {
        self.f
    }
    fn objectives(&self) -> &[f64] {
        &[]
    }
}

fn fitness_of(specs: &[ObjectiveSpec], pool: &[Vec<f64>]) -> Vec<f64> {
    let adapter = FeedbackAdapter::new(specs, &[]).unwrap();
    let ranges = ObservedRanges::new(specs.len());
    pool.iter()
        .map(|raw| {
            let r = RawEvaluation {
                objectives: raw.clone(),
                valid: true,
                ..Default::default()
            };
            adapter.assess(&r, &ranges).fitness.unwrap()
        })
        .collect()
}

fn check_argmax_invariance() -> Verdict {
    let case = (1usize..=4).prop_flat_map(|m| {
        (
            prop::collection::vec(
                (
                    any::<bool>(),
                    -100.0f64..100.0,
                    0.1f64..50.0,
                    0.01f64..100.0,
                    -1e3f64..1e3,
                ),
                m,
            ),
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, m), 2..30),
        )
    });
    let config = Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let result = runner.run(&case, |(objs, unit_pool)| {
        let specs: Vec<ObjectiveSpec> = objs
            .iter()
            .enumerate()
            .map(|(j, &(max, lo, width, _, _))| {
                let s = if max {
                    ObjectiveSpec::maximize(format!("o{j}"))
                } else {
                    ObjectiveSpec::minimize(format!("o{j}"))
                };
                s.with_bounds(lo, lo + width)
            })
            .collect();
        let raw: Vec<Vec<f64>> = unit_pool
            .iter()
            .map(|u| {
                u.iter()
                    .zip(&objs)
                    .map(|(t, &(_, lo, width, _, _))| lo + t * width)
                    .collect()
            })
            .collect();
        let scaled_specs: Vec<ObjectiveSpec> = specs
            .iter()
            .zip(&objs)
            .map(|(s, &(_, _, _, a, b))| {
                let (lo, hi) = s.bounds.unwrap();
                let mut t = s.clone();
                t.bounds = Some((a * lo + b, a * hi + b));
                t
            })
            .collect();
        let scaled: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&objs)
                    .map(|(x, &(_, _, _, a, b))| a * x + b)
                    .collect()
            })
            .collect();
        let f0 = fitness_of(&specs, &raw);
        let f1 = fitness_of(&scaled_specs, &scaled);
        let rank = |f: &[f64]| {
            let pool: Vec<Scored> = f
                .iter()
                .enumerate()
                .map(|(i, &f)| Scored { order: i as u64, f })
                .collect();
            fitness_ranking(&pool)
        };
        let (r0, r1) = (rank(&f0), rank(&f1));
        // identical up to reordering of floating-point ties
        for w in r1.windows(2) {
            prop_assert!(f0[w[0]] >= f0[w[1]] - 1e-9);
        }
        prop_assert!((f0[r1[0]] - f0[r0[0]]).abs() <= 1e-9);
        Ok(())
    });
    Verdict::new(
        result.is_ok(),
        match result {
            Ok(()) => "200 random pools, ranking and argmax unchanged".to_string(),
            Err(e) => format!("counterexample: {e}"),
        },
    )
}

// ------------------------------------------------------------------------ AUC

/// Running mean of the top-min(k, i) values, carried to `b`, averaged.
fn auc_oracle(trace: &[f64], k: usize, b: usize) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let mut seen: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for &x in trace {
        seen.push(x);
        seen.sort_by(|a, b| b.total_cmp(a));
        let top = &seen[..k.min(seen.len())];
        values.push(top.iter().sum::<f64>() / top.len() as f64);
    }
    let last = *values.last().unwrap();
    values.resize(b, last);
    values.iter().sum::<f64>() / b as f64
}

fn check_auc() -> Verdict {
    let mut ok = true;
    for &c in &[0.0, 0.37, 1.0] {
        for &(k, b) in &[(1, 5), (3, 10), (10, 10)] {
            let trace = vec![c; b / 2 + 1];
            ok &= (auc_top_k(&trace, k, b) - c).abs() < 1e-12;
        }
    }
    let a = auc_top_k(&[0.2, 0.6, 0.4, 0.8], 1, 4);
    let b = auc_top_k(&[0.2, 0.6], 1, 4);
    ok &= (a - auc_oracle(&[0.2, 0.6, 0.4, 0.8], 1, 4)).abs() < 1e-12 && (a - 0.55).abs() < 1e-12;
    ok &= (b - auc_oracle(&[0.2, 0.6], 1, 4)).abs() < 1e-12 && (b - 0.5).abs() < 1e-12;
    Verdict::new(
        ok,
        format!("constant traces reproduce their value; hand traces -> {a:.12}, {b:.12}"),
    )
}

// --------------------------------------------------------------------- ledger

fn check_ledger() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let mut ok = true;
    for _ in 0..500 {
        let budget = rng.random_range(0..40u64);
        let mut ledger = BudgetLedger::new(budget);
        let mut seen: HashMap<String, u64> = HashMap::new();
        let mut charged = 0u64;
        for _ in 0..rng.random_range(0..120) {
            match rng.random_range(0..3) {
                // invalid: never reaches the ledger, so nothing may change
                0 => {}
                kind => {
                    let key = if kind == 1 || seen.is_empty() {
                        format!("k{}", rng.random_range(0..1_000_000))
                    } else {
                        let i = rng.random_range(0..seen.len());
                        seen.keys().nth(i).unwrap().clone()
                    };
                    let got = ledger.admit(&key);
                    let want = match seen.get(&key) {
                        Some(&first) => Admission::Duplicate { first },
                        None if charged >= budget => Admission::Exhausted,
                        None => {
                            seen.insert(key.clone(), charged);
                            charged += 1;
                            Admission::Charged { slot: charged - 1 }
                        }
                    };
                    ok &= got == want;
                }
            }
            ok &= ledger.consumed() == charged && ledger.consumed() <= budget;
        }
    }

    // engine level: malformed replies and duplicates under a tight alphabet
    let mut engine_ok = true;
    for seed in 0..5 {
        let text = format!(
            "[problem]\nkind = \"text_match\"\ntarget = \"abab\"\nalphabet = \"ab\"\n\
             [backend]\nkind = \"mock\"\nmalformed_rate = 0.3\n\
             [engine]\npopulation_size = 6\nbudget = 12\nseed = {seed}\ngeneration_cap = 40\n"
        );
        let loaded = parse_config(&text, &[]).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let out = execute_run(&loaded, &dir, false).unwrap();
        let events: Vec<Event> = fs::read_to_string(dir.join(EVENTS_FILE))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let mut keys = HashSet::new();
        let mut evaluated = 0u64;
        for e in &events {
            if let Event::CandidateEvaluated { key, .. } = e {
                evaluated += 1;
                keys.insert(key.clone());
            }
        }
        engine_ok &= evaluated == keys.len() as u64
            && evaluated == out.manifest.cost.oracle_calls
            && evaluated <= 12;
    }
    Verdict::new(
        ok && engine_ok,
        "500 random interleavings match a reference model; 5 engine runs charge once per distinct key within B",
    )
}

// ------------------------------------------------------------------ injection

fn check_injection() -> Verdict {
    let memo = Experience::with_prior("keep radii balanced", 50);
    let count = |p: f64, seed: u64| {
        let mut rng = stream_rng(seed, Stream::Injection);
        (0..1000)
            .filter(|_| maybe_inject(&memo, p, &mut rng).is_some())
            .count()
    };
    let half: Vec<usize> = (0..10).map(|s| count(0.5, s)).collect();
    let banded = half.iter().all(|&c| (450..=550).contains(&c));
    let exact = (0..10).all(|s| count(0.0, s) == 0 && count(1.0, s) == 1000);
    Verdict::new(
        banded && exact,
        format!("p=0.5 over 1000 calls on 10 seeds: {half:?}; p=0 and p=1 exact: {exact}"),
    )
}

// ---------------------------------------------------------------- determinism

const CIRCLES: &str = include_str!("../../../configs/circle_packing.toml");

fn check_determinism() -> Verdict {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let loaded = parse_config(CIRCLES, &["engine.budget=200".into()]).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    execute_run(&loaded, &a, false).unwrap();
    execute_run(&loaded, &b, false).unwrap();
    let same = |f: &str| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap();
    let identical = same(EVENTS_FILE) && same(METRICS_FILE);
    let elapsed = start.elapsed();
    Verdict::new(
        identical && elapsed < Duration::from_secs(10),
        format!(
            "two circle-packing runs at B=200: events and metrics identical = {identical}; {} for both",
            secs(elapsed)
        ),
    )
}

// ------------------------------------------------------------- circle packing

/// Independent feasibility check with a strict tolerance.
fn feasible(p: &CirclePacking) -> bool {
    let tol = 1e-9;
    let n = p.radii.len();
    for i in 0..n {
        let ([x, y], r) = (p.centers[i], p.radii[i]);
        if r <= 0.0 || x - r < -tol || y - r < -tol || x + r > 1.0 + tol || y + r > 1.0 + tol {
            return false;
        }
        for j in i + 1..n {
            let [u, v] = p.centers[j];
            if (x - u).hypot(y - v) < r + p.radii[j] - tol {
                return false;
            }
        }
    }
    true
}

fn check_circle_packing() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let schedule = RepairSchedule::default();
    let mut mins = Vec::new();
    let mut all_feasible = true;
    for n in [1usize, 2, 4] {
        let mut min_sum = f64::INFINITY;
        for _ in 0..20 {
            let start = CirclePacking {
                centers: (0..n).map(|_| [rng.random(), rng.random()]).collect(),
                radii: (0..n).map(|_| rng.random_range(0.0..0.5)).collect(),
            };
            let out = circle_repair(&start, &schedule);
            all_feasible &= feasible(&out.packing);
            min_sum = min_sum.min(out.packing.radii.iter().sum());
        }
        mins.push(min_sum);
    }
    let repair_ok =
        all_feasible && (mins[0] - 0.5).abs() <= 1e-6 && mins[1] >= 0.556 && mins[2] >= 0.9;
    let repair_time = start.elapsed();

    let mut improved = 0;
    for seed in 1..=20u64 {
        let loaded = parse_config(CIRCLES, &[format!("engine.seed={seed}")]).unwrap();
        let cfg = &loaded.config;
        let problem = cfg.build_problem().unwrap();
        let backend = cfg.build_backend(&problem).unwrap();
        let seeds = cfg.seed_candidates(problem.as_ref());
        let mut state =
            initialize_run(cfg.run_config(), problem, &seeds, None, &mut NullSink).unwrap();
        // radius sum of the evaluated layout, checked here rather than trusted
        let sum_r = |c: &llmopt_core::engine::Candidate| {
            let text = c.refined_text.as_deref().unwrap_or(&c.text);
            CirclePacking::parse(text)
                .ok()
                .filter(feasible)
                .map_or(0.0, |p| p.radii.iter().sum::<f64>())
        };
        let initial = state.members().iter().map(|c| sum_r(c)).fold(0.0, f64::max);
        state.run(backend.as_ref(), &mut NullSink).unwrap();
        let last = state.members().iter().map(|c| sum_r(c)).fold(0.0, f64::max);
        if last > initial {
            improved += 1;
        }
    }
    Verdict::new(
        repair_ok && repair_time < Duration::from_secs(60) && improved >= 18,
        format!(
            "worst of 20 repairs: n=1 {:.9}, n=2 {:.4}, n=4 {:.4}, all feasible = {all_feasible} ({}); \
             mock B=500 on n=4 improved the best radius sum in {improved}/20 seeds",
            mins[0],
            mins[1],
            mins[2],
            secs(repair_time)
        ),
    )
}

// ------------------------------------------------------------------ k sweep

fn check_k_sweep() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SweepSpec {
        axis: SweepAxis::KOffspring,
        values: vec!["1".into(), "2".into(), "3".into()],
        repeats: 3,
        parallel: true,
    };
    let summary = run_sweep(CIRCLES, &["engine.budget=200".into()], &spec, tmp.path()).unwrap();
    let table_rows: Vec<&str> = summary
        .markdown
        .lines()
        .filter(|l| l.starts_with("| ") && !l.starts_with("| k_offspring"))
        .collect();
    let header_cols = summary
        .markdown
        .lines()
        .find(|l| l.starts_with("| k_offspring"))
        .map_or(0, |l| l.matches('|').count());
    let well_formed = table_rows.len() == 3
        && table_rows
            .iter()
            .all(|r| r.matches('|').count() == header_cols && r.matches(" ± ").count() == 9);
    let calls: Vec<f64> = summary
        .rows
        .iter()
        .map(|r| r.stat("backend_calls").map_or(f64::NAN, |s| s.0))
        .collect();
    let oracle: Vec<f64> = summary
        .rows
        .iter()
        .map(|r| r.stat("oracle_calls").map_or(f64::NAN, |s| s.0))
        .collect();
    let decreasing = calls.windows(2).all(|w| w[1] < w[0]);
    let fixed = oracle.iter().all(|&o| o == 200.0);
    Verdict::new(
        well_formed && decreasing && fixed,
        format!(
            "3 values x 3 repeats at 200 oracle calls each: mean backend calls {calls:?}; table well-formed = {well_formed}"
        ),
    )
}

// ---------------------------------------------------------------- parser fuzz

fn check_parser_fuzz() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let fragments: [&[u8]; 6] = [
        b"<candidate>",
        b"</candidate>",
        b"<candidate",
        b"</cand",
        b"\xff\xfe",
        b"\n",
    ];
    let mut faults = 0;
    let mut extracted = 0usize;
    for _ in 0..100_000 {
        let mut bytes = Vec::new();
        for _ in 0..rng.random_range(0..24) {
            if rng.random_bool(0.3) {
                bytes.extend_from_slice(fragments[rng.random_range(0..fragments.len())]);
            } else {
                bytes.push(rng.random());
            }
        }
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let k = rng.random_range(0..4);
        match catch_unwind(AssertUnwindSafe(|| parse_candidates(&text, k))) {
            Ok(out) => {
                extracted += out.candidates.len();
                if out.candidates.iter().any(|c| !text.contains(c.trim())) {
                    faults += 1;
                }
            }
            Err(_) => faults += 1,
        }
    }
    Verdict::new(
        faults == 0,
        format!("100000 random byte strings, {faults} faults, {extracted} candidates extracted"),
    )
}

#[test]
fn acceptance() {
    let hook = std::panic::take_hook();
    // the fuzz loop catches panics on purpose; keep its output quiet
    std::panic::set_hook(Box::new(|_| {}));
    let fuzz = check_parser_fuzz();
    std::panic::set_hook(hook);

    let (hv, hv_attainable) = check_hypervolume();
    let results = [
        ("hypervolume", hv),
        ("fronts", check_fronts()),
        ("argmax_invariance", check_argmax_invariance()),
        ("auc", check_auc()),
        ("budget_ledger", check_ledger()),
        ("injection_rate", check_injection()),
        ("determinism", check_determinism()),
        ("circle_packing", check_circle_packing()),
        ("k_sweep", check_k_sweep()),
        ("parser_fuzz", fuzz),
    ];
    let mut unexpected = Vec::new();
    let _ = writeln!(std::io::stderr());
    for (name, v) in &results {
        // straight to the stderr handle so the lines survive output capture
        let _ = writeln!(
            std::io::stderr(),
            "{} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass && !KNOWN_GAPS.contains(name) {
            unexpected.push(*name);
        }
    }
    assert!(
        hv_attainable,
        "hypervolume checks that do not depend on the stated third example failed"
    );
    assert!(unexpected.is_empty(), "failed: {unexpected:?}");
}
