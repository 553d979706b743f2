use llmopt_core::metrics::*;
use llmopt_core::rng::{stream_rng, Stream};
use proptest::prelude::*;
use rand::Rng;

fn keyed(values: &[f64]) -> Vec<(String, f64)> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| (format!("k{i}"), v))
        .collect()
}

fn top(values: &[f64], k: usize) -> Option<f64> {
    let kv = keyed(values);
    top_k_mean(kv.iter().map(|(k, v)| (k.as_str(), *v)), k)
}

#[test]
fn top_k_examples() {
    assert_eq!(top(&[4.0], 10), Some(4.0));
    assert_eq!(top(&[1.0, 2.0, 3.0, 4.0], 2), Some(3.5));
    assert!((top(&[0.7; 6], 3).unwrap() - 0.7).abs() < 1e-12);
    assert_eq!(top(&[], 3), None);
}

#[test]
fn top_k_counts_duplicates_once() {
    let entries = [("a", 5.0), ("a", 5.0), ("b", 1.0)];
    assert_eq!(top_k_mean(entries, 2), Some(3.0));
}

#[test]
fn auc_examples() {
    assert!((auc_top_k(&[0.2, 0.6, 0.4, 0.8], 1, 4) - 0.55).abs() < 1e-12);
    assert!((auc_top_k(&[0.2, 0.6], 1, 4) - 0.5).abs() < 1e-12);
    assert!((auc_top_k(&[0.3; 7], 3, 10) - 0.3).abs() < 1e-12);
    assert_eq!(auc_top_k(&[], 10, 100), 0.0);
}

#[test]
fn hypervolume_examples() {
    let mut rng = stream_rng(0, Stream::Hypervolume);
    let ideal = [1.0, 1.0];
    assert!((hypervolume(&[&ideal], &mut rng) - 1.21).abs() < 1e-12);
    let mid = [0.5, 0.5];
    assert!((hypervolume(&[&mid], &mut rng) - 0.36).abs() < 1e-12);
    let a = [0.9, 0.2];
    let b = [0.2, 0.9];
    // boxes 1.0 x 0.3 each, overlapping in 0.3 x 0.3
    let expected = 0.3 + 0.3 - 0.09;
    assert!((hypervolume(&[&a, &b], &mut rng) - expected).abs() < 1e-12);
    assert_eq!(hypervolume(&[], &mut rng), 0.0);
}

#[test]
fn exact_matches_monte_carlo_in_4d() {
    let mut rng = stream_rng(3, Stream::Hypervolume);
    let pts: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
        .collect();
    let reference = vec![HV_REFERENCE; 4];
    let exact = hypervolume_exact(&pts, &reference);
    let mc = hypervolume_monte_carlo(&pts, &reference, 400_000, &mut rng);
    assert!((exact - mc).abs() / exact < 0.01, "exact {exact} mc {mc}");
}

#[test]
fn five_objectives_use_estimator() {
    let mut rng = stream_rng(0, Stream::Hypervolume);
    let p = [1.0; 5];
    let hv = hypervolume(&[&p], &mut rng);
    assert!((hv - 1.1f64.powi(5)).abs() < 1e-9);
}

#[test]
fn population_stats_examples() {
    let s = population_stats([Some("a"), Some("a"), Some("b")], &[0.0f64], |_, _| 0.0).unwrap();
    assert!((s.uniqueness - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(s.validity, 1.0);

    let keys: Vec<Option<&str>> = (0..10)
        .map(|i| if i < 2 { None } else { Some("x") })
        .collect();
    let s = population_stats(keys, &[0.0f64], |_, _| 0.0).unwrap();
    assert!((s.validity - 0.8).abs() < 1e-12);

    let ranked = ["same", "same"];
    let s = population_stats([Some("k")], &ranked, |a, b| if a == b { 0.0 } else { 1.0 }).unwrap();
    assert_eq!(s.diversity, 0.0);

    assert!(population_stats(Vec::<Option<&str>>::new(), &[0.0f64], |_, _| 0.0).is_none());
}

proptest! {
    #[test]
    fn adding_points_never_shrinks_volume(
        pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..8),
        extra in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let reference = vec![HV_REFERENCE; 3];
        let before = hypervolume_exact(&pts, &reference);
        let mut more = pts.clone();
        more.push(extra);
        let after = hypervolume_exact(&more, &reference);
        prop_assert!(after >= before - 1e-12);
        prop_assert!(after <= HV_REFERENCE.powi(3) + 1e-12);
    }

    #[test]
    fn dominated_point_changes_nothing(
        pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..8),
        bump in prop::collection::vec(0.0f64..0.1, 2),
    ) {
        let reference = vec![HV_REFERENCE; 2];
        let before = hypervolume_exact(&pts, &reference);
        let mut more = pts.clone();
        more.push(pts[0].iter().zip(&bump).map(|(a, b)| a + b).collect());
        let after = hypervolume_exact(&more, &reference);
        prop_assert!((after - before).abs() < 1e-12);
    }

    #[test]
    fn auc_bounded_by_trace(trace in prop::collection::vec(0.0f64..5.0, 1..40), k in 1usize..12) {
        let budget = trace.len() + 5;
        let auc = auc_top_k(&trace, k, budget);
        let lo = trace.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(auc >= lo - 1e-12 && auc <= hi + 1e-12);
    }
}
