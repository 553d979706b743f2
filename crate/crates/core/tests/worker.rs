use std::sync::Arc;

use llmopt_core::backend::{MockBackend, TaskTemplate};
use llmopt_core::engine::{initialize_run, NullSink, RunConfig};
use llmopt_core::objective::{FeedbackAdapter, ObservedRanges};
use llmopt_core::problem::{ExternalProblem, Payload, Problem};
use llmopt_core::worker::{run_conformance, ExternalWorker, WorkerConfig, WorkerError, WorkerPool};

fn config(mode: &str) -> WorkerConfig {
    WorkerConfig {
        command: vec![env!("CARGO_BIN_EXE_llmopt-stub-worker").into(), mode.into()],
        request_timeout_secs: 10.0,
        handshake_timeout_secs: 10.0,
        shutdown_grace_secs: 1.0,
        ..Default::default()
    }
}

fn probes() -> Vec<String> {
    ["banana", "kiwi", "strawberry"].map(String::from).to_vec()
}

#[test]
fn well_behaved_worker_passes_every_check() {
    let report = run_conformance(&config("ok"), &probes());
    assert!(report.passed(), "{report}");
    assert_eq!(report.checks.len(), 8);
}

#[test]
fn conformance_flags_each_misbehaviour() {
    for (mode, check) in [
        ("nan", "finite objectives"),
        ("nondeterministic", "determinism"),
        ("bad-id", "batch alignment"),
        ("short", "batch alignment"),
        ("protocol2", "handshake"),
        ("crash", "batch alignment"),
    ] {
        let report = run_conformance(&config(mode), &probes());
        assert!(!report.passed(), "{mode} should fail");
        let failed: Vec<&str> = report.failed().map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&check), "{mode}: {failed:?}\n{report}");
    }
}

#[test]
fn handshake_declares_objectives() {
    let w = ExternalWorker::spawn(&config("ok")).unwrap();
    let names: Vec<&str> = w
        .handshake()
        .objectives
        .iter()
        .map(|o| o.name.as_str())
        .collect();
    assert_eq!(names, ["length", "vowels"]);
    w.shutdown();
}

#[test]
fn wrong_protocol_version_is_refused() {
    let err = ExternalWorker::spawn(&config("protocol2")).unwrap_err();
    assert_eq!(err, WorkerError::ProtocolVersion { found: 2 });
}

#[test]
fn slow_worker_times_out() {
    let mut cfg = config("slow");
    cfg.request_timeout_secs = 0.5;
    let mut w = ExternalWorker::spawn(&cfg).unwrap();
    let err = w
        .request(&probes(), std::time::Duration::from_millis(500))
        .unwrap_err();
    assert_eq!(err, WorkerError::Timeout);
}

#[test]
fn mismatched_id_quarantines_worker() {
    let mut w = ExternalWorker::spawn(&config("bad-id")).unwrap();
    let err = w
        .request(&probes(), std::time::Duration::from_secs(5))
        .unwrap_err();
    assert!(matches!(err, WorkerError::UnknownId { .. }), "{err}");
    assert!(w.is_quarantined());
}

#[test]
fn pool_scores_in_order_across_workers() {
    let mut cfg = config("ok");
    cfg.workers = 3;
    cfg.batch_size = 2;
    let pool = WorkerPool::start(cfg).unwrap();
    let cands: Vec<String> = (1..=11).map(|n| "a".repeat(n)).collect();
    let raws = pool.evaluate(&cands).unwrap();
    for (n, raw) in raws.iter().enumerate() {
        assert!(raw.valid);
        assert_eq!(raw.objectives, vec![(n + 1) as f64, (n + 1) as f64]);
    }
    assert_eq!(pool.failures(), 0);
    pool.shutdown();
}

#[test]
fn nan_objectives_make_results_invalid() {
    let pool = WorkerPool::start(config("nan")).unwrap();
    let hs = pool.handshake().clone();
    let adapter = FeedbackAdapter::new(&hs.objectives, &hs.constraints).unwrap();
    let raws = pool.evaluate(&probes()).unwrap();
    for raw in &raws {
        assert!(raw.objectives[0].is_nan());
        let assessed = adapter.assess(raw, &ObservedRanges::new(adapter.dimensions()));
        assert!(!assessed.valid);
        assert_eq!(assessed.fitness, None);
    }
}

#[test]
fn crashing_pool_gives_up_after_restart_limit() {
    let mut cfg = config("crash");
    cfg.restart_limit = 2;
    let pool = WorkerPool::start(cfg).unwrap();
    let mut last = Ok(Vec::new());
    for _ in 0..5 {
        last = pool.evaluate(&probes());
        if last.is_err() {
            break;
        }
        assert!(last.as_ref().unwrap().iter().all(|r| !r.valid));
    }
    assert!(matches!(last.unwrap_err(), WorkerError::RestartLimit(n) if n > 2));
}

fn template() -> TaskTemplate {
    TaskTemplate {
        task_description: "Write a short word.".into(),
        output_format: "<candidate>word</candidate>".into(),
        mutation_instruction: String::new(),
        crossover_instruction: String::new(),
        additional_requirements: String::new(),
        objective_descriptions: vec![],
    }
}

#[test]
fn external_problem_drives_a_short_run() {
    let problem: Arc<dyn Problem> =
        Arc::new(ExternalProblem::start("stub", config("ok"), template(), probes()).unwrap());
    assert_eq!(problem.objectives().len(), 2);
    let raw = problem.evaluate(&Payload::Text { text: "abc".into() });
    assert_eq!(raw.objectives, vec![3.0, 1.0]);

    let cfg = RunConfig {
        population_size: 4,
        budget: 30,
        parallelism: 2,
        ..Default::default()
    };
    let backend = MockBackend::new(1, Arc::clone(&problem));
    let mut state = initialize_run(cfg, problem, &probes(), None, &mut NullSink).unwrap();
    state.run(&backend, &mut NullSink).unwrap();
    assert!(state.ledger().consumed() <= 30);
    assert!(state.archive().len() > 3);
}

#[test]
fn crashing_external_problem_fails_the_run() {
    let mut cfg = config("crash");
    cfg.restart_limit = 1;
    let problem: Arc<dyn Problem> =
        Arc::new(ExternalProblem::start("stub", cfg, template(), probes()).unwrap());
    let run = RunConfig {
        population_size: 2,
        budget: 20,
        ..Default::default()
    };
    let backend = MockBackend::new(1, Arc::clone(&problem));
    let outcome = initialize_run(run, problem, &probes(), None, &mut NullSink)
        .and_then(|mut s| s.run(&backend, &mut NullSink));
    let err = outcome.unwrap_err();
    assert!(err.to_string().contains("worker"), "{err}");
}
