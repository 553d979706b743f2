use llmopt_core::backend::{Backend, BackendError, BackendReply, BackendRequest};
use llmopt_core::experience::*;
use llmopt_core::rng::{stream_rng, Stream};
use proptest::prelude::*;

fn entry(id: u64, fitness: f64) -> EvidenceEntry {
    EvidenceEntry {
        id,
        key: format!("k{id}"),
        text: format!("cand {id}"),
        raw: vec![fitness * 10.0],
        normalized: vec![fitness],
        fitness,
    }
}

fn names() -> Vec<String> {
    vec!["score".into()]
}

#[test]
fn two_entries_split() {
    let hist = [entry(0, 0.2), entry(1, 0.9)];
    let mut rng = stream_rng(1, Stream::Evidence);
    let ev = build_evidence(&hist, &names(), 1, 1, &mut rng);
    assert_eq!(ev.good_ids(), vec![1]);
    assert_eq!(ev.bad_ids(), vec![0]);
    assert!(ev.rendered.contains("raw 9") && ev.rendered.contains("normalized 0.9"));
}

#[test]
fn zero_bad() {
    let hist: Vec<_> = (0..20).map(|i| entry(i, i as f64 / 20.0)).collect();
    let mut rng = stream_rng(1, Stream::Evidence);
    assert!(build_evidence(&hist, &names(), 3, 0, &mut rng)
        .bad
        .is_empty());
}

#[test]
fn replay_is_identical() {
    let hist: Vec<_> = (0..100)
        .map(|i| entry(i, ((i * 37) % 100) as f64 / 100.0))
        .collect();
    let a = build_evidence(
        &hist,
        &names(),
        10,
        10,
        &mut stream_rng(5, Stream::Evidence),
    );
    let b = build_evidence(
        &hist,
        &names(),
        10,
        10,
        &mut stream_rng(5, Stream::Evidence),
    );
    assert_eq!(a, b);
}

#[test]
fn truncation_is_exact() {
    let long = vec!["word"; 5000].join(" ");
    assert_eq!(truncate_words(&long, 500).split_whitespace().count(), 500);
    assert_eq!(truncate_words("a  b\nc", 2), "a  b");
    assert_eq!(truncate_words(" short ", 10), "short");
}

#[test]
fn injection_edges() {
    let memo = Experience::with_prior("keep corners filled", 500);
    let mut rng = stream_rng(0, Stream::Injection);
    assert!((0..1000).all(|_| maybe_inject(&memo, 0.0, &mut rng).is_none()));
    assert!((0..1000).all(|_| maybe_inject(&memo, 1.0, &mut rng).is_some()));
    let empty = Experience::default();
    assert!((0..100).all(|_| maybe_inject(&empty, 1.0, &mut rng).is_none()));
}

struct Failing;

impl Backend for Failing {
    fn name(&self) -> &str {
        "failing"
    }

    fn complete(&self, _: &BackendRequest) -> Result<BackendReply, BackendError> {
        Err(BackendError::Transient("timeout".into()))
    }
}

struct Echo(String);

impl Backend for Echo {
    fn name(&self) -> &str {
        "echo"
    }

    fn complete(&self, _: &BackendRequest) -> Result<BackendReply, BackendError> {
        Ok(BackendReply {
            raw_text: self.0.clone(),
            usage: None,
            latency_ms: 0,
            attempts: 1,
        })
    }
}

#[test]
fn failure_keeps_prior() {
    let prior = Experience::with_prior("old", 500);
    let ev = build_evidence(
        &[entry(0, 1.0)],
        &names(),
        1,
        1,
        &mut stream_rng(0, Stream::Evidence),
    );
    let up = update_experience(&prior, &ev, &Failing, 500);
    assert_eq!(up.experience, prior);
    assert!(up.skipped.is_some());
}

#[test]
fn update_bumps_version_and_caps() {
    let ev = build_evidence(
        &[entry(0, 1.0)],
        &names(),
        1,
        1,
        &mut stream_rng(0, Stream::Evidence),
    );
    let up = update_experience(
        &Experience::default(),
        &ev,
        &Echo(vec!["w"; 900].join(" ")),
        500,
    );
    assert_eq!(up.experience.version, 1);
    assert_eq!(up.experience.word_count(), 500);
    assert_eq!(up.experience.provenance, vec![0]);
}

proptest! {
    #[test]
    fn evidence_sets_are_disjoint(
        fits in prop::collection::vec(0.0f64..1.0, 1..60),
        rg in 0usize..12,
        rb in 0usize..12,
        seed in any::<u64>(),
    ) {
        let hist: Vec<_> = fits.iter().enumerate().map(|(i, &f)| entry(i as u64, f)).collect();
        let ev = build_evidence(&hist, &names(), rg, rb, &mut stream_rng(seed, Stream::Evidence));
        let good = ev.good_ids();
        prop_assert!(ev.bad_ids().iter().all(|b| !good.contains(b)));
        prop_assert!(good.len() <= rg && ev.bad.len() <= rb);
        prop_assert!(ev.good.windows(2).all(|w| w[0].fitness >= w[1].fitness));
        let min_good = ev.good.iter().map(|e| e.fitness).fold(f64::INFINITY, f64::min);
        prop_assert!(ev.bad.iter().all(|b| b.fitness <= min_good));
    }

    #[test]
    fn memo_never_exceeds_cap(words in 0usize..2000, cap in 1usize..600) {
        let text = vec!["x"; words].join(" ");
        prop_assert!(truncate_words(&text, cap).split_whitespace().count() <= cap);
    }
}
