use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::candidate::{Candidate, CandidateId, Population};
use super::config::RunConfig;
use super::events::{Event, EventSink, StopReason};
use super::ledger::{Admission, BudgetLedger};
use crate::backend::{
    build_prompt, parse_candidates, Backend, BackendReply, BackendRequest, JobKind, ParentBlock,
    Usage,
};
use crate::error::{Error, Result};
use crate::experience::{build_evidence, maybe_inject, update_experience, Experience};
use crate::metrics::{auc_top_k, hypervolume, population_stats, top_k_mean, MetricSnapshot};
use crate::objective::{FeedbackAdapter, ObservedRanges, RawEvaluation};
use crate::problem::{Payload, Problem};
use crate::rng::{stream_rng, RunStreams, Stream};
use crate::selection::hybrid_select;

/// One backend call planned for a generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariationJob {
    pub index: usize,
    pub kind: JobKind,
    pub parents: Vec<CandidateId>,
    /// A crossover draw turned into a mutation because the population has one member.
    pub downgraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u32,
    pub proposed: usize,
    pub decoded: usize,
    pub duplicates: usize,
    pub evaluated: usize,
    pub valid: usize,
    pub consumed: u64,
    pub backend_failures: usize,
    pub memo_version: u32,
    pub metrics: MetricSnapshot,
}

/// One line of `experience.history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub generation: u32,
    pub version: u32,
    pub memo: String,
    pub good: Vec<CandidateId>,
    pub bad: Vec<CandidateId>,
    pub skipped: bool,
}

/// Cost and outcome totals for a finished (or failed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub generations: u32,
    pub consumed: u64,
    pub budget: u64,
    pub optimizer_calls: u64,
    pub summarizer_calls: u64,
    pub usage: Usage,
    pub best_id: Option<CandidateId>,
    pub best_fitness: Option<f64>,
}

struct Proposal {
    job: Option<usize>,
    index: usize,
    text: String,
    parents: Vec<CandidateId>,
    origin: Option<JobKind>,
}

#[derive(Default)]
struct AdmissionCounts {
    proposed: usize,
    decoded: usize,
    duplicates: usize,
    evaluated: Vec<CandidateId>,
}

/// Everything the generation driver mutates.
pub struct RunState {
    config: RunConfig,
    problem: Arc<dyn Problem>,
    adapter: FeedbackAdapter,
    ledger: BudgetLedger,
    archive: Vec<Candidate>,
    population: Population,
    experience: Experience,
    experience_log: Vec<ExperienceRecord>,
    streams: RunStreams,
    ranges: ObservedRanges,
    trace: Vec<f64>,
    proposal_keys: Vec<Option<String>>,
    usage: Usage,
    optimizer_calls: u64,
    summarizer_calls: u64,
    idle_generations: u32,
    metrics: Vec<MetricSnapshot>,
}

impl std::fmt::Debug for RunState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunState")
            .field("problem", &self.problem.name())
            .field("generation", &self.population.generation)
            .field("consumed", &self.ledger.consumed())
            .field("population", &self.population.members.len())
            .finish_non_exhaustive()
    }
}

/// `count` random starting candidates drawn from the seed stream.
pub fn random_seeds(problem: &dyn Problem, count: usize, seed: u64) -> Vec<String> {
    let mut rng = stream_rng(seed, Stream::Seeds);
    (0..count)
        .map(|_| problem.random_candidate(&mut rng))
        .collect()
}

/// Evaluate the seeds and build generation 0.
pub fn initialize_run(
    config: RunConfig,
    problem: Arc<dyn Problem>,
    seeds: &[String],
    prior_memo: Option<&str>,
    sink: &mut dyn EventSink,
) -> Result<RunState> {
    config.validate()?;
    let adapter = FeedbackAdapter::new(problem.objectives(), problem.constraints())?
        .with_feedback_cap(config.feedback_cap);
    problem.template().validate(adapter.objectives())?;
    if seeds.is_empty() {
        return Err(Error::config(
            "seeds",
            "at least one seed candidate is required",
        ));
    }

    let mut keys = std::collections::BTreeSet::new();
    for text in seeds {
        if let Ok(p) = problem.decode(text) {
            keys.insert(problem.canonical_key(&p));
        }
    }
    if keys.is_empty() {
        return Err(Error::config("seeds", "no seed candidate could be decoded"));
    }
    if keys.len() as u64 > config.budget {
        return Err(Error::config(
            "budget",
            format!(
                "{} distinct seeds exceed the budget of {}",
                keys.len(),
                config.budget
            ),
        ));
    }

    let dims = adapter.dimensions();
    let mut state = RunState {
        ledger: BudgetLedger::new(config.budget),
        archive: Vec::new(),
        population: Population {
            members: Vec::new(),
            generation: 0,
            size_target: config.population_size,
        },
        experience: prior_memo
            .map(|m| Experience::with_prior(m, config.experience.word_cap))
            .unwrap_or_default(),
        experience_log: Vec::new(),
        streams: RunStreams::new(config.seed),
        ranges: ObservedRanges::new(dims),
        trace: Vec::new(),
        proposal_keys: Vec::new(),
        usage: Usage::default(),
        optimizer_calls: 0,
        summarizer_calls: 0,
        idle_generations: 0,
        metrics: Vec::new(),
        adapter,
        problem,
        config,
    };

    sink.emit(&Event::RunStarted {
        problem: state.problem.name().to_string(),
        seed: state.config.seed,
        budget: state.config.budget,
        population_size: state.config.population_size,
        k_offspring: state.config.k_offspring,
        calls_per_generation: state.config.calls_per_generation(),
        objectives: state
            .adapter
            .objectives()
            .iter()
            .map(|o| o.name.clone())
            .collect(),
    });
    sink.emit(&Event::GenerationStarted {
        generation: 0,
        consumed: 0,
    });

    let proposals = seeds
        .iter()
        .enumerate()
        .map(|(index, text)| Proposal {
            job: None,
            index,
            text: text.clone(),
            parents: Vec::new(),
            origin: None,
        })
        .collect();
    let counts = state.admit_and_evaluate(0, proposals, false, sink)?;
    let valid: Vec<CandidateId> = counts
        .evaluated
        .iter()
        .copied()
        .filter(|&id| state.archive[id as usize].is_valid())
        .collect();
    if valid.is_empty() {
        return Err(Error::Problem(
            "no seed candidate evaluated as valid".into(),
        ));
    }
    state.population.members = state.select(valid);
    sink.emit(&Event::SelectionDone {
        generation: 0,
        survivors: state.population.members.clone(),
        by_fitness: 0,
        by_pareto: 0,
    });
    let metrics = state.snapshot();
    sink.emit(&Event::GenerationFinished {
        generation: 0,
        proposed: seeds.len(),
        decoded: counts.decoded,
        duplicates: counts.duplicates,
        evaluated: counts.evaluated.len(),
        valid: state.population.members.len(),
        consumed: state.ledger.consumed(),
        metrics,
    });
    Ok(state)
}

impl RunState {
    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn problem(&self) -> &Arc<dyn Problem> {
        &self.problem
    }

    pub fn adapter(&self) -> &FeedbackAdapter {
        &self.adapter
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn generation(&self) -> u32 {
        self.population.generation
    }

    /// Every evaluated candidate, indexed by id.
    pub fn archive(&self) -> &[Candidate] {
        &self.archive
    }

    pub fn candidate(&self, id: CandidateId) -> Option<&Candidate> {
        self.archive.get(id as usize)
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn members(&self) -> Vec<&Candidate> {
        self.population
            .members
            .iter()
            .map(|&id| &self.archive[id as usize])
            .collect()
    }

    pub fn experience(&self) -> &Experience {
        &self.experience
    }

    pub fn experience_log(&self) -> &[ExperienceRecord] {
        &self.experience_log
    }

    pub fn metrics(&self) -> &[MetricSnapshot] {
        &self.metrics
    }

    /// Fitness of each oracle call, in call order; invalid results count as 0.
    pub fn fitness_trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.archive
            .iter()
            .filter(|c| c.is_valid())
            .min_by(|a, b| b.f().total_cmp(&a.f()).then(a.id.cmp(&b.id)))
    }

    pub fn summary(&self) -> RunSummary {
        let best = self.best();
        RunSummary {
            generations: self.population.generation,
            consumed: self.ledger.consumed(),
            budget: self.ledger.budget(),
            optimizer_calls: self.optimizer_calls,
            summarizer_calls: self.summarizer_calls,
            usage: self.usage,
            best_id: best.map(|c| c.id),
            best_fitness: best.map(Candidate::f),
        }
    }

    pub fn should_stop(&self) -> Option<StopReason> {
        if self.ledger.is_exhausted() {
            Some(StopReason::BudgetExhausted)
        } else if self
            .config
            .generation_cap
            .is_some_and(|cap| self.population.generation >= cap)
        {
            Some(StopReason::GenerationCap)
        } else if self.idle_generations >= self.config.stall_generations {
            Some(StopReason::Stalled)
        } else {
            None
        }
    }

    /// Plan this generation's backend calls from the pairing stream.
    pub fn pair_parents(&mut self) -> Vec<VariationJob> {
        let members = &self.population.members;
        assert!(!members.is_empty(), "cannot pair an empty population");
        let rng = &mut self.streams.pairing;
        let (pc, pm) = (self.config.p_crossover, self.config.p_mutation);
        (0..self.config.calls_per_generation())
            .map(|index| {
                let kind = loop {
                    let u: f64 = rng.random();
                    if u < pc {
                        break JobKind::Crossover;
                    }
                    if u < pc + pm {
                        break JobKind::Mutation;
                    }
                };
                if kind == JobKind::Crossover && members.len() >= 2 {
                    let pair = rand::seq::index::sample(rng, members.len(), 2);
                    VariationJob {
                        index,
                        kind,
                        parents: vec![members[pair.index(0)], members[pair.index(1)]],
                        downgraded: false,
                    }
                } else {
                    VariationJob {
                        index,
                        kind: JobKind::Mutation,
                        parents: vec![members[rng.random_range(0..members.len())]],
                        downgraded: kind == JobKind::Crossover,
                    }
                }
            })
            .collect()
    }

    /// Run generations until a stop condition holds.
    pub fn run(&mut self, backend: &dyn Backend, sink: &mut dyn EventSink) -> Result<StopReason> {
        loop {
            if let Some(reason) = self.should_stop() {
                sink.emit(&Event::RunFinished {
                    reason,
                    generations: self.population.generation,
                    consumed: self.ledger.consumed(),
                });
                return Ok(reason);
            }
            if let Err(e) = self.run_generation(backend, sink) {
                sink.emit(&Event::RunFailed {
                    error: e.to_string(),
                });
                return Err(e);
            }
        }
    }

    /// Pair, vary, evaluate, select and update the memo once.
    pub fn run_generation(
        &mut self,
        backend: &dyn Backend,
        sink: &mut dyn EventSink,
    ) -> Result<GenerationReport> {
        let generation = self.population.generation + 1;
        self.population.generation = generation;
        sink.emit(&Event::GenerationStarted {
            generation,
            consumed: self.ledger.consumed(),
        });

        let jobs = self.pair_parents();
        let k = self.config.k_offspring;
        let mut requests = Vec::with_capacity(jobs.len());
        for job in &jobs {
            let injected = maybe_inject(
                &self.experience,
                self.config.p_exp,
                &mut self.streams.injection,
            );
            let blocks: Vec<ParentBlock> = job
                .parents
                .iter()
                .map(|&id| {
                    let c = &self.archive[id as usize];
                    ParentBlock {
                        text: c.display_text().to_string(),
                        feedback: c
                            .eval
                            .as_ref()
                            .map(|e| self.adapter.format_feedback(e))
                            .unwrap_or_default(),
                    }
                })
                .collect();
            let bundle = build_prompt(
                self.problem.template(),
                self.adapter.objectives(),
                job.kind,
                &blocks,
                injected,
                k,
            );
            let request = BackendRequest::variation(&bundle);
            sink.emit(&Event::JobPlanned {
                generation,
                job: job.index,
                kind: job.kind,
                parents: job.parents.clone(),
                downgraded: job.downgraded,
                experience_injected: injected.is_some(),
                prompt_hash: request.prompt_hash(),
                system: request.system.clone(),
                prompt: request.prompt.clone(),
            });
            requests.push(request);
        }

        let replies = run_parallel(&requests, self.config.parallelism, |r| backend.complete(r));
        self.optimizer_calls += replies.len() as u64;

        let mut proposals = Vec::new();
        let mut failures = 0;
        for (job, reply) in jobs.iter().zip(replies) {
            match reply {
                Ok(reply) => {
                    self.absorb_reply(generation, job, &reply, &mut proposals, sink);
                }
                Err(e) => {
                    failures += 1;
                    sink.emit(&Event::BackendFailed {
                        generation,
                        job: job.index,
                        error: e.to_string(),
                    });
                    if e.is_fatal() {
                        return Err(Error::Backend(e));
                    }
                }
            }
        }
        if failures == jobs.len() {
            log::warn!("generation {generation}: every backend call failed");
        }

        let counts = self.admit_and_evaluate(generation, proposals, true, sink)?;
        let valid_new: Vec<CandidateId> = counts
            .evaluated
            .iter()
            .copied()
            .filter(|&id| self.archive[id as usize].is_valid())
            .collect();

        let mut pool = self.population.members.clone();
        pool.extend(&valid_new);
        let survivors = self.select_with_counts(pool);
        self.population.members = survivors.0;
        sink.emit(&Event::SelectionDone {
            generation,
            survivors: self.population.members.clone(),
            by_fitness: survivors.1,
            by_pareto: survivors.2,
        });

        self.update_memo(generation, backend, sink)?;

        if counts.evaluated.is_empty() {
            self.idle_generations += 1;
        } else {
            self.idle_generations = 0;
        }
        let metrics = self.snapshot();
        sink.emit(&Event::GenerationFinished {
            generation,
            proposed: counts.proposed,
            decoded: counts.decoded,
            duplicates: counts.duplicates,
            evaluated: counts.evaluated.len(),
            valid: valid_new.len(),
            consumed: self.ledger.consumed(),
            metrics: metrics.clone(),
        });
        Ok(GenerationReport {
            generation,
            proposed: counts.proposed,
            decoded: counts.decoded,
            duplicates: counts.duplicates,
            evaluated: counts.evaluated.len(),
            valid: valid_new.len(),
            consumed: self.ledger.consumed(),
            backend_failures: failures,
            memo_version: self.experience.version,
            metrics,
        })
    }

    fn absorb_reply(
        &mut self,
        generation: u32,
        job: &VariationJob,
        reply: &BackendReply,
        proposals: &mut Vec<Proposal>,
        sink: &mut dyn EventSink,
    ) {
        let k = self.config.k_offspring;
        if let Some(u) = reply.usage {
            self.usage += u;
        }
        let parsed = parse_candidates(&reply.raw_text, k);
        sink.emit(&Event::BackendReplied {
            generation,
            job: job.index,
            attempts: reply.attempts,
            latency_ms: reply.latency_ms,
            input_tokens: reply.usage.map(|u| u.input_tokens),
            output_tokens: reply.usage.map(|u| u.output_tokens),
            candidates: parsed.candidates.len(),
            expected: k,
            diagnostics: parsed.diagnostics.clone(),
            reply: reply.raw_text.clone(),
        });
        for (index, text) in parsed.candidates.into_iter().take(k).enumerate() {
            proposals.push(Proposal {
                job: Some(job.index),
                index,
                text,
                parents: job.parents.clone(),
                origin: Some(job.kind),
            });
        }
    }

    fn update_memo(
        &mut self,
        generation: u32,
        backend: &dyn Backend,
        sink: &mut dyn EventSink,
    ) -> Result<()> {
        let history: Vec<_> = self
            .archive
            .iter()
            .filter_map(Candidate::evidence_entry)
            .collect();
        if history.is_empty() {
            return Ok(());
        }
        let names: Vec<String> = self
            .adapter
            .objectives()
            .iter()
            .map(|o| o.name.clone())
            .collect();
        let cfg = &self.config.experience;
        let evidence = build_evidence(
            &history,
            &names,
            cfg.good_count,
            cfg.bad_count,
            &mut self.streams.evidence,
        );
        let update = update_experience(&self.experience, &evidence, backend, cfg.word_cap);
        self.summarizer_calls += 1;
        if let Some(u) = update.usage {
            self.usage += u;
        }
        match update.skipped {
            Some(e) => {
                sink.emit(&Event::ExperienceSkipped {
                    generation,
                    version: self.experience.version,
                    reason: e.to_string(),
                    prompt: update.prompt.clone(),
                });
                self.experience_log.push(ExperienceRecord {
                    generation,
                    version: self.experience.version,
                    memo: self.experience.memo.clone(),
                    good: evidence.good_ids(),
                    bad: evidence.bad_ids(),
                    skipped: true,
                });
                if e.is_fatal() {
                    return Err(Error::Backend(e));
                }
            }
            None => {
                self.experience = update.experience;
                sink.emit(&Event::ExperienceUpdated {
                    generation,
                    version: self.experience.version,
                    words: self.experience.word_count(),
                    good: evidence.good_ids(),
                    bad: evidence.bad_ids(),
                    input_tokens: update.usage.map(|u| u.input_tokens),
                    output_tokens: update.usage.map(|u| u.output_tokens),
                    prompt: update.prompt.clone(),
                    reply: update.reply.clone().unwrap_or_default(),
                });
                self.experience_log.push(ExperienceRecord {
                    generation,
                    version: self.experience.version,
                    memo: self.experience.memo.clone(),
                    good: evidence.good_ids(),
                    bad: evidence.bad_ids(),
                    skipped: false,
                });
            }
        }
        Ok(())
    }

    /// Decode, deduplicate, charge and evaluate proposals in order.
    fn admit_and_evaluate(
        &mut self,
        generation: u32,
        proposals: Vec<Proposal>,
        count_proposals: bool,
        sink: &mut dyn EventSink,
    ) -> Result<AdmissionCounts> {
        let mut counts = AdmissionCounts {
            proposed: proposals.len(),
            ..Default::default()
        };
        let mut pending: Vec<(Proposal, Payload, String)> = Vec::new();
        for p in proposals {
            let payload = match self.problem.decode(&p.text) {
                Ok(payload) => payload,
                Err(e) => {
                    if count_proposals {
                        self.proposal_keys.push(None);
                    }
                    if p.job.is_none() {
                        sink.emit(&Event::SeedRejected {
                            index: p.index,
                            reason: e.to_string(),
                        });
                    } else {
                        sink.emit(&Event::ProposalRejected {
                            generation,
                            job: p.job,
                            index: p.index,
                            reason: e.to_string(),
                        });
                    }
                    continue;
                }
            };
            counts.decoded += 1;
            let key = self.problem.canonical_key(&payload);
            if count_proposals {
                self.proposal_keys.push(Some(key.clone()));
            }
            match self.ledger.admit(&key) {
                Admission::Duplicate { first } => {
                    counts.duplicates += 1;
                    sink.emit(&Event::ProposalDuplicate {
                        generation,
                        job: p.job,
                        index: p.index,
                        duplicate_of: first,
                    });
                }
                Admission::Exhausted => sink.emit(&Event::ProposalDropped {
                    generation,
                    job: p.job,
                    index: p.index,
                }),
                Admission::Charged { slot } => {
                    debug_assert_eq!(slot as usize, self.archive.len() + pending.len());
                    pending.push((p, payload, key));
                }
            }
        }

        let payloads: Vec<Payload> = pending
            .iter()
            .map(|(_, payload, _)| payload.clone())
            .collect();
        let raws = self.evaluate_parallel(&payloads);
        if let Some(msg) = self.problem.take_fatal_error() {
            return Err(Error::Problem(msg));
        }

        let mut changed = false;
        for raw in &raws {
            if let Some(eff) = self.adapter.effective_raw(raw) {
                changed |= self.ranges.observe(&eff);
            }
        }
        if changed && self.adapter.uses_running_ranges() && !self.archive.is_empty() {
            for c in &mut self.archive {
                if let Some(eval) = c.eval.as_mut() {
                    self.adapter.renormalize(eval, &self.ranges);
                }
            }
            sink.emit(&Event::Renormalized {
                generation,
                candidates: self.archive.len(),
            });
        }

        for ((p, payload, key), raw) in pending.into_iter().zip(raws) {
            let id = self.archive.len() as CandidateId;
            let eval = self.adapter.assess(&raw, &self.ranges);
            self.trace.push(eval.fitness.unwrap_or(0.0));
            sink.emit(&Event::CandidateEvaluated {
                generation,
                id,
                job: p.job,
                parents: p.parents.clone(),
                key: key.clone(),
                valid: eval.valid,
                raw: eval.raw.clone(),
                fitness: eval.fitness,
            });
            self.archive.push(Candidate {
                id,
                text: p.text,
                refined_text: raw.refined_text,
                payload,
                canonical_key: key,
                eval: Some(eval),
                generation,
                parents: p.parents,
                origin: p.origin,
            });
            counts.evaluated.push(id);
        }
        Ok(counts)
    }

    fn evaluate_parallel(&self, payloads: &[Payload]) -> Vec<RawEvaluation> {
        if payloads.is_empty() {
            return Vec::new();
        }
        let workers = self.config.parallelism.min(payloads.len());
        let chunk = payloads.len().div_ceil(workers);
        let chunks: Vec<&[Payload]> = payloads.chunks(chunk).collect();
        let problem = &self.problem;
        run_parallel(&chunks, workers, |c| problem.evaluate_batch(c))
            .into_iter()
            .flatten()
            .collect()
    }

    fn select(&mut self, pool: Vec<CandidateId>) -> Vec<CandidateId> {
        self.select_with_counts(pool).0
    }

    fn select_with_counts(&mut self, pool: Vec<CandidateId>) -> (Vec<CandidateId>, usize, usize) {
        let cands: Vec<&Candidate> = pool.iter().map(|&id| &self.archive[id as usize]).collect();
        let sel = hybrid_select(
            &cands,
            self.config.population_size,
            self.config.selector,
            &mut self.streams.selection,
        );
        let ids = sel.indices.iter().map(|&i| pool[i]).collect();
        (ids, sel.by_fitness, sel.by_pareto)
    }

    fn snapshot(&mut self) -> MetricSnapshot {
        let mut ranked: Vec<&Candidate> = self.archive.iter().filter(|c| c.is_valid()).collect();
        ranked.sort_by(|a, b| b.f().total_cmp(&a.f()).then(a.id.cmp(&b.id)));
        let entries = ranked.iter().map(|c| (c.canonical_key.as_str(), c.f()));
        let top1 = top_k_mean(entries.clone(), 1);
        let top10 = top_k_mean(entries, 10);
        let points: Vec<&[f64]> = self
            .population
            .members
            .iter()
            .filter_map(|&id| {
                self.archive[id as usize]
                    .eval
                    .as_ref()?
                    .normalized
                    .as_deref()
            })
            .collect();
        let hv = hypervolume(&points, &mut self.streams.hypervolume);
        let problem = &self.problem;
        let stats = population_stats(
            self.proposal_keys.iter().map(Option::as_deref),
            &ranked,
            |a, b| problem.distance(&a.payload, &b.payload),
        );
        let snap = MetricSnapshot {
            generation: self.population.generation,
            consumed: self.ledger.consumed(),
            top1_f: top1,
            top10_f: top10,
            auc_top10: auc_top_k(&self.trace, 10, self.ledger.budget() as usize),
            hypervolume: hv,
            uniqueness: stats.map(|s| s.uniqueness),
            validity: stats.map(|s| s.validity),
            diversity: stats.map(|s| s.diversity),
        };
        self.metrics.push(snap.clone());
        snap
    }
}

/// Apply `f` to every item on up to `parallelism` threads; results keep input order.
fn run_parallel<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if parallelism <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..parallelism.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot")
                .expect("every item processed")
        })
        .collect()
}
