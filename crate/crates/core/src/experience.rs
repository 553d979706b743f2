//! The single evolving experience memo: evidence assembly, summarizer
//! update, word-capped storage and per-call Bernoulli injection.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, BackendRequest, CallRole, RequestContext, Usage};
use crate::objective::fmt_num;

pub const SUMMARIZER_PREAMBLE: &str = "You maintain a short memo of lessons for an optimization \
search. Rewrite the memo using the evidence below: keep general, non-redundant insights about what \
distinguishes strong candidates from weak ones, and overwrite anything the evidence contradicts or \
makes stale. Reply with the memo text only.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperienceConfig {
    pub good_count: usize,
    pub bad_count: usize,
    pub word_cap: usize,
}

impl Default for ExperienceConfig {
    fn default() -> Self {
        Self {
            good_count: 10,
            bad_count: 10,
            word_cap: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Experience {
    pub memo: String,
    pub version: u32,
    /// Candidate ids behind the latest update.
    pub provenance: Vec<u64>,
}

impl Experience {
    /// A user-supplied starting memo; version stays 0.
    pub fn with_prior(memo: impl Into<String>, word_cap: usize) -> Self {
        Self {
            memo: truncate_words(&memo.into(), word_cap),
            version: 0,
            provenance: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.memo.trim().is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.memo.split_whitespace().count()
    }
}

/// One history entry offered to evidence assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub id: u64,
    pub key: String,
    pub text: String,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub good: Vec<EvidenceEntry>,
    pub bad: Vec<EvidenceEntry>,
    pub rendered: String,
}

impl EvidenceSet {
    pub fn good_ids(&self) -> Vec<u64> {
        self.good.iter().map(|e| e.id).collect()
    }

    pub fn bad_ids(&self) -> Vec<u64> {
        self.bad.iter().map(|e| e.id).collect()
    }
}

/// Split `n` ranked entries into good and bad counts, shrinking proportionally
/// when there are fewer than `r_good + r_bad`.
fn evidence_counts(n: usize, r_good: usize, r_bad: usize) -> (usize, usize) {
    if n >= r_good + r_bad {
        return (r_good, r_bad);
    }
    let share = (n as f64 * r_good as f64 / (r_good + r_bad) as f64).round() as usize;
    let good = share.clamp(r_good.min(1), n);
    (good, r_bad.min(n - good))
}

/// Top `r_good` distinct candidates by fitness plus a uniform sample of
/// `r_bad` from the lower half of the ranking.
pub fn build_evidence<R: Rng + ?Sized>(
    history: &[EvidenceEntry],
    objective_names: &[String],
    r_good: usize,
    r_bad: usize,
    rng: &mut R,
) -> EvidenceSet {
    let mut ranked: Vec<&EvidenceEntry> = history.iter().collect();
    ranked.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.id.cmp(&b.id)));
    let mut seen = std::collections::HashSet::new();
    ranked.retain(|e| seen.insert(e.key.as_str()));

    let n = ranked.len();
    let (g, b) = evidence_counts(n, r_good, r_bad);
    let good: Vec<EvidenceEntry> = ranked[..g].iter().map(|e| (*e).clone()).collect();
    let pool_start = g.max(n.div_ceil(2)).min(n);
    let pool = &ranked[pool_start..];
    let take = b.min(pool.len());
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, pool.len(), take).into_vec();
    picks.sort_unstable();
    let bad: Vec<EvidenceEntry> = picks.into_iter().map(|i| pool[i].clone()).collect();

    let rendered = render_evidence(&good, &bad, objective_names);
    EvidenceSet {
        good,
        bad,
        rendered,
    }
}

fn render_evidence(good: &[EvidenceEntry], bad: &[EvidenceEntry], names: &[String]) -> String {
    let mut out = String::new();
    let block = |out: &mut String, title: &str, entries: &[EvidenceEntry]| {
        let _ = writeln!(out, "### {title}");
        if entries.is_empty() {
            out.push_str("(none)\n");
        }
        for e in entries {
            let _ = writeln!(out, "Candidate #{} (F = {}):", e.id, fmt_num(e.fitness));
            let _ = writeln!(out, "```\n{}\n```", e.text.trim());
            for (i, raw) in e.raw.iter().enumerate() {
                let name = names.get(i).map_or("objective", String::as_str);
                let norm = e.normalized.get(i).copied().unwrap_or(f64::NAN);
                let _ = writeln!(
                    out,
                    "  {name}: raw {}, normalized {}",
                    fmt_num(*raw),
                    fmt_num(norm)
                );
            }
        }
    };
    block(&mut out, "Good candidates", good);
    out.push('\n');
    block(&mut out, "Bad candidates", bad);
    out
}

/// Keep at most `cap` whitespace-separated words, preserving the original
/// spacing of what is kept.
pub fn truncate_words(text: &str, cap: usize) -> String {
    let mut words = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            words += 1;
            if words > cap {
                return text[..i].trim_end().to_string();
            }
        }
    }
    text.trim().to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceUpdate {
    pub experience: Experience,
    /// Set when the summarizer failed and the prior memo was kept.
    pub skipped: Option<BackendError>,
    pub usage: Option<Usage>,
    /// Exact summarizer prompt, for the audit log.
    pub prompt: String,
    /// Unmodified summarizer reply; absent when the call failed.
    pub reply: Option<String>,
}

pub fn summarizer_prompt(prior: &Experience, evidence: &EvidenceSet) -> String {
    let memo = if prior.is_empty() {
        "(empty)"
    } else {
        prior.memo.trim()
    };
    format!(
        "## Current Memo\n{memo}\n\n## Evidence\n{}\n## Instruction\nWrite the updated memo.",
        evidence.rendered.trim_end()
    )
}

/// One summarizer call. Failures keep the prior memo and version.
pub fn update_experience(
    prior: &Experience,
    evidence: &EvidenceSet,
    backend: &dyn Backend,
    word_cap: usize,
) -> ExperienceUpdate {
    let request = BackendRequest {
        role: CallRole::Summarizer,
        system: SUMMARIZER_PREAMBLE.to_string(),
        prompt: summarizer_prompt(prior, evidence),
        context: RequestContext::Summary {
            good: evidence.good_ids(),
            bad: evidence.bad_ids(),
            prior_version: prior.version,
        },
    };
    match backend.complete(&request) {
        Ok(reply) => ExperienceUpdate {
            experience: Experience {
                memo: truncate_words(&reply.raw_text, word_cap),
                version: prior.version + 1,
                provenance: evidence
                    .good_ids()
                    .into_iter()
                    .chain(evidence.bad_ids())
                    .collect(),
            },
            skipped: None,
            usage: reply.usage,
            prompt: request.prompt,
            reply: Some(reply.raw_text),
        },
        Err(e) => ExperienceUpdate {
            experience: prior.clone(),
            skipped: Some(e),
            usage: None,
            prompt: request.prompt,
            reply: None,
        },
    }
}

/// Bernoulli(`p_exp`) draw for one backend call.
///
/// Always consumes one draw so the injection stream advances identically
/// whether or not a memo exists yet.
pub fn maybe_inject<'a, R: Rng + ?Sized>(
    experience: &'a Experience,
    p_exp: f64,
    rng: &mut R,
) -> Option<&'a str> {
    let hit = rng.random::<f64>() < p_exp;
    (hit && !experience.is_empty()).then_some(experience.memo.as_str())
}
