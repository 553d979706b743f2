//! Offline backend: produces domain-legal variations of the parents it is
//! shown, seeded from the run seed and the prompt so replies are reproducible.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use super::{Backend, BackendError, BackendReply, BackendRequest, CallRole, RequestContext, Usage};
use super::{CLOSE_TAG, OPEN_TAG};
use crate::problem::Problem;
use crate::rng::{stream_rng, Stream};

#[derive(Clone)]
pub struct MockBackend {
    seed: u64,
    problem: Arc<dyn Problem>,
    malformed_rate: f64,
    reject_auth: bool,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("seed", &self.seed)
            .field("problem", &self.problem.name())
            .field("malformed_rate", &self.malformed_rate)
            .finish()
    }
}

impl MockBackend {
    pub fn new(seed: u64, problem: Arc<dyn Problem>) -> Self {
        Self {
            seed,
            problem,
            malformed_rate: 0.0,
            reject_auth: false,
        }
    }

    /// Drop the closing tag of the last candidate in this fraction of replies.
    pub fn with_malformed_rate(mut self, rate: f64) -> Self {
        self.malformed_rate = rate.clamp(0.0, 1.0);
        self
    }

    /// Fail every call with an authentication error.
    pub fn rejecting_auth(mut self) -> Self {
        self.reject_auth = true;
        self
    }

    fn request_seed(&self, request: &BackendRequest) -> u64 {
        let hash = request.prompt_hash();
        let prefix = u64::from_str_radix(&hash[..16], 16).unwrap_or_default();
        self.seed ^ prefix
    }

    fn variation(&self, parents: &[String], k: usize, seed: u64) -> String {
        let mut rng = stream_rng(seed, Stream::MockBackend);
        let decoded: Vec<_> = parents
            .iter()
            .filter_map(|p| self.problem.decode(p).ok())
            .collect();
        let refs: Vec<_> = decoded.iter().collect();
        let mut reply = String::from("Here are the proposed candidates.\n");
        for i in 0..k {
            let child = self.problem.vary(&refs, &mut rng);
            let _ = write!(reply, "\n{OPEN_TAG}\n{child}\n");
            let truncate = i + 1 == k && rng.random::<f64>() < self.malformed_rate;
            if !truncate {
                let _ = writeln!(reply, "{CLOSE_TAG}");
            }
        }
        reply
    }

    fn summary(good: &[u64], bad: &[u64], prior_version: u32) -> String {
        let list = |ids: &[u64]| {
            ids.iter()
                .map(|i| format!("#{i}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "Revision {}. Keep the structure shared by the strongest candidates ({}). \
             Avoid the patterns seen in the weakest ones ({}).",
            prior_version + 1,
            list(good),
            list(bad)
        )
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendReply, BackendError> {
        if self.reject_auth {
            return Err(BackendError::Auth(
                "mock backend configured to reject".into(),
            ));
        }
        let raw_text = match (&request.role, &request.context) {
            (CallRole::Optimizer, RequestContext::Variation { parents, k }) => {
                self.variation(parents, *k, self.request_seed(request))
            }
            (
                CallRole::Summarizer,
                RequestContext::Summary {
                    good,
                    bad,
                    prior_version,
                },
            ) => Self::summary(good, bad, *prior_version),
            _ => {
                return Err(BackendError::Rejected(
                    "request context does not match its role".into(),
                ))
            }
        };
        let usage = Usage {
            input_tokens: ((request.system.len() + request.prompt.len()) / 4) as u64,
            output_tokens: (raw_text.len() / 4) as u64,
        };
        Ok(BackendReply {
            raw_text,
            usage: Some(usage),
            latency_ms: 0,
            attempts: 1,
        })
    }
}
