//! Black-box checks an evaluation worker must pass before a run uses it.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ExternalWorker, WorkerConfig, WorkerResult};

const UNDECODABLE: &str = "\u{1}<<not a candidate>>\u{1}";
const LARGE_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub checks: Vec<ConformanceCheck>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &ConformanceCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{mark} {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

struct Recorder(Vec<ConformanceCheck>);

impl Recorder {
    fn record(&mut self, name: &str, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.0.push(ConformanceCheck {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Start a worker and exercise the protocol edge cases against it.
///
/// `probes` should be decodable candidates for the worker's domain.
pub fn run_conformance(config: &WorkerConfig, probes: &[String]) -> ConformanceReport {
    let mut rec = Recorder(Vec::new());
    let timeout = Duration::from_secs_f64(config.request_timeout_secs);
    let mut worker = match ExternalWorker::spawn(config) {
        Ok(w) => {
            rec.record(
                "handshake",
                Ok(format!(
                    "protocol {}, {} objectives, {} constraints",
                    w.handshake().protocol,
                    w.handshake().objectives.len(),
                    w.handshake().constraints.len()
                )),
            );
            w
        }
        Err(e) => {
            rec.record("handshake", Err(e.to_string()));
            return ConformanceReport { checks: rec.0 };
        }
    };

    let empty = worker.request(&[], timeout);
    rec.record(
        "empty batch",
        match empty {
            Ok(r) if r.is_empty() => Ok("empty response".into()),
            Ok(r) => Err(format!("{} results for no candidates", r.len())),
            Err(e) => Err(e.to_string()),
        },
    );

    let first = worker.request(probes, timeout);
    rec.record(
        "batch alignment",
        match &first {
            Ok(_) => Ok(format!("{} results, id matched", probes.len())),
            Err(e) => Err(e.to_string()),
        },
    );

    let names: Vec<String> = worker
        .handshake()
        .objectives
        .iter()
        .map(|o| o.name.clone())
        .collect();
    rec.record(
        "finite objectives",
        match &first {
            Ok(results) => check_finite(results, &names),
            Err(_) => Err("no results to inspect".into()),
        },
    );

    if let Some(probe) = probes.first() {
        let dup = worker.request(&[probe.clone(), probe.clone()], timeout);
        rec.record(
            "duplicates",
            match dup {
                Ok(r) if r[0] == r[1] => Ok("identical results".into()),
                Ok(_) => Err("same candidate scored differently within one batch".into()),
                Err(e) => Err(e.to_string()),
            },
        );
    }

    let bad = worker.request(&[UNDECODABLE.to_string()], timeout);
    rec.record(
        "undecodable candidate",
        match bad {
            Ok(r) if !r[0].valid => Ok("reported invalid".into()),
            Ok(_) => Err("garbage input reported valid".into()),
            Err(e) => Err(e.to_string()),
        },
    );

    if !probes.is_empty() {
        let large: Vec<String> = probes.iter().cycle().take(LARGE_BATCH).cloned().collect();
        rec.record(
            "large batch",
            match worker.request(&large, timeout) {
                Ok(_) => Ok(format!("{LARGE_BATCH} results")),
                Err(e) => Err(e.to_string()),
            },
        );
    }

    let second = worker.request(probes, timeout);
    rec.record(
        "determinism",
        match (&first, &second) {
            (Ok(a), Ok(b)) if a == b => Ok("repeat batch matched".into()),
            (Ok(_), Ok(_)) => Err("repeat batch gave different results".into()),
            (_, Err(e)) => Err(e.to_string()),
            (Err(_), _) => Err("first batch failed".into()),
        },
    );

    worker.shutdown();
    ConformanceReport { checks: rec.0 }
}

fn check_finite(results: &[WorkerResult], names: &[String]) -> Result<String, String> {
    for (i, r) in results.iter().enumerate().filter(|(_, r)| r.valid) {
        for name in names {
            match r.objectives.get(name) {
                Some(Some(v)) if v.is_finite() => {}
                Some(_) => return Err(format!("non-finite objective `{name}` for candidate {i}")),
                None => return Err(format!("missing objective `{name}` for candidate {i}")),
            }
        }
    }
    Ok("all declared objectives finite".into())
}
