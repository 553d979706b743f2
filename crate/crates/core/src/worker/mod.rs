//! Out-of-process evaluation workers speaking the line protocol.

mod conformance;
mod protocol;

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::RawEvaluation;

pub use conformance::{run_conformance, ConformanceCheck, ConformanceReport};
pub use protocol::{sanitize_line, Handshake, Request, Response, WorkerResult, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkerError {
    #[error("could not start worker: {0}")]
    Spawn(String),
    #[error("bad handshake: {0}")]
    Handshake(String),
    #[error("worker speaks protocol {found}, expected {PROTOCOL_VERSION}")]
    ProtocolVersion { found: u32 },
    #[error("malformed worker response: {0}")]
    Malformed(String),
    #[error("response id {got} does not match request id {expected}; worker quarantined")]
    UnknownId { expected: u64, got: u64 },
    #[error("worker returned {got} results for {expected} candidates")]
    CountMismatch { expected: usize, got: usize },
    #[error("worker timed out")]
    Timeout,
    #[error("worker exited: {0}")]
    Crashed(String),
    #[error("worker failed {0} times; giving up")]
    RestartLimit(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    pub workers: usize,
    pub batch_size: usize,
    pub request_timeout_secs: f64,
    pub handshake_timeout_secs: f64,
    pub restart_limit: u32,
    pub shutdown_grace_secs: f64,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            command: Vec::new(),
            workers: 1,
            batch_size: 64,
            request_timeout_secs: 300.0,
            handshake_timeout_secs: 60.0,
            restart_limit: 3,
            shutdown_grace_secs: 5.0,
        }
    }
}

/// One running worker process.
pub struct ExternalWorker {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    handshake: Handshake,
    next_id: u64,
    quarantined: bool,
    grace: Duration,
}

impl std::fmt::Debug for ExternalWorker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalWorker")
            .field("pid", &self.child.id())
            .field("next_id", &self.next_id)
            .field("quarantined", &self.quarantined)
            .finish()
    }
}

impl ExternalWorker {
    /// Start the process and read its handshake.
    pub fn spawn(config: &WorkerConfig) -> Result<Self, WorkerError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| WorkerError::Spawn("empty worker command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| WorkerError::Spawn(format!("{program}: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut worker = Self {
            child,
            stdin,
            lines: rx,
            handshake: Handshake {
                protocol: 0,
                objectives: Vec::new(),
                constraints: Vec::new(),
            },
            next_id: 1,
            quarantined: false,
            grace: Duration::from_secs_f64(config.shutdown_grace_secs.max(0.0)),
        };
        let line = worker
            .read_line(Duration::from_secs_f64(config.handshake_timeout_secs))
            .map_err(|e| match e {
                WorkerError::Timeout => {
                    WorkerError::Handshake("no handshake before timeout".into())
                }
                other => other,
            })?;
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| WorkerError::Handshake(format!("{e}: {line}")))?;
        if hs.protocol != PROTOCOL_VERSION {
            worker.shutdown();
            return Err(WorkerError::ProtocolVersion { found: hs.protocol });
        }
        if hs.objectives.is_empty() {
            worker.shutdown();
            return Err(WorkerError::Handshake("no objectives declared".into()));
        }
        worker.handshake = hs;
        Ok(worker)
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn is_quarantined(&self) -> bool {
        self.quarantined
    }

    fn read_line(&mut self, timeout: Duration) -> Result<String, WorkerError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => return Err(WorkerError::Crashed(e.to_string())),
                Err(RecvTimeoutError::Timeout) => return Err(WorkerError::Timeout),
                Err(RecvTimeoutError::Disconnected) => {
                    let status = self
                        .child
                        .try_wait()
                        .ok()
                        .flatten()
                        .map_or_else(|| "stdout closed".to_string(), |s| s.to_string());
                    return Err(WorkerError::Crashed(status));
                }
            }
        }
    }

    /// Send one batch and wait for its response.
    pub fn request(
        &mut self,
        candidates: &[String],
        timeout: Duration,
    ) -> Result<Vec<WorkerResult>, WorkerError> {
        if self.quarantined {
            return Err(WorkerError::Crashed("worker is quarantined".into()));
        }
        let id = self.next_id;
        self.next_id += 1;
        let line = serde_json::to_string(&Request {
            id,
            candidates: candidates.to_vec(),
        })
        .map_err(|e| WorkerError::Malformed(e.to_string()))?;
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| WorkerError::Crashed("stdin closed".into()))?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| WorkerError::Crashed(e.to_string()))?;
        let reply = self.read_line(timeout)?;
        let resp: Response = serde_json::from_str(&sanitize_line(&reply))
            .map_err(|e| WorkerError::Malformed(format!("{e}: {}", truncate(&reply))))?;
        if resp.id != id {
            self.quarantined = true;
            return Err(WorkerError::UnknownId {
                expected: id,
                got: resp.id,
            });
        }
        if resp.results.len() != candidates.len() {
            return Err(WorkerError::CountMismatch {
                expected: candidates.len(),
                got: resp.results.len(),
            });
        }
        Ok(resp.results)
    }

    /// Close stdin, ask politely, then kill after the grace period.
    pub fn shutdown(mut self) {
        self.terminate();
    }

    fn terminate(&mut self) {
        self.stdin.take();
        if matches!(self.child.try_wait(), Ok(Some(_))) {
            return;
        }
        #[cfg(unix)]
        if let Ok(pid) = libc::pid_t::try_from(self.child.id()) {
            // SAFETY: plain signal delivery to our own child process.
            unsafe {
                libc::kill(pid, libc::SIGTERM);
            }
        }
        let deadline = Instant::now() + self.grace;
        while Instant::now() < deadline {
            if matches!(self.child.try_wait(), Ok(Some(_))) {
                return;
            }
            thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ExternalWorker {
    fn drop(&mut self) {
        self.terminate();
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// A fixed-size set of workers with restart bookkeeping.
pub struct WorkerPool {
    config: WorkerConfig,
    handshake: Handshake,
    slots: Vec<Mutex<Option<ExternalWorker>>>,
    failures: Mutex<u32>,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool")
            .field("workers", &self.slots.len())
            .field("handshake", &self.handshake)
            .finish()
    }
}

impl WorkerPool {
    /// Spawn every worker; all must agree on the handshake.
    pub fn start(config: WorkerConfig) -> Result<Self, WorkerError> {
        let count = config.workers.max(1);
        let mut workers = Vec::with_capacity(count);
        for _ in 0..count {
            workers.push(ExternalWorker::spawn(&config)?);
        }
        let handshake = workers[0].handshake().clone();
        if workers.iter().any(|w| w.handshake() != &handshake) {
            return Err(WorkerError::Handshake(
                "workers disagree on their handshake".into(),
            ));
        }
        Ok(Self {
            config,
            handshake,
            slots: workers.into_iter().map(|w| Mutex::new(Some(w))).collect(),
            failures: Mutex::new(0),
        })
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn failures(&self) -> u32 {
        *self.failures.lock().expect("failure counter")
    }

    /// Evaluate candidates, spreading batches across workers.
    ///
    /// A failed batch yields invalid results for its candidates and a fresh
    /// worker. The error is returned only once the restart limit is exceeded.
    pub fn evaluate(&self, candidates: &[String]) -> Result<Vec<RawEvaluation>, WorkerError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let batch = self.config.batch_size.max(1);
        let chunks: Vec<&[String]> = candidates.chunks(batch).collect();
        let mut out: Vec<Option<Vec<RawEvaluation>>> = vec![None; chunks.len()];
        let fatal: Mutex<Option<WorkerError>> = Mutex::new(None);
        thread::scope(|scope| {
            let mut handles = Vec::new();
            for (slot_index, slot) in self.slots.iter().enumerate() {
                let mine: Vec<(usize, &[String])> = chunks
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % self.slots.len() == slot_index)
                    .map(|(i, c)| (i, *c))
                    .collect();
                let fatal = &fatal;
                handles.push(scope.spawn(move || {
                    let mut results = Vec::new();
                    for (i, chunk) in mine {
                        match self.run_chunk(slot, chunk) {
                            Ok(r) => results.push((i, r)),
                            Err(e) => {
                                fatal.lock().expect("fatal slot").get_or_insert(e);
                                break;
                            }
                        }
                    }
                    results
                }));
            }
            for h in handles {
                for (i, r) in h.join().expect("worker thread panicked") {
                    out[i] = Some(r);
                }
            }
        });
        if let Some(e) = fatal.into_inner().expect("fatal slot") {
            return Err(e);
        }
        Ok(out
            .into_iter()
            .flat_map(|r| r.unwrap_or_default())
            .collect())
    }

    fn run_chunk(
        &self,
        slot: &Mutex<Option<ExternalWorker>>,
        chunk: &[String],
    ) -> Result<Vec<RawEvaluation>, WorkerError> {
        let timeout = Duration::from_secs_f64(self.config.request_timeout_secs);
        let mut guard = slot.lock().expect("worker slot");
        if guard.is_none() {
            *guard = Some(self.respawn()?);
        }
        let worker = guard.as_mut().expect("worker present");
        match worker.request(chunk, timeout) {
            Ok(results) => Ok(results.iter().map(|r| r.to_raw(&self.handshake)).collect()),
            Err(e) => {
                log::warn!("evaluation worker failed: {e}");
                if let Some(w) = guard.take() {
                    w.shutdown();
                }
                self.note_failure()?;
                *guard = Some(self.respawn()?);
                let reason = format!("evaluator failure: {e}");
                Ok(chunk
                    .iter()
                    .map(|_| RawEvaluation::invalid(reason.clone()))
                    .collect())
            }
        }
    }

    fn note_failure(&self) -> Result<(), WorkerError> {
        let mut failures = self.failures.lock().expect("failure counter");
        *failures += 1;
        if *failures > self.config.restart_limit {
            Err(WorkerError::RestartLimit(*failures))
        } else {
            Ok(())
        }
    }

    fn respawn(&self) -> Result<ExternalWorker, WorkerError> {
        let worker = ExternalWorker::spawn(&self.config)?;
        if worker.handshake() != &self.handshake {
            return Err(WorkerError::Handshake(
                "restarted worker changed its handshake".into(),
            ));
        }
        Ok(worker)
    }

    pub fn shutdown(self) {
        for slot in self.slots {
            if let Some(w) = slot.into_inner().ok().flatten() {
                w.shutdown();
            }
        }
    }
}
