use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use llmopt_core::engine::{
    initialize_run, Candidate, Event, EventSink, JsonlSink, RunState, StopReason,
};
use llmopt_core::metrics::MetricSnapshot;
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::CliError;

pub const SNAPSHOT_FILE: &str = "config.snapshot.toml";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const POPULATION_FILE: &str = "population.final.json";
pub const EXPERIENCE_FILE: &str = "experience.history.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Present only when the run ended with an error; holds the message.
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub optimizer_calls: u64,
    pub summarizer_calls: u64,
    pub backend_calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub estimated_usd: f64,
    pub oracle_calls: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCandidate {
    pub id: u64,
    pub fitness: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub status: RunStatus,
    pub problem: String,
    pub backend: String,
    pub started_at: String,
    pub finished_at: String,
    pub config_snapshot: String,
    pub overrides: Vec<String>,
    pub stop_reason: Option<StopReason>,
    pub error: Option<String>,
    pub generations: u32,
    pub final_metrics: Option<MetricSnapshot>,
    pub cost: CostSummary,
    pub best: Option<BestCandidate>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Streams events to `events.jsonl`, generation rows to `metrics.csv`, and
/// optionally a one-line progress summary to stdout.
struct RunSink {
    events: JsonlSink<BufWriter<File>>,
    metrics: BufWriter<File>,
    metrics_error: Option<std::io::Error>,
    budget: u64,
    progress: bool,
    memo_version: u32,
}

impl RunSink {
    fn create(dir: &Path, budget: u64, progress: bool) -> Result<Self, CliError> {
        let events =
            File::create(dir.join(EVENTS_FILE)).map_err(|e| CliError::io(EVENTS_FILE, e))?;
        let metrics =
            File::create(dir.join(METRICS_FILE)).map_err(|e| CliError::io(METRICS_FILE, e))?;
        let mut metrics = BufWriter::new(metrics);
        writeln!(metrics, "{}", MetricSnapshot::CSV_HEADER)
            .map_err(|e| CliError::io(METRICS_FILE, e))?;
        Ok(Self {
            events: JsonlSink::new(BufWriter::new(events)),
            metrics,
            metrics_error: None,
            budget,
            progress,
            memo_version: 0,
        })
    }

    fn finish(mut self) -> Result<(), CliError> {
        if let Some(e) = self.events.take_error() {
            return Err(CliError::io(EVENTS_FILE, e));
        }
        if let Some(e) = self.metrics_error.take() {
            return Err(CliError::io(METRICS_FILE, e));
        }
        self.metrics
            .flush()
            .map_err(|e| CliError::io(METRICS_FILE, e))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

impl EventSink for RunSink {
    fn emit(&mut self, event: &Event) {
        self.events.emit(event);
        match event {
            Event::ExperienceUpdated { version, .. } => self.memo_version = *version,
            Event::GenerationFinished {
                generation,
                evaluated,
                metrics,
                ..
            } => {
                if self.metrics_error.is_none() {
                    if let Err(e) = writeln!(self.metrics, "{}", metrics.csv_row())
                        .and_then(|_| self.metrics.flush())
                    {
                        self.metrics_error = Some(e);
                    }
                }
                if self.progress {
                    println!(
                        "gen {generation:>4} | calls {:>6}/{} | new {evaluated:>3} | top1 {} | top10 {} | hv {:.4} | memo v{}",
                        metrics.consumed,
                        self.budget,
                        fmt_opt(metrics.top1_f),
                        fmt_opt(metrics.top10_f),
                        metrics.hypervolume,
                        self.memo_version,
                    );
                }
            }
            Event::RunFailed { error } if self.progress => eprintln!("run failed: {error}"),
            _ => {}
        }
    }
}

/// Write `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn write_outputs(dir: &Path, state: &RunState) -> Result<(), CliError> {
    let members: Vec<&Candidate> = state.members();
    let population = serde_json::to_vec_pretty(&members).expect("candidates serialize");
    fs::write(dir.join(POPULATION_FILE), population)
        .map_err(|e| CliError::io(POPULATION_FILE, e))?;
    let mut history = String::new();
    for rec in state.experience_log() {
        history.push_str(&serde_json::to_string(rec).expect("records serialize"));
        history.push('\n');
    }
    fs::write(dir.join(EXPERIENCE_FILE), history).map_err(|e| CliError::io(EXPERIENCE_FILE, e))
}

/// Execute one run into `dir`, which must be absent or empty.
///
/// Failures after the directory exists leave partial outputs, a `FAILED`
/// marker and a manifest with `status = failed`.
pub fn execute_run(
    loaded: &LoadedConfig,
    dir: &Path,
    progress: bool,
) -> Result<RunOutcome, CliError> {
    if dir.exists()
        && fs::read_dir(dir)
            .map(|mut d| d.next().is_some())
            .unwrap_or(true)
    {
        return Err(CliError::Validation(format!(
            "run directory {} already exists and is not empty",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let snapshot = loaded.snapshot();
    fs::write(dir.join(SNAPSHOT_FILE), &snapshot).map_err(|e| CliError::io(SNAPSHOT_FILE, e))?;

    let cfg = &loaded.config;
    let run_config = cfg.run_config();
    let started_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    let mut sink = RunSink::create(dir, run_config.budget, progress)?;

    let mut state: Option<RunState> = None;
    let result = (|| -> Result<StopReason, CliError> {
        let problem = cfg.build_problem()?;
        let backend = cfg.build_backend(&problem)?;
        let seeds = cfg.seed_candidates(problem.as_ref());
        let s = initialize_run(
            run_config.clone(),
            problem,
            &seeds,
            cfg.seeds.prior_memo.as_deref(),
            &mut sink,
        )
        .map_err(CliError::from_core)?;
        let s = state.insert(s);
        s.run(backend.as_ref(), &mut sink)
            .map_err(CliError::from_core)
    })();
    if let Err(e) = &result {
        // initialization errors never reach the engine's own failure event
        if state.is_none() {
            sink.emit(&Event::RunFailed {
                error: e.to_string(),
            });
        }
    }
    let sink_result = sink.finish();
    let result = result.and_then(|r| sink_result.map(|_| r));

    let mut manifest = RunManifest {
        run_id: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        status: RunStatus::Completed,
        problem: cfg.problem_name(),
        backend: cfg.backend_name(),
        started_at,
        finished_at: String::new(),
        config_snapshot: snapshot,
        overrides: loaded.overrides.clone(),
        stop_reason: result.as_ref().ok().copied(),
        error: result.as_ref().err().map(|e| e.to_string()),
        generations: 0,
        final_metrics: None,
        cost: CostSummary {
            budget: run_config.budget,
            ..Default::default()
        },
        best: None,
    };
    if let Some(s) = &state {
        write_outputs(dir, s)?;
        let summary = s.summary();
        manifest.generations = summary.generations;
        manifest.final_metrics = s.metrics().last().cloned();
        manifest.cost = CostSummary {
            optimizer_calls: summary.optimizer_calls,
            summarizer_calls: summary.summarizer_calls,
            backend_calls: summary.optimizer_calls + summary.summarizer_calls,
            input_tokens: summary.usage.input_tokens,
            output_tokens: summary.usage.output_tokens,
            estimated_usd: cfg
                .estimated_cost(summary.usage.input_tokens, summary.usage.output_tokens),
            oracle_calls: summary.consumed,
            budget: summary.budget,
        };
        manifest.best = s.best().map(|c| BestCandidate {
            id: c.id,
            fitness: c.f(),
            text: c.display_text().to_string(),
        });
    }
    if let Err(e) = &result {
        manifest.status = RunStatus::Failed;
        fs::write(dir.join(FAILED_MARKER), format!("{e}\n"))
            .map_err(|e| CliError::io(FAILED_MARKER, e))?;
    }
    manifest.finished_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), &json).map_err(|e| CliError::io(MANIFEST_FILE, e))?;

    result.map(|_| RunOutcome {
        dir: dir.to_path_buf(),
        manifest,
    })
}

pub fn read_manifest(dir: &Path) -> Option<RunManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}
