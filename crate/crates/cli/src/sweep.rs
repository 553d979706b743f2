use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::parse_config;
use crate::run_dir::{execute_run, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    KOffspring,
    PExp,
    Selector,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::KOffspring => "k_offspring",
            SweepAxis::PExp => "p_exp",
            SweepAxis::Selector => "selector",
        }
    }

    /// TOML literal for one sweep value.
    fn literal(self, value: &str) -> String {
        match self {
            SweepAxis::Selector => format!("\"{value}\""),
            _ => value.to_string(),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k_offspring" => Ok(SweepAxis::KOffspring),
            "p_exp" => Ok(SweepAxis::PExp),
            "selector" => Ok(SweepAxis::Selector),
            other => Err(format!(
                "unknown sweep axis `{other}`; expected k_offspring, p_exp or selector"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    /// Runs per value; repeat `r` uses seed `base + r` for every value.
    pub repeats: usize,
    pub parallel: bool,
}

/// Columns aggregated per sweep value.
pub const SWEEP_METRICS: [&str; 9] = [
    "top1_f",
    "top10_f",
    "auc_top10",
    "hypervolume",
    "uniqueness",
    "validity",
    "diversity",
    "backend_calls",
    "oracle_calls",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub completed: usize,
    pub failed: usize,
    /// `(mean, std)` per entry of [`SWEEP_METRICS`]; absent when no run finished
    /// or the metric was undefined in every run.
    pub stats: Vec<Option<(f64, f64)>>,
}

impl SweepRow {
    pub fn stat(&self, metric: &str) -> Option<(f64, f64)> {
        let i = SWEEP_METRICS.iter().position(|m| *m == metric)?;
        self.stats[i]
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub dir: PathBuf,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub markdown: String,
}

/// Mean and sample standard deviation; std is 0 for a single value.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn metric_values(m: &RunManifest) -> [Option<f64>; 9] {
    let f = m.final_metrics.as_ref();
    [
        f.and_then(|s| s.top1_f),
        f.and_then(|s| s.top10_f),
        f.map(|s| s.auc_top10),
        f.map(|s| s.hypervolume),
        f.and_then(|s| s.uniqueness),
        f.and_then(|s| s.validity),
        f.and_then(|s| s.diversity),
        Some(m.cost.backend_calls as f64),
        Some(m.cost.oracle_calls as f64),
    ]
}

fn slug(value: &str) -> String {
    value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Run every `(value, repeat)` cell and write `summary.csv` and `summary.md`.
///
/// All configs are validated before the first run starts. A failing sub-run
/// is counted in its row and the sweep carries on.
pub fn run_sweep(
    base_text: &str,
    base_overrides: &[String],
    spec: &SweepSpec,
    out_dir: &Path,
) -> Result<SweepSummary, CliError> {
    if spec.values.is_empty() {
        return Err(CliError::Validation(
            "sweep needs at least one value".into(),
        ));
    }
    if spec.repeats == 0 {
        return Err(CliError::Validation("repeats must be at least 1".into()));
    }
    let base = parse_config(base_text, base_overrides)?;
    let base_seed = base.config.engine.seed;

    let mut jobs = Vec::new();
    for (vi, value) in spec.values.iter().enumerate() {
        for rep in 0..spec.repeats {
            let mut overrides = base_overrides.to_vec();
            overrides.push(format!(
                "engine.{}={}",
                spec.axis.key(),
                spec.axis.literal(value)
            ));
            overrides.push(format!("engine.seed={}", base_seed + rep as u64));
            let loaded = parse_config(base_text, &overrides).map_err(|e| match e {
                CliError::Validation(m) => {
                    CliError::Validation(format!("{}={value}: {m}", spec.axis.key()))
                }
                other => other,
            })?;
            let dir = out_dir
                .join(format!("{}-{}", spec.axis.key(), slug(value)))
                .join(format!("rep-{rep}"));
            jobs.push((vi, loaded, dir));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;

    let results: Vec<Mutex<Option<Result<RunManifest, String>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let run_one = |i: usize| {
        let (_, loaded, dir) = &jobs[i];
        let r = execute_run(loaded, dir, false)
            .map(|o| o.manifest)
            .map_err(|e| e.to_string());
        if let Err(e) = &r {
            log::warn!("sub-run {} failed: {e}", dir.display());
        }
        *results[i].lock().expect("result slot") = Some(r);
    };
    if spec.parallel {
        let threads = std::thread::available_parallelism().map_or(2, |n| n.get());
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..threads.min(jobs.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= jobs.len() {
                        break;
                    }
                    run_one(i);
                });
            }
        });
    } else {
        (0..jobs.len()).for_each(run_one);
    }

    let mut rows = Vec::new();
    for (vi, value) in spec.values.iter().enumerate() {
        let mut completed = 0;
        let mut failed = 0;
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); SWEEP_METRICS.len()];
        for (i, (job_value, _, _)) in jobs.iter().enumerate() {
            if *job_value != vi {
                continue;
            }
            match results[i].lock().expect("result slot").as_ref() {
                Some(Ok(m)) => {
                    completed += 1;
                    for (col, v) in columns.iter_mut().zip(metric_values(m)) {
                        col.extend(v);
                    }
                }
                _ => failed += 1,
            }
        }
        rows.push(SweepRow {
            value: value.clone(),
            completed,
            failed,
            stats: columns.iter().map(|c| mean_std(c)).collect(),
        });
    }

    let csv_path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut header = vec![
        spec.axis.key().to_string(),
        "completed".into(),
        "failed".into(),
    ];
    for m in SWEEP_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in &rows {
        let mut rec = vec![
            r.value.clone(),
            r.completed.to_string(),
            r.failed.to_string(),
        ];
        for s in &r.stats {
            match s {
                Some((mean, std)) => {
                    rec.push(mean.to_string());
                    rec.push(std.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(csv_path.display(), e))?;

    let markdown = summary_markdown(spec, &rows);
    fs::write(out_dir.join("summary.md"), &markdown).map_err(|e| CliError::io("summary.md", e))?;
    Ok(SweepSummary {
        dir: out_dir.to_path_buf(),
        axis: spec.axis,
        rows,
        markdown,
    })
}

fn summary_markdown(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "# Sweep over {} ({} repeat{})\n\n| {} | runs |",
        spec.axis.key(),
        spec.repeats,
        if spec.repeats == 1 { "" } else { "s" },
        spec.axis.key()
    );
    for m in SWEEP_METRICS {
        let _ = write!(out, " {m} |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(SWEEP_METRICS.len()));
    out.push('\n');
    for r in rows {
        let runs = if r.failed > 0 {
            format!("{} ok, {} failed", r.completed, r.failed)
        } else {
            r.completed.to_string()
        };
        let _ = write!(out, "| {} | {runs} |", r.value);
        for (m, s) in SWEEP_METRICS.iter().zip(&r.stats) {
            let text = match s {
                None if r.completed == 0 => "failed".to_string(),
                None => "-".to_string(),
                Some((mean, std)) if m.ends_with("calls") => format!("{mean:.1} ± {std:.1}"),
                Some((mean, std)) => format!("{mean:.4} ± {std:.4}"),
            };
            let _ = write!(out, " {text} |");
        }
        out.push('\n');
    }
    out
}
