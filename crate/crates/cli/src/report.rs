use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use llmopt_core::engine::Event;
use llmopt_core::metrics::MetricSnapshot;
use plotters::prelude::*;

use crate::run_dir::{
    read_manifest, RunManifest, RunStatus, EVENTS_FILE, FAILED_MARKER, METRICS_FILE,
};
use crate::CliError;

pub const F_CURVE: &str = "f_vs_calls.svg";
pub const TOP10_CURVE: &str = "top10_vs_calls.svg";
pub const HV_CURVE: &str = "hypervolume_vs_generation.svg";
pub const REPORT_FILE: &str = "report.md";

/// Everything the report needs from one run directory.
#[derive(Debug, Clone)]
pub struct RunData {
    pub dir: PathBuf,
    pub label: String,
    pub metrics: Vec<MetricSnapshot>,
    /// Best fitness so far after each oracle call.
    pub best_by_call: Vec<f64>,
    pub partial: bool,
    pub warnings: Vec<String>,
    pub manifest: Option<RunManifest>,
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub out_dir: PathBuf,
    pub table: String,
    pub images: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub partial: bool,
}

fn read_events(path: &Path) -> Result<Vec<Event>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut events = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(line)
            .map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), n + 1)))?;
        events.push(event);
    }
    Ok(events)
}

fn read_metrics(path: &Path) -> Result<Vec<MetricSnapshot>, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    reader
        .deserialize()
        .collect::<Result<Vec<MetricSnapshot>, _>>()
        .map_err(|e| e.to_string())
}

pub fn load_run(dir: &Path) -> Result<RunData, CliError> {
    let events_path = dir.join(EVENTS_FILE);
    if !events_path.exists() {
        return Err(CliError::Validation(format!(
            "{} is not a run directory: {EVENTS_FILE} is missing",
            dir.display()
        )));
    }
    let events = read_events(&events_path)?;
    let mut warnings = Vec::new();

    let metrics_path = dir.join(METRICS_FILE);
    let from_events = || {
        events
            .iter()
            .filter_map(|e| match e {
                Event::GenerationFinished { metrics, .. } => Some(metrics.clone()),
                _ => None,
            })
            .collect::<Vec<_>>()
    };
    let metrics = if metrics_path.exists() {
        match read_metrics(&metrics_path) {
            Ok(m) => m,
            Err(e) => {
                warnings.push(format!(
                    "{METRICS_FILE} unreadable ({e}); using {EVENTS_FILE} only"
                ));
                from_events()
            }
        }
    } else {
        warnings.push(format!(
            "{METRICS_FILE} missing; report covers {EVENTS_FILE} only"
        ));
        from_events()
    };

    let mut best_by_call = Vec::new();
    let mut best = 0.0f64;
    for e in &events {
        if let Event::CandidateEvaluated { fitness, .. } = e {
            best = best.max(fitness.unwrap_or(0.0));
            best_by_call.push(best);
        }
    }

    let manifest = read_manifest(dir);
    let finished = events
        .iter()
        .any(|e| matches!(e, Event::RunFinished { .. }));
    let partial = !finished
        || dir.join(FAILED_MARKER).exists()
        || manifest
            .as_ref()
            .is_none_or(|m| m.status == RunStatus::Failed);
    if partial {
        warnings.push("run is partial: it did not finish cleanly".into());
    }
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(RunData {
        dir: dir.to_path_buf(),
        label,
        metrics,
        best_by_call,
        partial,
        warnings,
        manifest,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// Markdown table of each run's last metric row.
pub fn metrics_table(runs: &[RunData]) -> String {
    let mut out = String::from(
        "| run | status | generations | consumed | top1_f | top10_f | auc_top10 | hypervolume | uniqueness | validity | diversity |\n\
         |---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in runs {
        let status = if r.partial { "partial" } else { "complete" };
        match r.metrics.last() {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "| {} | {status} | {} | {} | {} | {} | {:.4} | {:.4} | {} | {} | {} |",
                    r.label,
                    m.generation,
                    m.consumed,
                    cell(m.top1_f),
                    cell(m.top10_f),
                    m.auc_top10,
                    m.hypervolume,
                    cell(m.uniqueness),
                    cell(m.validity),
                    cell(m.diversity),
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "| {} | {status} | 0 | 0 | - | - | - | - | - | - | - |",
                    r.label
                );
            }
        }
    }
    out
}

struct Curve {
    label: String,
    points: Vec<(f64, f64)>,
}

fn plot(
    path: &Path,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    curves: &[Curve],
) -> Result<(), String> {
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for &(x, y) in &c.points {
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-9 {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);

    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(42)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
        .map_err(|e| e.to_string())?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(|e| e.to_string())?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(
                c.points.iter().copied(),
                color.stroke_width(2),
            ))
            .map_err(|e| e.to_string())?
            .label(c.label.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
    }
    if curves.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::LowerRight)
            .draw()
            .map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}

/// Render the table and the three curves for one or more runs into `out_dir`.
///
/// Several runs are overlaid on shared axes.
pub fn render_report(dirs: &[PathBuf], out_dir: &Path) -> Result<ReportSummary, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Validation("no run directories given".into()));
    }
    let runs = dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;

    let f_curves: Vec<Curve> = runs
        .iter()
        .map(|r| Curve {
            label: r.label.clone(),
            points: r
                .best_by_call
                .iter()
                .enumerate()
                .map(|(i, &f)| ((i + 1) as f64, f))
                .collect(),
        })
        .collect();
    let top10_curves: Vec<Curve> = runs
        .iter()
        .map(|r| Curve {
            label: r.label.clone(),
            points: r
                .metrics
                .iter()
                .filter_map(|m| Some((m.consumed as f64, m.top10_f?)))
                .collect(),
        })
        .collect();
    let hv_curves: Vec<Curve> = runs
        .iter()
        .map(|r| Curve {
            label: r.label.clone(),
            points: r
                .metrics
                .iter()
                .map(|m| (m.generation as f64, m.hypervolume))
                .collect(),
        })
        .collect();

    let images = [
        (
            F_CURVE,
            "Best fitness vs oracle calls",
            "oracle calls",
            "best F",
            &f_curves,
        ),
        (
            TOP10_CURVE,
            "Top-10 mean fitness vs oracle calls",
            "oracle calls",
            "top-10 mean F",
            &top10_curves,
        ),
        (
            HV_CURVE,
            "Population hypervolume vs generation",
            "generation",
            "hypervolume",
            &hv_curves,
        ),
    ]
    .into_iter()
    .map(|(file, title, xd, yd, curves)| {
        let path = out_dir.join(file);
        plot(&path, title, xd, yd, curves)
            .map_err(|e| CliError::Runtime(format!("plotting {file}: {e}")))?;
        Ok(path)
    })
    .collect::<Result<Vec<_>, CliError>>()?;

    let table = metrics_table(&runs);
    let partial = runs.iter().any(|r| r.partial);
    let warnings: Vec<String> = runs
        .iter()
        .flat_map(|r| r.warnings.iter().map(move |w| format!("{}: {w}", r.label)))
        .collect();

    let mut doc = String::from("# Run report\n\n");
    if partial {
        doc.push_str("**Partial:** at least one run did not finish cleanly.\n\n");
    }
    doc.push_str(&table);
    doc.push('\n');
    for r in &runs {
        if let Some(m) = &r.manifest {
            let _ = writeln!(
                doc,
                "- {}: {} on {}, {} backend calls ({} optimizer, {} summarizer), {} input / {} output tokens, ~${:.4}",
                r.label,
                m.problem,
                m.backend,
                m.cost.backend_calls,
                m.cost.optimizer_calls,
                m.cost.summarizer_calls,
                m.cost.input_tokens,
                m.cost.output_tokens,
                m.cost.estimated_usd,
            );
        }
    }
    if !warnings.is_empty() {
        doc.push_str("\n## Warnings\n\n");
        for w in &warnings {
            let _ = writeln!(doc, "- {w}");
        }
    }
    doc.push_str(&format!(
        "\n![best F]({F_CURVE})\n![top-10]({TOP10_CURVE})\n![hypervolume]({HV_CURVE})\n"
    ));
    fs::write(out_dir.join(REPORT_FILE), doc).map_err(|e| CliError::io(REPORT_FILE, e))?;

    Ok(ReportSummary {
        out_dir: out_dir.to_path_buf(),
        table,
        images,
        warnings,
        partial,
    })
}
