//! Aggregated results and their on-disk layout.
//!
//! `report.tsv` and `trials.tsv` depend only on the configuration and
//! seeds; wall-clock measurements go to `timing.tsv` and `summary.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gradraker::mkl::{write_trace_tsv, StepRecord};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{io_err, BenchResult};
use crate::experiment::{NewNodeRow, RegretRun};
use crate::metrics::{mean, median, std_dev};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub sample_count: usize,
    pub method: String,
    pub nmse: Option<f64>,
    pub conventional_nmse: Option<f64>,
    pub mu: Option<f64>,
    pub knn_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub trial: usize,
    pub sample_count: usize,
    pub method: String,
    pub phase: String,
    pub seconds: f64,
}

/// One method at one sample count, aggregated over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub sample_count: usize,
    pub trials: usize,
    /// Trials whose NMSE is defined.
    pub defined: usize,
    pub nmse_mean: Option<f64>,
    pub nmse_std: Option<f64>,
    pub conventional_nmse_mean: Option<f64>,
    pub conventional_nmse_std: Option<f64>,
    /// Most frequently selected regularization.
    pub mu_mode: Option<f64>,
    pub knn_fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub kind: String,
    pub config: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
    pub trials: Vec<TrialRow>,
    pub timings: Vec<TimingRow>,
    pub traces: Vec<(String, Vec<StepRecord>)>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn new(kind: &str, cfg: &ExperimentConfig) -> Self {
        RunReport {
            kind: kind.into(),
            config: cfg.echo(),
            rows: Vec::new(),
            trials: Vec::new(),
            timings: Vec::new(),
            traces: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn note_undefined(&mut self) {
        for r in &self.rows {
            if r.defined < r.trials {
                self.notes.push(format!(
                    "{} at {} samples: NMSE undefined in {} of {} trials (no evaluation nodes or an all-zero reference)",
                    r.method,
                    r.sample_count,
                    r.trials - r.defined,
                    r.trials
                ));
            }
        }
    }

    /// Median seconds per `(method, sample_count, phase)`.
    pub fn timing_summary(&self) -> Vec<(String, usize, String, f64)> {
        let mut groups: Vec<((String, usize, String), Vec<f64>)> = Vec::new();
        for t in &self.timings {
            let key = (t.method.clone(), t.sample_count, t.phase.clone());
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(t.seconds),
                None => groups.push((key, vec![t.seconds])),
            }
        }
        groups
            .into_iter()
            .map(|((m, s, p), v)| (m, s, p, median(&v).unwrap_or(0.0)))
            .collect()
    }
}

fn mode(values: &[f64]) -> Option<f64> {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        match counts.iter_mut().find(|(x, _)| *x == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    // Ties go to the value seen first.
    counts
        .iter()
        .fold(None, |best: Option<(f64, usize)>, &(v, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((v, c)),
        })
        .map(|(v, _)| v)
}

/// Group trial rows by `(sample_count, method)` in first-seen order.
pub fn aggregate(trials: &[TrialRow]) -> Vec<ReportRow> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for t in trials {
        let k = (t.sample_count, t.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(sample_count, method)| {
            let group: Vec<&TrialRow> = trials
                .iter()
                .filter(|t| t.sample_count == sample_count && t.method == method)
                .collect();
            let nmse: Vec<f64> = group.iter().filter_map(|t| t.nmse).collect();
            let conv: Vec<f64> = group.iter().filter_map(|t| t.conventional_nmse).collect();
            let mus: Vec<f64> = group.iter().filter_map(|t| t.mu).collect();
            ReportRow {
                method,
                sample_count,
                trials: group.len(),
                defined: nmse.len(),
                nmse_mean: mean(&nmse),
                nmse_std: std_dev(&nmse),
                conventional_nmse_mean: mean(&conv),
                conventional_nmse_std: std_dev(&conv),
                mu_mode: mode(&mus),
                knn_fallbacks: group.iter().map(|t| t.knn_fallbacks).sum(),
            }
        })
        .collect()
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6e}"))
}

fn config_header(kind: &str, config: &BTreeMap<String, String>) -> String {
    let mut s = format!("# gradraker {kind} report\n");
    for (k, v) in config {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

/// Aggregated table with the configuration echoed as `#` comments.
pub fn report_tsv(report: &RunReport) -> String {
    let mut s = config_header(&report.kind, &report.config);
    for n in &report.notes {
        let _ = writeln!(s, "# note: {n}");
    }
    s.push_str("method\tsample_count\ttrials\tdefined\tnmse_mean\tnmse_std\tconv_nmse_mean\tconv_nmse_std\tmu_mode\tknn_fallbacks\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.method,
            r.sample_count,
            r.trials,
            r.defined,
            fmt_opt(r.nmse_mean),
            fmt_opt(r.nmse_std),
            fmt_opt(r.conventional_nmse_mean),
            fmt_opt(r.conventional_nmse_std),
            fmt_opt(r.mu_mode),
            r.knn_fallbacks
        );
    }
    s
}

pub fn trials_tsv(report: &RunReport) -> String {
    let mut s = String::from("trial\tsample_count\tmethod\tnmse\tconv_nmse\tmu\tknn_fallbacks\n");
    for t in &report.trials {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            t.trial,
            t.sample_count,
            t.method,
            fmt_opt(t.nmse),
            fmt_opt(t.conventional_nmse),
            fmt_opt(t.mu),
            t.knn_fallbacks
        );
    }
    s
}

pub fn timing_tsv(report: &RunReport) -> String {
    let mut s = String::from("method\tsample_count\tphase\tmedian_seconds\n");
    for (m, n, p, secs) in report.timing_summary() {
        let _ = writeln!(s, "{m}\t{n}\t{p}\t{secs:.6e}");
    }
    s
}

pub fn summary_json(report: &RunReport) -> serde_json::Value {
    let timing: Vec<_> = report
        .timing_summary()
        .into_iter()
        .map(|(method, sample_count, phase, median_seconds)| {
            json!({"method": method, "sample_count": sample_count, "phase": phase, "median_seconds": median_seconds})
        })
        .collect();
    json!({
        "kind": report.kind,
        "config": report.config,
        "rows": report.rows,
        "notes": report.notes,
        "timing": timing,
    })
}

fn write(path: &Path, text: &str) -> BenchResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> BenchResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Write `report.tsv`, `trials.tsv`, `timing.tsv`, `summary.json` and one
/// trace per recorded Gradraker run under `traces/`.
pub fn write_run(report: &RunReport, dir: &Path) -> BenchResult<()> {
    ensure_dir(dir)?;
    write(&dir.join("report.tsv"), &report_tsv(report))?;
    write(&dir.join("trials.tsv"), &trials_tsv(report))?;
    write(&dir.join("timing.tsv"), &timing_tsv(report))?;
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary_json(report))?)?;
    if !report.traces.is_empty() {
        let traces = dir.join("traces");
        ensure_dir(&traces)?;
        for (name, records) in &report.traces {
            let mut buf = Vec::new();
            write_trace_tsv(records, &mut buf)?;
            write(&traces.join(format!("{name}.tsv")), &String::from_utf8_lossy(&buf))?;
        }
    }
    Ok(())
}

pub fn regret_tsv(run: &RegretRun) -> String {
    let mut s = config_header("regret", &run.config);
    let _ = writeln!(s, "# eta = {}", run.eta);
    let _ = writeln!(s, "# fit_from = {}", run.fit_from);
    let _ = writeln!(s, "# mean_growth_exponent = {}", fmt_opt(run.mean_growth_exponent));
    s.push_str("trial\tgrowth_exponent\tfinal_regret\tlipschitz\tbound_holds\tworst_bound_margin\n");
    for t in &run.trials {
        let holds = t.bounds.iter().all(|b| b.holds);
        let margin = t.bounds.iter().map(|b| b.bound - b.regret).fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            s,
            "{}\t{}\t{:.6e}\t{:.6e}\t{}\t{:.6e}",
            t.trial,
            fmt_opt(t.fitted_growth_exponent),
            t.final_regret,
            t.lipschitz,
            holds,
            margin
        );
    }
    s
}

/// Regret series of the first trial.
pub fn regret_series_tsv(run: &RegretRun) -> String {
    let mut s = String::from("t\tcumulative_online_loss\tbest_fixed_loss\tregret\n");
    if let Some(r) = &run.first_series {
        for (t, ((c, b), g)) in r
            .cumulative_online_loss
            .iter()
            .zip(&r.best_fixed_loss)
            .zip(&r.regret)
            .enumerate()
        {
            let _ = writeln!(s, "{}\t{c:.6e}\t{b:.6e}\t{g:.6e}", t + 1);
        }
    }
    s
}

pub fn write_regret(run: &RegretRun, dir: &Path) -> BenchResult<()> {
    ensure_dir(dir)?;
    write(&dir.join("report.tsv"), &regret_tsv(run))?;
    write(&dir.join("regret_series.tsv"), &regret_series_tsv(run))?;
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(run)?)
}

pub fn newnode_tsv(rows: &[NewNodeRow]) -> String {
    let mut s = String::from("n_nodes\tmethod\tseconds_per_node\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{:.6e}", r.n_nodes, r.method, r.seconds_per_node);
    }
    s
}

pub fn write_newnode(rows: &[NewNodeRow], config: &BTreeMap<String, String>, dir: &Path) -> BenchResult<()> {
    ensure_dir(dir)?;
    write(&dir.join("timing.tsv"), &newnode_tsv(rows))?;
    let summary = json!({"kind": "bench-newnode", "config": config, "rows": rows});
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)
}
