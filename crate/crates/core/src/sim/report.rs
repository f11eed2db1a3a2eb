use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::episode::{EpisodeTrace, MetricsReport};
use super::scenario::Scenario;

pub const METRICS_HEADER: [&str; 11] = [
    "label",
    "rmse_e",
    "rmse_dpsi",
    "rmse_V",
    "rmse_beta",
    "rmse_r",
    "rmse_delta",
    "rmse_F",
    "max_abs_e",
    "cost",
    "completed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub metrics: MetricsReport,
}

/// Metrics of each labelled trace. All traces must have the same length.
pub fn compare(entries: &[(String, EpisodeTrace)], scenario: &Scenario) -> Result<Vec<ReportRow>> {
    let Some((_, first)) = entries.first() else {
        return Err(Error::InvalidParameter("report needs at least one trace".into()));
    };
    if let Some((label, t)) = entries.iter().find(|(_, t)| t.rows.len() != first.rows.len()) {
        return Err(Error::InvalidParameter(format!(
            "trace '{label}' has {} rows, expected {}",
            t.rows.len(),
            first.rows.len()
        )));
    }
    Ok(entries
        .iter()
        .map(|(label, t)| ReportRow { label: label.clone(), metrics: t.metrics(scenario) })
        .collect())
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}", "label");
    for h in &METRICS_HEADER[1..9] {
        let _ = write!(out, " {h:>10}");
    }
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        let _ = write!(out, "{:<width$}", r.label);
        for v in [m.rmse_e, m.rmse_dpsi, m.rmse_v, m.rmse_beta, m.rmse_r, m.rmse_delta, m.rmse_f, m.max_abs_e] {
            let _ = write!(out, " {v:>10.4}");
        }
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        let mut rec = vec![r.label.clone()];
        rec.extend(
            [m.rmse_e, m.rmse_dpsi, m.rmse_v, m.rmse_beta, m.rmse_r, m.rmse_delta, m.rmse_f, m.max_abs_e, m.cost]
                .iter()
                .map(|v| v.to_string()),
        );
        rec.push(m.completed.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv` plus one `<label>.csv` trace per entry into `dir`.
pub fn write_bundle(dir: &Path, entries: &[(String, EpisodeTrace)], rows: &[ReportRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (label, trace) in entries {
        trace.write_csv(BufWriter::new(File::create(dir.join(format!("{label}.csv")))?))?;
    }
    write_metrics_csv(rows, BufWriter::new(File::create(dir.join("metrics.csv"))?))
}

/// Trace files under `path`: the file itself, or every `trace_*.csv` in a
/// directory. Labels are file stems without the `trace_` prefix.
pub fn collect_traces(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let label = |p: &Path| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
        stem.strip_prefix("trace_").unwrap_or(stem).to_string()
    };
    if path.is_file() {
        return Ok(vec![(label(path), path.to_path_buf())]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(path)? {
        let p = entry?.path();
        let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if name.starts_with("trace_") && name.ends_with(".csv") {
            found.push((label(&p), p));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Config(format!("no trace_*.csv files in {}", path.display())));
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_episode, Mode};

    fn short_trace() -> (Scenario, EpisodeTrace) {
        let s = Scenario {
            mode: Mode::Ppt,
            duration: 2.0,
            cost: crate::bo::CostConfig { n_k: 20, ..Default::default() },
            ..Scenario::case1()
        };
        let t = run_episode(&s, None).unwrap();
        (s, t)
    }

    #[test]
    fn single_and_duplicate_rows() {
        let (s, t) = short_trace();
        let one = compare(&[("a".into(), t.clone())], &s).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(render_table(&one).lines().count(), 2);
        let two = compare(&[("a".into(), t.clone()), ("b".into(), t)], &s).unwrap();
        assert_eq!(two[0].metrics, two[1].metrics);
    }

    #[test]
    fn length_mismatch_rejected() {
        let (s, t) = short_trace();
        let mut cut = t.clone();
        cut.rows.pop();
        assert!(compare(&[("a".into(), t), ("b".into(), cut)], &s).is_err());
        assert!(compare(&[], &s).is_err());
    }

    #[test]
    fn csv_round_trip_reproduces_metrics() {
        let (s, t) = short_trace();
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![("ppt".to_string(), t)];
        let rows = compare(&entries, &s).unwrap();
        write_bundle(dir.path(), &entries, &rows).unwrap();
        let back = EpisodeTrace::read_csv(File::open(dir.path().join("ppt.csv")).unwrap()).unwrap();
        let again = compare(&[("ppt".into(), back)], &s).unwrap();
        let (a, b) = (rows[0].metrics, again[0].metrics);
        for (x, y) in [(a.rmse_e, b.rmse_e), (a.rmse_f, b.rmse_f), (a.max_abs_e, b.max_abs_e), (a.cost, b.cost)] {
            assert!((x - y).abs() <= 1e-9);
        }
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(text.starts_with(&METRICS_HEADER.join(",")));
    }

    #[test]
    fn collects_prefixed_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["trace_b.csv", "trace_a.csv", "metrics_a.csv"] {
            std::fs::write(dir.path().join(name), "").unwrap();
        }
        let found = collect_traces(dir.path()).unwrap();
        let labels: Vec<_> = found.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["a", "b"]);
    }
}
