use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub model: String,
    pub seed_index: usize,
    pub seed: u64,
    pub misclassifications: Option<usize>,
    pub test_samples: usize,
    pub trained_epochs: Option<usize>,
    pub best_epoch: Option<usize>,
    pub stop_reason: Option<String>,
    pub wall_time_s: f64,
    pub cpu_time_s: f64,
    /// Set when the run failed; the result fields are then empty.
    pub error: Option<String>,
}

impl RunRow {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Per-model summary over the successful runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub model: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_misclassifications: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when undefined.
    pub std_misclassifications: f64,
    /// False when fewer than two runs succeeded.
    pub std_defined: bool,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub mean_wall_min: f64,
    pub mean_cpu_min: f64,
}

impl Aggregate {
    /// Computes the summary of a model's rows.
    pub fn from_rows(model: &str, rows: &[&RunRow]) -> Aggregate {
        let ok: Vec<&&RunRow> = rows.iter().filter(|r| r.succeeded()).collect();
        let n = ok.len();
        let mis: Vec<f64> = ok.iter().map(|r| r.misclassifications.unwrap_or(0) as f64).collect();
        let mean = if n == 0 { 0.0 } else { mis.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (mis.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let epochs: Vec<usize> = ok.iter().filter_map(|r| r.trained_epochs).collect();
        let mean_of = |f: fn(&RunRow) -> f64| {
            if n == 0 {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / n as f64 / 60.0
            }
        };
        Aggregate {
            model: model.to_string(),
            runs: n,
            failed: rows.len() - n,
            mean_misclassifications: mean,
            std_misclassifications: std,
            std_defined: n >= 2,
            min_epochs: epochs.iter().copied().min().unwrap_or(0),
            max_epochs: epochs.iter().copied().max().unwrap_or(0),
            mean_wall_min: mean_of(|r| r.wall_time_s),
            mean_cpu_min: mean_of(|r| r.cpu_time_s),
        }
    }

    /// `mean +/- std`, both rounded to whole samples, e.g. `14 +/- 2`.
    pub fn misclassification_cell(&self) -> String {
        let s = format!("{:.0} +/- {:.0}", self.mean_misclassifications, self.std_misclassifications);
        if self.std_defined {
            s
        } else {
            s + " (n=1)"
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    /// RFC 3339 timestamp, omitted for reproducible output.
    pub generated_at: Option<String>,
    pub hardware: String,
    pub dataset: String,
    pub base_seed: u64,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub header: ReportHeader,
    /// Sorted by model order of the request, then seed index.
    pub rows: Vec<RunRow>,
}

impl RunReport {
    /// True when every run succeeded.
    pub fn complete(&self) -> bool {
        self.rows.iter().all(RunRow::succeeded)
    }

    /// Model names in first-appearance order.
    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.model) {
                out.push(r.model.clone());
            }
        }
        out
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        self.models()
            .iter()
            .map(|m| {
                let rows: Vec<&RunRow> = self.rows.iter().filter(|r| &r.model == m).collect();
                Aggregate::from_rows(m, &rows)
            })
            .collect()
    }

    /// Drops the timestamp and zeroes timings so identical runs give
    /// identical files.
    pub fn strip_volatile(&mut self) {
        self.header.generated_at = None;
        for r in &mut self.rows {
            r.wall_time_s = 0.0;
            r.cpu_time_s = 0.0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportStyle {
    Csv,
    Markdown,
}

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "model",
    "runs",
    "failed",
    "misclassifications_mean",
    "misclassifications_std",
    "std_defined",
    "epochs_min",
    "epochs_max",
    "time_mean_min",
    "cpu_time_mean_min",
];

pub fn format_report(report: &RunReport, style: ReportStyle) -> String {
    match style {
        ReportStyle::Csv => summary_csv(report),
        ReportStyle::Markdown => markdown(report),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn summary_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
    for a in report.aggregates() {
        w.write_record([
            a.model.clone(),
            a.runs.to_string(),
            a.failed.to_string(),
            a.mean_misclassifications.to_string(),
            a.std_misclassifications.to_string(),
            a.std_defined.to_string(),
            a.min_epochs.to_string(),
            a.max_epochs.to_string(),
            a.mean_wall_min.to_string(),
            a.mean_cpu_min.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Reads back the output of `format_report(_, ReportStyle::Csv)`.
pub fn parse_summary_csv(text: &str) -> Result<Vec<Aggregate>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(SUMMARY_COLUMNS) {
        return Err(Error::Format(format!("unexpected summary columns: {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::Format(format!("invalid {} `{}`", SUMMARY_COLUMNS[i], field(i)));
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
        let real = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        out.push(Aggregate {
            model: field(0).to_string(),
            runs: int(1)?,
            failed: int(2)?,
            mean_misclassifications: real(3)?,
            std_misclassifications: real(4)?,
            std_defined: field(5).parse().map_err(|_| bad(5))?,
            min_epochs: int(6)?,
            max_epochs: int(7)?,
            mean_wall_min: real(8)?,
            mean_cpu_min: real(9)?,
        });
    }
    Ok(out)
}

fn markdown(report: &RunReport) -> String {
    let h = &report.header;
    let mut s = String::from("# Benchmark report\n\n");
    if let Some(t) = &h.generated_at {
        let _ = writeln!(s, "- generated: {t}");
    }
    let _ = writeln!(s, "- hardware: {}", h.hardware);
    let _ = writeln!(s, "- dataset: {}", h.dataset);
    let _ = writeln!(s, "- base seed: {}, seeds per model: {}", h.base_seed, h.n_seeds);
    if !report.complete() {
        let failed = report.rows.iter().filter(|r| !r.succeeded()).count();
        let _ = writeln!(s, "- incomplete: {failed} run(s) failed");
    }
    s.push_str("\n| Model | Misclassifications | Trained Epochs | Time (min) |\n");
    s.push_str("|---|---|---|---|\n");
    for a in report.aggregates() {
        let _ = writeln!(
            s,
            "| {} | {} | {}-{} | {:.2} |",
            a.model,
            a.misclassification_cell(),
            a.min_epochs,
            a.max_epochs,
            a.mean_wall_min
        );
    }
    s
}

pub const RUN_COLUMNS: [&str; 11] = [
    "model",
    "seed_index",
    "seed",
    "misclassifications",
    "test_samples",
    "trained_epochs",
    "best_epoch",
    "stop_reason",
    "wall_time_s",
    "cpu_time_s",
    "error",
];

/// One line per run, in report order.
pub fn runs_csv(report: &RunReport) -> String {
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUN_COLUMNS).expect("in-memory write");
    for r in &report.rows {
        w.write_record([
            r.model.clone(),
            r.seed_index.to_string(),
            r.seed.to_string(),
            opt(r.misclassifications),
            r.test_samples.to_string(),
            opt(r.trained_epochs),
            opt(r.best_epoch),
            r.stop_reason.clone().unwrap_or_default(),
            r.wall_time_s.to_string(),
            r.cpu_time_s.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Reads back [`runs_csv`] output.
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(RUN_COLUMNS) {
        return Err(Error::Format(format!("unexpected run columns: {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::Format(format!("invalid {} `{}`", RUN_COLUMNS[i], f(i)));
        let opt = |i: usize| -> Result<Option<usize>> {
            if f(i).is_empty() {
                Ok(None)
            } else {
                f(i).parse().map(Some).map_err(|_| bad(i))
            }
        };
        let text = |i: usize| (!f(i).is_empty()).then(|| f(i).to_string());
        rows.push(RunRow {
            model: f(0).to_string(),
            seed_index: f(1).parse().map_err(|_| bad(1))?,
            seed: f(2).parse().map_err(|_| bad(2))?,
            misclassifications: opt(3)?,
            test_samples: f(4).parse().map_err(|_| bad(4))?,
            trained_epochs: opt(5)?,
            best_epoch: opt(6)?,
            stop_reason: text(7),
            wall_time_s: f(8).parse().map_err(|_| bad(8))?,
            cpu_time_s: f(9).parse().map_err(|_| bad(9))?,
            error: text(10),
        });
    }
    Ok(rows)
}

/// Aggregates per model, keyed by name.
pub fn aggregates_by_model(report: &RunReport) -> BTreeMap<String, Aggregate> {
    report.aggregates().into_iter().map(|a| (a.model.clone(), a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, i: usize, mis: usize, epochs: usize) -> RunRow {
        RunRow {
            model: model.into(),
            seed_index: i,
            seed: 100 + i as u64,
            misclassifications: Some(mis),
            test_samples: 450,
            trained_epochs: Some(epochs),
            best_epoch: Some(epochs - 1),
            stop_reason: Some("early_stop".into()),
            wall_time_s: 60.0 * (i + 1) as f64,
            cpu_time_s: 59.5,
            error: None,
        }
    }

    fn report(rows: Vec<RunRow>) -> RunReport {
        RunReport {
            header: ReportHeader { hardware: "test".into(), dataset: "d".into(), n_seeds: 5, ..Default::default() },
            rows,
        }
    }

    #[test]
    fn table_cell_format() {
        // values chosen so mean = 14 and sample std = 2
        let rep = report(vec![
            row("cnn6", 0, 12, 80),
            row("cnn6", 1, 14, 75),
            row("cnn6", 2, 16, 90),
            row("cnn6", 3, 14, 85),
            row("cnn6", 4, 14, 88),
        ]);
        let a = &rep.aggregates()[0];
        assert_eq!(a.mean_misclassifications, 14.0);
        assert_eq!(a.std_misclassifications, 2.0f64.sqrt());
        assert_eq!(a.misclassification_cell(), "14 +/- 1");
        let b = Aggregate { std_misclassifications: 2.0, ..a.clone() };
        assert_eq!(b.misclassification_cell(), "14 +/- 2");
        assert_eq!((a.min_epochs, a.max_epochs), (75, 90));
        assert!(format_report(&rep, ReportStyle::Markdown).contains("| cnn6 | 14 +/- 1 | 75-90 | 3.00 |"));
    }

    #[test]
    fn single_run_has_flagged_zero_std() {
        let a = &report(vec![row("m", 0, 7, 10)]).aggregates()[0];
        assert_eq!(a.std_misclassifications, 0.0);
        assert!(!a.std_defined);
        assert_eq!(a.mean_misclassifications, 7.0);
        assert_eq!(a.misclassification_cell(), "7 +/- 0 (n=1)");
    }

    #[test]
    fn empty_report_is_header_only() {
        let rep = report(vec![]);
        assert_eq!(format_report(&rep, ReportStyle::Csv), SUMMARY_COLUMNS.join(",") + "\n");
        assert!(format_report(&rep, ReportStyle::Markdown).ends_with("|---|---|---|---|\n"));
        assert_eq!(runs_csv(&rep), RUN_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn csv_round_trips() {
        let mut rows = vec![row("a", 0, 3, 20), row("a", 1, 8, 31), row("b", 0, 1, 12)];
        rows[2].wall_time_s = 0.1 + 0.2;
        rows.push(RunRow {
            misclassifications: None,
            trained_epochs: None,
            best_epoch: None,
            stop_reason: None,
            error: Some("non-finite loss, \"quoted\"".into()),
            ..row("b", 1, 0, 1)
        });
        let rep = report(rows);
        assert_eq!(parse_summary_csv(&format_report(&rep, ReportStyle::Csv)).unwrap(), rep.aggregates());
        assert_eq!(parse_runs_csv(&runs_csv(&rep)).unwrap(), rep.rows);
        assert!(!rep.complete());
        assert_eq!(aggregates_by_model(&rep)["b"].failed, 1);
        assert!(format_report(&rep, ReportStyle::Markdown).contains("incomplete: 1 run(s) failed"));
    }
}
