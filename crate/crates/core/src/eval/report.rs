use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, MetricRecord, MetricsReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(EvalError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// One row of the CSV report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub repeats: Vec<f64>,
}

pub fn report_rows(report: &MetricsReport) -> Vec<ReportRow> {
    MetricRecord::NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| ReportRow {
            metric: name.to_string(),
            mean: report.mean.values()[k],
            std: report.std.values()[k],
            repeats: report.records.iter().map(|r| r.metrics.values()[k]).collect(),
        })
        .collect()
}

/// `mean (std s)` in percent with two decimals.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{:.2} (std {:.2})", mean * 100.0, std * 100.0)
}

const MARKDOWN_HEADER: &str = "| Accuracy | Precision | Recall | F1 |\n|---|---|---|---|\n";

fn markdown_cells(report: &MetricsReport) -> String {
    report
        .mean
        .values()
        .iter()
        .zip(report.std.values())
        .map(|(m, s)| format_cell(*m, s))
        .collect::<Vec<_>>()
        .join(" | ")
}

pub fn render_markdown(report: &MetricsReport) -> String {
    format!("{MARKDOWN_HEADER}| {} |\n", markdown_cells(report))
}

pub fn render_csv(report: &MetricsReport) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string(), "mean".into(), "std".into()];
    header.extend((0..report.records.len()).map(|k| format!("repeat_{k}")));
    w.write_record(&header).map_err(|e| EvalError::Io(e.to_string()))?;
    for row in report_rows(report) {
        let mut fields = vec![row.metric, row.mean.to_string(), row.std.to_string()];
        fields.extend(row.repeats.iter().map(f64::to_string));
        w.write_record(&fields).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the report. An empty report is an error and leaves no file.
pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<(), EvalError> {
    if report.records.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let text = match format {
        ReportFormat::Csv => render_csv(report)?,
        ReportFormat::Markdown => render_markdown(report),
    };
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>, EvalError> {
    let path = path.as_ref();
    let err = |e: String| EvalError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
        if rec.len() < 3 {
            return Err(err("report row has fewer than 3 columns".into()));
        }
        rows.push(ReportRow {
            metric: rec[0].to_string(),
            mean: num(&rec[1])?,
            std: num(&rec[2])?,
            repeats: rec.iter().skip(3).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

/// One labelled row per setting, e.g. the adaptor sweep.
pub fn render_sweep_markdown(label_header: &str, rows: &[(String, MetricsReport)]) -> String {
    let mut out = format!("| {label_header} | Accuracy | Precision | Recall | F1 |\n|---|---|---|---|---|\n");
    for (label, report) in rows {
        out.push_str(&format!("| {label} | {} |\n", markdown_cells(report)));
    }
    out
}

pub fn render_sweep_csv(label_header: &str, rows: &[(String, MetricsReport)]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![label_header.to_string()];
    for name in MetricRecord::NAMES {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header).map_err(|e| EvalError::Io(e.to_string()))?;
    for (label, report) in rows {
        let mut fields = vec![label.clone()];
        for (m, s) in report.mean.values().iter().zip(report.std.values()) {
            fields.push(m.to_string());
            fields.push(s.to_string());
        }
        w.write_record(&fields).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ProtocolConfig, RepeatRecord};

    fn report(values: &[[f64; 4]]) -> MetricsReport {
        let records = values
            .iter()
            .enumerate()
            .map(|(i, v)| RepeatRecord {
                repeat_index: i,
                split_seed: i as u64,
                train_size: 40,
                test_size: 16,
                metrics: MetricRecord::from_values(*v),
            })
            .collect();
        MetricsReport::from_records(records, 4, ProtocolConfig::default()).unwrap()
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.4172, 0.0045), "41.72 (std 0.45)");
    }

    #[test]
    fn markdown_has_one_row() {
        let md = render_markdown(&report(&[[0.5, 0.25, 0.75, 1.0], [0.5, 0.25, 0.75, 1.0]]));
        assert!(md.ends_with("| 50.00 (std 0.00) | 25.00 (std 0.00) | 75.00 (std 0.00) | 100.00 (std 0.00) |\n"));
    }

    #[test]
    fn csv_round_trips_full_precision() {
        let r = report(&[[0.1 + 0.2, 1.0 / 3.0, 0.7, 0.123456789], [0.9, 2.0 / 3.0, 0.1, 0.5]]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_report(&r, &p, ReportFormat::Csv).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("metric,mean,std,repeat_0,repeat_1\n"));
        assert_eq!(read_report_csv(&p).unwrap(), report_rows(&r));
    }

    #[test]
    fn empty_report_writes_nothing() {
        let mut r = report(&[[0.5; 4]]);
        r.records.clear();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        assert!(matches!(
            write_report(&r, &p, ReportFormat::Csv),
            Err(EvalError::EmptyReport)
        ));
        assert!(!p.exists());
    }

    #[test]
    fn sweep_table_rows() {
        let rows = vec![
            ("Default".to_string(), report(&[[0.5; 4]])),
            ("256".to_string(), report(&[[0.6; 4]])),
        ];
        let md = render_sweep_markdown("Adaptor", &rows);
        assert_eq!(md.lines().count(), 4);
        assert!(md.contains("| 256 | 60.00 (std 0.00) |"));
        assert_eq!(render_sweep_csv("adaptor", &rows).unwrap().lines().count(), 3);
    }
}
