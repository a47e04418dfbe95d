//! Case files in, report files out.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use thoughtmem_core::eval::{metric, parse_cases, EvalCase, EvalError, EvalKind, ExperimentReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io failure on {path}: {source}")]
    IoFailure { path: String, source: io::Error },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_eval_cases(kind: EvalKind, path: &Path) -> Result<Vec<EvalCase>, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_cases(kind, &text)?)
}

/// Rows as CSV: `group,case_id`, then every metric name in sorted order.
pub fn rows_csv(report: &ExperimentReport) -> Result<String, ReportError> {
    let names: BTreeSet<&str> = report
        .rows
        .iter()
        .flat_map(|r| r.metrics.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group", "case_id"];
    header.extend(names.iter().copied());
    w.write_record(&header)?;
    for row in &report.rows {
        let mut fields = vec![row.group.clone(), row.case_id.clone()];
        fields.extend(
            names
                .iter()
                .map(|n| row.metrics.get(*n).map(f64::to_string).unwrap_or_default()),
        );
        w.write_record(&fields)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::IoFailure {
        path: "<csv buffer>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Whitespace-separated columns for plotting. Scaling reports give one line
/// per budget, probe reports one line per query; other experiments have no
/// curve.
pub fn curve_data(report: &ExperimentReport) -> Option<String> {
    match report.experiment.as_str() {
        "scaling" => {
            let mut out = format!(
                "# thoughts {} {} {} {}\n",
                metric::RECALL,
                metric::PRECISION,
                metric::COVERAGE_F1,
                metric::ROUGE_L_F1
            );
            for agg in &report.aggregate {
                let budget = agg.group.strip_prefix("budget=")?;
                let m = |k: &str| agg.metrics.get(k).copied().unwrap_or(f64::NAN);
                out.push_str(&format!(
                    "{budget} {} {} {} {}\n",
                    m(metric::RECALL),
                    m(metric::PRECISION),
                    m(metric::COVERAGE_F1),
                    m(metric::ROUGE_L_F1)
                ));
            }
            Some(out)
        }
        "probe" => {
            let mut out = format!("# {} {}\n", metric::RANK, metric::MEAN_LEVEL);
            for row in &report.rows {
                out.push_str(&format!(
                    "{} {}\n",
                    row.metrics[metric::RANK],
                    row.metrics[metric::MEAN_LEVEL]
                ));
            }
            Some(out)
        }
        _ => None,
    }
}

/// Writes `<experiment>.json`, `<experiment>-rows.csv`, and for curves
/// `<experiment>.dat` into `dir`, recording the paths in the report.
pub fn write_report(report: &mut ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = &report.experiment;
    let json_path = dir.join(format!("{name}.json"));
    let csv_path = dir.join(format!("{name}-rows.csv"));
    let dat_path = dir.join(format!("{name}.dat"));
    let curve = curve_data(report);

    let mut paths = vec![json_path.clone(), csv_path.clone()];
    if curve.is_some() {
        paths.push(dat_path.clone());
    }
    report.artifacts = paths.iter().map(|p| p.display().to_string()).collect();

    fs::write(&csv_path, rows_csv(report)?).map_err(io_err(&csv_path))?;
    if let Some(c) = curve {
        fs::write(&dat_path, c).map_err(io_err(&dat_path))?;
    }
    let json = serde_json::to_string_pretty(report).expect("reports always serialize");
    fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
    Ok(paths)
}
