//! Flat CSV views of sweep reports for spreadsheets and plotting tools.

use super::harness::{SweepAxis, SweepReport};
use crate::data::N_CLASSES;
use crate::error::Result;

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per sweep point, classifier and mode.
pub fn flat_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "axis",
        "value",
        "classifier",
        "mode",
        "n_replications",
        "n_failed",
    ]
    .map(String::from)
    .to_vec();
    header.extend(["auc_mean", "auc_std", "f1_mean", "f1_std"].map(String::from));
    for c in 0..N_CLASSES {
        header.push(format!("abs_error_{c}_mean"));
        header.push(format!("abs_error_{c}_std"));
    }
    header.extend((0..N_CLASSES).map(|c| format!("summary_{c}")));
    header.extend((0..N_CLASSES).map(|c| format!("truth_{c}")));
    header.push("check_score_mean".into());
    w.write_record(&header)?;
    for m in &report.reports {
        let mut row = vec![
            m.axis.name().to_string(),
            m.value.to_string(),
            m.classifier.name().to_string(),
            m.mode.name().to_string(),
            m.n_replications.to_string(),
            m.n_failed.to_string(),
            cell(m.auc_mean),
            cell(m.auc_std),
            cell(m.f1_mean),
            cell(m.f1_std),
        ];
        for c in 0..N_CLASSES {
            row.push(cell(m.abs_error_mean.map(|e| e[c])));
            row.push(cell(m.abs_error_std.map(|e| e[c])));
        }
        row.extend((0..N_CLASSES).map(|c| cell(m.summary_mean.map(|s| s[c]))));
        row.extend(m.truth.iter().map(|t| t.to_string()));
        row.push(cell(m.check_score_mean));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Long-format CSVs keyed by file name: AUC and F1 against the swept value,
/// and per-class absolute error against the swept value.
pub fn plot_data(report: &SweepReport) -> Result<Vec<(String, String)>> {
    let axis = report.spec.axis.name();
    let mut metrics = csv::Writer::from_writer(Vec::new());
    metrics.write_record([axis, "classifier", "mode", "metric", "mean", "std"])?;
    let mut errors = csv::Writer::from_writer(Vec::new());
    errors.write_record([
        axis,
        "classifier",
        "mode",
        "class",
        "abs_error_mean",
        "abs_error_std",
    ])?;
    for m in &report.reports {
        let key = [
            m.value.to_string(),
            m.classifier.name().to_string(),
            m.mode.name().to_string(),
        ];
        for (name, mean, std) in [("auc", m.auc_mean, m.auc_std), ("f1", m.f1_mean, m.f1_std)] {
            metrics.write_record(key.iter().cloned().chain([
                name.to_string(),
                cell(mean),
                cell(std),
            ]))?;
        }
        for c in 0..N_CLASSES {
            errors.write_record(key.iter().cloned().chain([
                c.to_string(),
                cell(m.abs_error_mean.map(|e| e[c])),
                cell(m.abs_error_std.map(|e| e[c])),
            ]))?;
        }
    }
    let suffix = match report.spec.axis {
        SweepAxis::Wu => "w_u",
        SweepAxis::N => "n",
    };
    Ok(vec![
        (format!("metrics_by_{suffix}.csv"), finish(metrics)?),
        (format!("abs_error_by_{suffix}.csv"), finish(errors)?),
    ])
}
