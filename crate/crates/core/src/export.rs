//! CSV and JSON writers for ensembles and condition reports.

use std::io::Write;

use serde::Serialize;

use crate::diagnostics::ConditionReport;
use crate::error::{Error, Result};
use crate::simulator::EnsembleSummary;
use crate::stats;

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// One row per path: index, start state, `S_n/√n`, `max|S_k|/√n`,
/// `max S_k/√n`, then `S_{[nt]}/√n` per grid time.
pub fn write_ensemble_csv<W: Write>(summary: &EnsembleSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path".to_string(), "start".into(), "endpoint".into(), "max_abs".into(), "max_signed".into()];
    header.extend(summary.grid.iter().map(|t| format!("t={t}")));
    w.write_record(&header).map_err(csv_error)?;
    for i in 0..summary.count {
        let mut row = vec![
            i.to_string(),
            summary.start_states[i].to_string(),
            summary.normalized_endpoints[i].to_string(),
            summary.max_stats[i].to_string(),
            summary.max_signed[i].to_string(),
        ];
        row.extend(summary.scaled_paths[i].iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}

/// Aggregate statistics of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleAggregate {
    pub n: usize,
    pub count: usize,
    pub start: Option<usize>,
    pub master_seed: u64,
    pub endpoint_mean: f64,
    pub endpoint_variance: f64,
    pub max_abs_mean: f64,
    pub grid: Vec<f64>,
    pub grid_variance: Vec<f64>,
}

pub fn ensemble_aggregate(summary: &EnsembleSummary) -> EnsembleAggregate {
    EnsembleAggregate {
        n: summary.n,
        count: summary.count,
        start: summary.start,
        master_seed: summary.master_seed,
        endpoint_mean: stats::mean(&summary.normalized_endpoints),
        endpoint_variance: stats::variance(&summary.normalized_endpoints),
        max_abs_mean: stats::mean(&summary.max_stats),
        grid: summary.grid.clone(),
        grid_variance: (0..summary.grid.len()).map(|i| stats::variance(&summary.grid_column(i))).collect(),
    }
}

pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::InvalidArgument(format!("json: {e}")))?;
    out.write_all(b"\n").map_err(|e| Error::InvalidArgument(format!("json: {e}")))?;
    Ok(())
}

/// Long format: `condition_id, series, index, aux, value`; the main sequence
/// is written under the series name `sequence`.
pub fn write_report_csv<W: Write>(reports: &[ConditionReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["condition_id", "series", "index", "aux", "value"]).map_err(csv_error)?;
    for r in reports {
        let id = r.condition_id.as_str();
        let named = std::iter::once(("sequence", &r.sequence)).chain(r.series.iter().map(|(k, v)| (k.as_str(), v)));
        for (name, points) in named {
            for p in points {
                let aux = p.aux.map(|a| a.to_string()).unwrap_or_default();
                w.write_record([id, name, &p.index.to_string(), &aux, &p.value.to_string()]).map_err(csv_error)?;
            }
        }
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}
