//! CSV output for traces and run summaries.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{RunSummary, Scenario, SweepRow, TraceRecord};

pub const TRACE_HEADER: [&str; 28] = [
    "slot",
    "service",
    "data_size",
    "uplink_rate",
    "uplink_delay",
    "edge_delay",
    "backbone_delay",
    "processing_delay",
    "total_delay",
    "objective",
    "objective_with_backbone",
    "caching_cost",
    "queue_before",
    "queue_after",
    "iterations",
    "residual",
    "converged",
    "dispatched_bs",
    "dispatched_probability",
    "cluster",
    "storage_usage",
    "compute_usage",
    "feasible",
    "avg_total_delay",
    "avg_caching_cost",
    "degenerate_beam",
    "inverted_penalty",
    "failed",
];

pub const SUMMARY_HEADER: [&str; 22] = [
    "point",
    "status",
    "algorithm",
    "cluster_size",
    "cluster_policy",
    "seed",
    "horizon",
    "penalty_weight",
    "cost_threshold",
    "avg_total_delay",
    "avg_uplink_delay",
    "avg_processing_delay",
    "avg_caching_cost",
    "final_queue",
    "mean_iterations",
    "max_iterations",
    "nonconverged_slots",
    "degenerate_slots",
    "failed_slots",
    "accounting_holds",
    "all_feasible",
    "error",
];

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(";")
}

fn trace_row(r: &TraceRecord) -> Vec<String> {
    vec![
        r.slot.to_string(),
        r.service.to_string(),
        format_float(r.data_size),
        format_float(r.uplink_rate),
        format_float(r.uplink_delay),
        format_float(r.edge_delay),
        format_float(r.backbone_delay),
        format_float(r.processing_delay),
        format_float(r.total_delay),
        format_float(r.objective),
        format_float(r.objective_with_backbone),
        format_float(r.caching_cost),
        format_float(r.queue_before),
        format_float(r.queue_after),
        r.iterations.to_string(),
        format_float(r.residual),
        r.converged.to_string(),
        r.dispatched_bs.to_string(),
        format_float(r.dispatched_probability),
        r.cluster.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
        join_floats(&r.storage_usage),
        join_floats(&r.compute_usage),
        r.feasible.to_string(),
        format_float(r.avg_total_delay),
        format_float(r.avg_caching_cost),
        r.degenerate_beam.to_string(),
        r.inverted_penalty.to_string(),
        r.failed.to_string(),
    ]
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Contract(format!("csv: {other:?}")),
    }
}

pub fn write_trace_to<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record(trace_row(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    write_trace_to(records, std::fs::File::create(path)?)
}

/// One summary row: the point index, a status, the scenario parameters that
/// sweeps vary, and either the run's summary or its error.
pub fn summary_row(point: usize, scenario: &Scenario, outcome: &std::result::Result<RunSummary, String>) -> Vec<String> {
    let mut row = vec![
        point.to_string(),
        if outcome.is_ok() { "ok" } else { "error" }.to_string(),
        scenario.algorithm.name().to_string(),
        scenario.cluster_size.to_string(),
        scenario.cluster_mode.name().to_string(),
        scenario.seed.to_string(),
        scenario.horizon.to_string(),
        format_float(scenario.drift.penalty_weight),
        format_float(scenario.drift.cost_threshold),
    ];
    match outcome {
        Ok(s) => {
            row.extend([
                format_float(s.avg_total_delay),
                format_float(s.avg_uplink_delay),
                format_float(s.avg_processing_delay),
                format_float(s.avg_caching_cost),
                format_float(s.final_queue),
                format_float(s.mean_iterations),
                s.max_iterations.to_string(),
                s.nonconverged_slots.to_string(),
                s.degenerate_slots.to_string(),
                s.failed_slots.to_string(),
                s.accounting_holds.to_string(),
                s.all_feasible.to_string(),
                String::new(),
            ]);
        }
        Err(e) => {
            row.extend(std::iter::repeat_n(String::new(), 12));
            row.push(e.clone());
        }
    }
    row
}

pub fn write_summary_to<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record(summary_row(r.point, &r.scenario, &r.outcome)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(rows: &[SweepRow], path: &Path) -> Result<()> {
    write_summary_to(rows, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_float(1.0), "1");
        assert_eq!(format_float(0.1 + 0.2), "0.3");
        assert_eq!(format_float(123456789.4), "123456789");
        assert_eq!(format_float(1234567894.0), "1.23456789e9");
        assert_eq!(format_float(-2.5e-7), "-2.5e-7");
        assert_eq!(format_float(1.23456789012), "1.23456789");
        assert_eq!(format_float(0.000123456789123), "0.000123456789");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }
}
