//! CSV writers for episode traces and training logs.

use std::path::Path;

use actiscan_core::policy::EpisodeTrace;
use actiscan_core::training::EpochLog;

use super::write_atomic;
use crate::error::Result;

pub const TRACE_HEADER: [&str; 9] = [
    "step",
    "angle_index",
    "angle_deg",
    "score",
    "fallback",
    "psnr",
    "ssim",
    "rmse",
    "wall_ms",
];

pub const TRAIN_LOG_HEADER: [&str; 4] = ["epoch", "phase", "mean_loss", "wall_ms"];

/// Shortest round-tripping decimal, with `nan`, `inf` and `-inf` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn trace_csv(trace: &EpisodeTrace, angle_deg: impl Fn(usize) -> f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for (pick, step) in trace.rows() {
        let m = step.metrics.as_ref();
        let metric = |f: fn(&actiscan_core::metrics::MetricReport) -> f64| {
            fmt_f64(m.map_or(f64::NAN, f))
        };
        w.write_record([
            pick.step.to_string(),
            pick.angle.to_string(),
            fmt_f64(angle_deg(pick.angle)),
            fmt_f64(pick.score.unwrap_or(f64::NAN)),
            u8::from(pick.fallback).to_string(),
            metric(|r| r.psnr),
            metric(|r| r.ssim),
            metric(|r| r.rmse),
            fmt_f64(step.wall_ms),
        ])?;
    }
    to_string(w)
}

pub fn write_trace(path: &Path, trace: &EpisodeTrace, angle_deg: impl Fn(usize) -> f64) -> Result<()> {
    write_atomic(path, trace_csv(trace, angle_deg)?.as_bytes())
}

pub fn train_log_csv(log: &[EpochLog]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAIN_LOG_HEADER)?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            e.phase.as_str().to_string(),
            fmt_f64(e.mean_loss),
            fmt_f64(e.wall_ms),
        ])?;
    }
    to_string(w)
}

pub fn write_train_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    write_atomic(path, train_log_csv(log)?.as_bytes())
}
