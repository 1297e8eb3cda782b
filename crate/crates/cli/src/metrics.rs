//! CSV export. Every row carries the seed and config hash.

use std::fmt::Write as _;

use transducer_core::agent::{AdaptationReport, TrainingReport};

pub const METRICS_HEADER: &str = "episode,return,eta_true,eta_observed,ma_return,timestamp,seed,config_hash";
pub const ADAPTATION_HEADER: &str = "episode,return,eta_true,eta_observed,ma_return,learning,seed,config_hash";

/// One training episode. `timestamp` counts environment steps so far,
/// which keeps the file reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub episode: u64,
    pub ret: f64,
    pub eta_true: f64,
    pub eta_observed: f64,
    pub ma_return: f64,
    pub timestamp: u64,
}

pub fn training_rows(report: &TrainingReport) -> Vec<MetricsRow> {
    (0..report.len())
        .map(|i| MetricsRow {
            episode: i as u64,
            ret: report.returns[i],
            eta_true: report.final_eta[i],
            eta_observed: report.final_observed_eta[i],
            ma_return: report.moving_average[i],
            timestamp: report.cumulative_steps[i],
        })
        .collect()
}

pub fn metrics_csv(rows: &[MetricsRow], seed: u64, config_hash: &str) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{seed},{config_hash}",
            r.episode, r.ret, r.eta_true, r.eta_observed, r.ma_return, r.timestamp
        )
        .expect("write to String");
    }
    out
}

pub fn adaptation_csv(report: &AdaptationReport, seed: u64, config_hash: &str) -> String {
    let mut out = format!("{ADAPTATION_HEADER}\n");
    for i in 0..report.returns.len() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{seed},{config_hash}",
            report.returns[i],
            report.final_eta[i],
            report.final_observed_eta[i],
            report.moving_average[i],
            u8::from(report.learning[i]),
        )
        .expect("write to String");
    }
    out
}

/// Appends `seed` and `config_hash` columns to an existing CSV document.
pub fn with_provenance(csv: &str, seed: u64, config_hash: &str) -> String {
    let mut lines = csv.lines();
    let mut out = String::new();
    if let Some(header) = lines.next() {
        writeln!(out, "{header},seed,config_hash").expect("write to String");
    }
    for line in lines {
        writeln!(out, "{line},{seed},{config_hash}").expect("write to String");
    }
    out
}
