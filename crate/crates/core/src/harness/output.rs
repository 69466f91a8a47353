//! Result files. Column order is fixed:
//!
//! * results: `scenario_id, heterogeneity, mean_utility, mean_throughput,
//!   mean_delay, mean_plr, cumulative_reward`; `heterogeneity` is empty
//!   for single-user scenarios
//! * CDF: `metric, value, fraction` for the metrics `utility`, `throughput`,
//!   `delay` and `plr`
//! * bins: `lower, upper, count, mean_utility`
//! * sweep: `episodes, median_utility`
//! * training log: `episode, scenario_id, cumulative_reward, exploration,
//!   mean_loss`

use std::io::{Read, Write};

use serde::Serialize;

use super::stats::{cdf, HeterogeneityBin, SweepRow};
use super::training::TrainLogRow;
use super::EpisodeResult;
use crate::{Error, Result};

fn csv_error(e: csv::Error) -> Error {
    Error::format("csv", e.to_string())
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::io("csv output", e))
}

pub fn write_results<W: Write>(w: W, results: &[EpisodeResult]) -> Result<()> {
    write_rows(w, results)
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<EpisodeResult>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}

#[derive(Serialize)]
struct CdfRow {
    metric: &'static str,
    value: f64,
    fraction: f64,
}

pub fn write_cdfs<W: Write>(w: W, results: &[EpisodeResult]) -> Result<()> {
    let metrics: [(&str, fn(&EpisodeResult) -> f64); 4] = [
        ("utility", |r| r.mean_utility),
        ("throughput", |r| r.mean_throughput),
        ("delay", |r| r.mean_delay),
        ("plr", |r| r.mean_plr),
    ];
    let mut rows = Vec::new();
    for (metric, f) in metrics {
        let values: Vec<f64> = results.iter().map(f).collect();
        for (value, fraction) in cdf(&values)? {
            rows.push(CdfRow { metric, value, fraction });
        }
    }
    write_rows(w, &rows)
}

pub fn write_bins<W: Write>(w: W, bins: &[HeterogeneityBin]) -> Result<()> {
    write_rows(w, bins)
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    write_rows(w, rows)
}

pub fn write_training_log<W: Write>(w: W, rows: &[TrainLogRow]) -> Result<()> {
    write_rows(w, rows)
}

pub fn read_training_log<R: Read>(r: R) -> Result<Vec<TrainLogRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}
