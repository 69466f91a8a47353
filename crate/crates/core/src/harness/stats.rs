use serde::Serialize;

use super::EpisodeResult;
use crate::{Error, Result};

/// Empirical CDF: values ascending, the i-th (1-based) paired with `i / n`.
pub fn cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("CDF of no values".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("CDF input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of no values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("mean of no values".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_utility: f64,
}

/// Index `k` of the left-closed bin `[k w, (k + 1) w)` holding `h`.
pub fn bin_index(h: f64, width: f64) -> usize {
    let mut k = (h / width).floor().max(0.0) as usize;
    while (k + 1) as f64 * width <= h {
        k += 1;
    }
    while k > 0 && k as f64 * width > h {
        k -= 1;
    }
    k
}

/// Mean utility per heterogeneity bin, ascending, empty bins omitted.
/// Results without an index are skipped.
pub fn bin_by_heterogeneity(results: &[EpisodeResult], width: f64) -> Result<Vec<HeterogeneityBin>> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidInput(format!("bin width must be positive, got {width}")));
    }
    let mut bins: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in results {
        let Some(h) = r.heterogeneity else { continue };
        bins.entry(bin_index(h, width))
            .or_default()
            .push(r.mean_utility);
    }
    Ok(bins
        .into_iter()
        .map(|(k, u)| HeterogeneityBin {
            lower: k as f64 * width,
            upper: (k + 1) as f64 * width,
            count: u.len(),
            mean_utility: u.iter().sum::<f64>() / u.len() as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub episodes: u64,
    pub median_utility: f64,
}

/// Median per-episode mean utility for each evaluated checkpoint.
pub fn sweep_table(evaluations: &[(u64, Vec<EpisodeResult>)]) -> Result<Vec<SweepRow>> {
    evaluations
        .iter()
        .map(|(episodes, results)| {
            let u: Vec<f64> = results.iter().map(|r| r.mean_utility).collect();
            Ok(SweepRow {
                episodes: *episodes,
                median_utility: median(&u)?,
            })
        })
        .collect()
}
