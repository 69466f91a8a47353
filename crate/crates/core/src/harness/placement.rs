//! Static reference placements: the distance-minimising baseline and the
//! exhaustive lattice oracle.

use crate::env::{lattice, EnvConfig, Environment, LatticePoint};
use crate::scenario::{AreaSpec, FapPosition, Scenario};
use crate::{Error, Result};

pub const WEISZFELD_TOLERANCE: f64 = 1e-3;
pub const WEISZFELD_MAX_ITERATIONS: usize = 100;
/// Shift applied when an iterate lands on a data point, metres.
const COINCIDENCE_SHIFT: f64 = 1e-6;

/// Mean horizontal distance from `(x, y)` to the points.
pub fn mean_distance(points: &[(f64, f64)], x: f64, y: f64) -> f64 {
    points.iter().map(|&(px, py)| (px - x).hypot(py - y)).sum::<f64>() / points.len() as f64
}

/// Weiszfeld iteration from the centroid. The returned point is never worse
/// than the centroid or any data point.
pub fn geometric_median(points: &[(f64, f64)], tol: f64, max_iter: usize) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(Error::InvalidInput("geometric median of no points".into()));
    }
    let n = points.len() as f64;
    let centroid = (
        points.iter().map(|p| p.0).sum::<f64>() / n,
        points.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let (mut x, mut y) = centroid;
    for _ in 0..max_iter {
        if points.iter().any(|&(px, py)| (px - x).hypot(py - y) < 1e-12) {
            x += COINCIDENCE_SHIFT;
            y += COINCIDENCE_SHIFT;
        }
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for &(px, py) in points {
            let w = 1.0 / (px - x).hypot(py - y);
            sx += w * px;
            sy += w * py;
            sw += w;
        }
        let (nx, ny) = (sx / sw, sy / sw);
        let moved = (nx - x).hypot(ny - y);
        x = nx;
        y = ny;
        if moved < tol {
            break;
        }
    }
    let mut best = (x, y);
    let mut best_cost = mean_distance(points, x, y);
    for &c in std::iter::once(&centroid).chain(points) {
        let cost = mean_distance(points, c.0, c.1);
        if cost < best_cost {
            best = c;
            best_cost = cost;
        }
    }
    Ok(best)
}

/// The signal-to-noise baseline: horizontal geometric median of the users at
/// the lowest allowed altitude.
pub fn baseline_position(s: &Scenario, area: &AreaSpec) -> Result<FapPosition> {
    let points: Vec<(f64, f64)> = s.users.iter().map(|u| (u.x, u.y)).collect();
    let (x, y) = geometric_median(&points, WEISZFELD_TOLERANCE, WEISZFELD_MAX_ITERATIONS)?;
    Ok(FapPosition::new(
        x.clamp(0.0, area.cov_x),
        y.clamp(0.0, area.cov_y),
        area.z_min,
    ))
}

/// Nearest lattice point to a position.
pub fn snap_to_lattice(cfg: &EnvConfig, p: &FapPosition) -> Result<LatticePoint> {
    let (row, col) = cfg.area.zone_of(p.x, p.y)?;
    let level = ((p.z - cfg.area.z_min) / cfg.z_step).round();
    let level = (level.max(0.0) as usize).min(cfg.levels() - 1);
    Ok(LatticePoint { col, row, level })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub point: LatticePoint,
    pub position: FapPosition,
    pub utility: f64,
}

/// Evaluates the step model at every lattice point; the first maximiser in
/// (level, row, col) order wins.
pub fn oracle_best_position(env: &Environment, s: &Scenario) -> Result<OracleResult> {
    let cfg = env.config();
    let mut best: Option<OracleResult> = None;
    for point in lattice(cfg) {
        let position = point.position(cfg);
        let utility = env.simulate(&position, s)?.utility;
        if best.is_none_or(|b| utility > b.utility) {
            best = Some(OracleResult { point, position, utility });
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("empty lattice".into()))
}

/// Utilities of all lattice points in index order.
pub fn lattice_utilities(env: &Environment, s: &Scenario) -> Result<Vec<f64>> {
    let cfg = env.config();
    lattice(cfg)
        .iter()
        .map(|p| Ok(env.simulate(&p.position(cfg), s)?.utility))
        .collect()
}
