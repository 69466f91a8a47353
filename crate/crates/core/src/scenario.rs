//! Coverage volume, zone grid and scenario generation.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

/// Horizontal coverage rectangle `[0, cov_x] x [0, cov_y]` split into square
/// zones, plus the allowed FAP altitude band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaSpec {
    pub cov_x: f64,
    pub cov_y: f64,
    pub zone_len: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for AreaSpec {
    fn default() -> Self {
        AreaSpec {
            cov_x: 500.0,
            cov_y: 500.0,
            zone_len: 25.0,
            z_min: 25.0,
            z_max: 100.0,
        }
    }
}

impl AreaSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.cov_x, self.cov_y, self.zone_len, self.z_min, self.z_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.cov_x <= 0.0 || self.cov_y <= 0.0 || self.zone_len <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "area extents must be positive and finite: {self:?}"
            )));
        }
        for (name, cov) in [("cov_x", self.cov_x), ("cov_y", self.cov_y)] {
            let zones = cov / self.zone_len;
            if (zones - zones.round()).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {cov} is not a multiple of zone_len = {}",
                    self.zone_len
                )));
            }
        }
        if !(self.z_min > 0.0 && self.z_min <= self.z_max) {
            return Err(Error::InvalidConfig(format!(
                "altitude band must satisfy 0 < z_min <= z_max, got [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    pub fn cols(&self) -> usize {
        (self.cov_x / self.zone_len).round() as usize
    }

    pub fn rows(&self) -> usize {
        (self.cov_y / self.zone_len).round() as usize
    }

    /// Length of the horizontal diagonal, the largest separation of two users.
    pub fn diagonal(&self) -> f64 {
        self.cov_x.hypot(self.cov_y)
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        (0.0..=self.cov_x).contains(&x) && (0.0..=self.cov_y).contains(&y)
    }

    pub fn contains(&self, p: &FapPosition) -> bool {
        self.contains_xy(p.x, p.y) && (self.z_min..=self.z_max).contains(&p.z)
    }

    /// Zone `(row, col)` holding a point; points on the far edges belong to
    /// the last row/column.
    pub fn zone_of(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        if !self.contains_xy(x, y) {
            return Err(Error::InvalidInput(format!(
                "point ({x}, {y}) lies outside the {} x {} area",
                self.cov_x, self.cov_y
            )));
        }
        let col = ((x / self.zone_len).floor() as usize).min(self.cols() - 1);
        let row = ((y / self.zone_len).floor() as usize).min(self.rows() - 1);
        Ok((row, col))
    }

    pub fn zone_center(&self, row: usize, col: usize) -> Result<(f64, f64)> {
        if row >= self.rows() || col >= self.cols() {
            return Err(Error::InvalidInput(format!(
                "zone ({row}, {col}) outside the {}x{} grid",
                self.rows(),
                self.cols()
            )));
        }
        Ok(self.zone_center_unchecked(row, col))
    }

    pub(crate) fn zone_center_unchecked(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.zone_len,
            (row as f64 + 0.5) * self.zone_len,
        )
    }
}

/// A ground user (altitude 0) generating constant-bit-rate traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub x: f64,
    pub y: f64,
    /// Offered load in bit/s.
    pub offered_load: f64,
}

/// Users' positions and offered loads, fixed for a whole episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: u64,
    /// Seed of the generator stream that produced this scenario.
    pub seed: u64,
    pub users: Vec<UserSpec>,
    /// Sum of the users' offered loads, in bit/s.
    pub aggregate_load: f64,
}

impl Scenario {
    /// Builds a scenario from explicit users; the aggregate load is their sum.
    pub fn from_users(id: u64, users: Vec<UserSpec>) -> Self {
        let aggregate_load = users.iter().map(|u| u.offered_load).sum();
        Scenario {
            id,
            seed: 0,
            users,
            aggregate_load,
        }
    }

    pub fn validate(&self, area: &AreaSpec) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::InvalidInput(format!("scenario {} has no users", self.id)));
        }
        for (i, u) in self.users.iter().enumerate() {
            if !area.contains_xy(u.x, u.y) || !(u.offered_load >= 0.0) || !u.offered_load.is_finite()
            {
                return Err(Error::InvalidInput(format!(
                    "scenario {} user {i} invalid: {u:?}",
                    self.id
                )));
            }
        }
        let sum: f64 = self.users.iter().map(|u| u.offered_load).sum();
        if (sum - self.aggregate_load).abs() > 1.0 {
            return Err(Error::InvalidInput(format!(
                "scenario {}: loads sum to {sum} but aggregate is {}",
                self.id, self.aggregate_load
            )));
        }
        Ok(())
    }
}

/// Position of the flying access point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FapPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FapPosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        FapPosition { x, y, z }
    }

    /// Euclidean distance to a ground point.
    pub fn distance_to_ground(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (self.x - x, self.y - y);
        (dx * dx + dy * dy + self.z * self.z).sqrt()
    }
}

/// Seed of the generator stream for scenario `id` under `master_seed`.
pub fn scenario_seed(master_seed: u64, id: u64) -> u64 {
    derive_seed(master_seed, tag::SCENARIO, id)
}

fn round_mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Draws one scenario from the stream seeded with `seed`.
///
/// Draw order: `u` raw demands ~ Exp(1), then for each user `x` then `y`,
/// each ~ Exp(mean = cov/4) redrawn until it falls inside `[0, cov]`.
/// Demands are rescaled to the aggregate load and rounded to whole bit/s by
/// largest remainder, so they sum to `round(aggregate_load)` exactly.
/// Coordinates are rounded to the millimetre.
pub fn generate_scenario(
    id: u64,
    seed: u64,
    area: &AreaSpec,
    u: usize,
    aggregate_load: f64,
) -> Result<Scenario> {
    if u == 0 {
        return Err(Error::InvalidConfig("user count must be at least 1".into()));
    }
    if !(aggregate_load >= 1.0) || !aggregate_load.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "aggregate load must be positive, got {aggregate_load}"
        )));
    }
    area.validate()?;
    let total = aggregate_load.round() as u64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Exp::new(1.0).expect("rate 1 is valid");
    let mut raw: Vec<f64> = (0..u).map(|_| unit.sample(&mut rng)).collect();
    if raw.iter().all(|&d| d == 0.0) {
        raw.iter_mut().for_each(|d| *d = 1.0);
    }
    let loads = apportion(&raw, total);

    let pos_x = Exp::new(4.0 / area.cov_x).expect("positive rate");
    let pos_y = Exp::new(4.0 / area.cov_y).expect("positive rate");
    let mut users = Vec::with_capacity(u);
    for load in loads {
        let x = draw_bounded(&mut rng, &pos_x, area.cov_x);
        let y = draw_bounded(&mut rng, &pos_y, area.cov_y);
        users.push(UserSpec {
            x: round_mm(x),
            y: round_mm(y),
            offered_load: load as f64,
        });
    }
    Ok(Scenario {
        id,
        seed,
        users,
        aggregate_load: total as f64,
    })
}

fn draw_bounded<R: Rng>(rng: &mut R, dist: &Exp<f64>, upper: f64) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v <= upper {
            return v;
        }
    }
}

/// Largest-remainder rounding of `weights * total / sum(weights)`; ties go to
/// the lower index.
fn apportion(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        out[i] += 1;
        remaining -= 1;
    }
    out
}

/// Generates scenarios `first_id .. first_id + count` from the master seed.
pub fn generate_set(
    master_seed: u64,
    first_id: u64,
    count: usize,
    area: &AreaSpec,
    u: usize,
    aggregate_load: f64,
) -> Result<Vec<Scenario>> {
    (first_id..first_id + count as u64)
        .map(|id| generate_scenario(id, scenario_seed(master_seed, id), area, u, aggregate_load))
        .collect()
}

/// Heterogeneity index in `[0, 1]`: half the complement of Jain's fairness
/// index over offered loads plus half the mean normalised distance over
/// ordered user pairs. Distances are horizontal and divided by the area
/// diagonal.
pub fn heterogeneity_index(s: &Scenario, area: &AreaSpec) -> Result<f64> {
    let n = s.users.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "heterogeneity needs at least 2 users, scenario {} has {n}",
            s.id
        )));
    }
    let sum: f64 = s.users.iter().map(|u| u.offered_load).sum();
    let sum_sq: f64 = s.users.iter().map(|u| u.offered_load * u.offered_load).sum();
    let jain = if sum_sq > 0.0 {
        sum * sum / (n as f64 * sum_sq)
    } else {
        1.0
    };

    let diag = area.diagonal();
    let mut pair_sum = 0.0;
    for (i, a) in s.users.iter().enumerate() {
        for b in &s.users[i + 1..] {
            pair_sum += (a.x - b.x).hypot(a.y - b.y) / diag;
        }
    }
    // every unordered pair appears twice among the ordered pairs
    let mean_distance = 2.0 * pair_sum / (n * (n - 1)) as f64;
    Ok((0.5 * (1.0 - jain) + 0.5 * mean_distance).clamp(0.0, 1.0))
}

/// Serialises one scenario as a single JSON line with fixed field order.
pub fn scenario_line(s: &Scenario) -> String {
    let mut line = format!("{{\"id\":{},\"seed\":{},\"users\":[", s.id, s.seed);
    for (i, u) in s.users.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(
            line,
            "{{\"x\":{:.3},\"y\":{:.3},\"offered_load\":{}}}",
            u.x,
            u.y,
            u.offered_load.round() as u64
        );
    }
    line.push_str("]}");
    line
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    id: u64,
    seed: u64,
    users: Vec<UserRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UserRecord {
    x: f64,
    y: f64,
    offered_load: u64,
}

pub fn parse_scenario_line(line: &str) -> Result<Scenario> {
    let rec: ScenarioRecord =
        serde_json::from_str(line).map_err(|e| Error::format("scenario line", e.to_string()))?;
    let users = rec
        .users
        .into_iter()
        .map(|u| UserSpec {
            x: u.x,
            y: u.y,
            offered_load: u.offered_load as f64,
        })
        .collect::<Vec<_>>();
    let mut s = Scenario::from_users(rec.id, users);
    s.seed = rec.seed;
    Ok(s)
}

pub fn write_scenarios(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    let mut out = String::new();
    for s in scenarios {
        out.push_str(&scenario_line(s));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_scenario_line(&line).map_err(|e| {
            Error::format("scenario file", format!("{}:{}: {e}", path.display(), n + 1))
        })?);
    }
    Ok(out)
}
