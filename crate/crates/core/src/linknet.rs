//! Deterministic per-step model of the FAP's Wi-Fi cell.
//!
//! Every user gets a mean-channel link budget (free-space path loss), the
//! highest MCS its SNR supports, and a share of a single channel's airtime.
//! Offered loads become airtime demands; when they fit, everything is
//! delivered and delay grows with channel occupancy. When they do not, the
//! airtime is split max-min fairly and backlogged users see a full queue.

use serde::{Deserialize, Serialize};

use crate::scenario::{FapPosition, Scenario, UserSpec};
use crate::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One entry of the rate table: the minimum SNR (dB) at which a PHY rate
/// (bit/s) is usable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub snr_threshold: f64,
    pub phy_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// dBm
    pub tx_power: f64,
    /// Hz
    pub carrier_freq: f64,
    /// dBm
    pub noise_floor: f64,
    /// dBm; weaker links cannot decode the preamble.
    pub min_rssi: f64,
    /// Fraction of the PHY rate left as goodput after MAC overheads.
    pub mac_efficiency: f64,
    pub mcs_table: Vec<McsEntry>,
}

impl Default for RadioParams {
    fn default() -> Self {
        // 802.11ac, 20 MHz, one spatial stream, long guard interval.
        let table = [
            (2.0, 6.5),
            (5.0, 13.0),
            (9.0, 19.5),
            (11.0, 26.0),
            (15.0, 39.0),
            (18.0, 52.0),
            (20.0, 58.5),
            (25.0, 65.0),
            (29.0, 78.0),
        ];
        RadioParams {
            tx_power: 20.0,
            carrier_freq: 5.18e9,
            noise_floor: -94.0,
            min_rssi: -90.0,
            mac_efficiency: 0.65,
            mcs_table: table
                .iter()
                .map(|&(snr_threshold, mbps)| McsEntry {
                    snr_threshold,
                    phy_rate: mbps * 1e6,
                })
                .collect(),
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        if self.mcs_table.is_empty() {
            return Err(Error::InvalidConfig("MCS table is empty".into()));
        }
        for pair in self.mcs_table.windows(2) {
            if !(pair[1].snr_threshold > pair[0].snr_threshold && pair[1].phy_rate > pair[0].phy_rate)
            {
                return Err(Error::InvalidConfig(
                    "MCS table must be strictly increasing in threshold and rate".into(),
                ));
            }
        }
        if self.mcs_table[0].phy_rate <= 0.0 {
            return Err(Error::InvalidConfig("PHY rates must be positive".into()));
        }
        if !(self.mac_efficiency > 0.0 && self.mac_efficiency <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "mac_efficiency must be in (0, 1], got {}",
                self.mac_efficiency
            )));
        }
        if !(self.carrier_freq > 0.0) {
            return Err(Error::InvalidConfig("carrier frequency must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueParams {
    /// Packets.
    pub queue_capacity: f64,
    /// Bytes.
    pub packet_len: f64,
    /// Seconds.
    pub access_delay: f64,
    /// Seconds. Also the delay normaliser of the utility.
    pub delay_cap: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        QueueParams {
            queue_capacity: 500.0,
            packet_len: 512.0,
            access_delay: 1e-3,
            delay_cap: 1.0,
        }
    }
}

impl QueueParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.queue_capacity,
            self.packet_len,
            self.access_delay,
            self.delay_cap,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if all_positive {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "queue parameters must be positive: {self:?}"
            )))
        }
    }

    fn packet_bits(&self) -> f64 {
        self.packet_len * 8.0
    }
}

/// Relative weights of normalised throughput, delay and loss in the utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityWeights {
    pub throughput: f64,
    pub delay: f64,
    pub plr: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights {
            throughput: 0.6,
            delay: 0.3,
            plr: 0.1,
        }
    }
}

impl UtilityWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.throughput, self.delay, self.plr];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "utility weights must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }

    /// `a_T * T + a_D * (1 - D) + a_P * (1 - P)`.
    pub fn utility(&self, norm_throughput: f64, norm_delay: f64, mean_plr: f64) -> f64 {
        self.throughput * norm_throughput
            + self.delay * (1.0 - norm_delay)
            + self.plr * (1.0 - mean_plr)
    }
}

/// Free-space (Friis) path loss in dB.
pub fn path_loss_db(distance: f64, carrier_freq: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    Ok(friis_db(distance, carrier_freq))
}

fn friis_db(distance: f64, carrier_freq: f64) -> f64 {
    20.0 * distance.log10()
        + 20.0 * carrier_freq.log10()
        + 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// dBm
    pub rssi: f64,
    /// dB
    pub snr: f64,
    /// Goodput of the selected MCS in bit/s, zero when not connected.
    pub capacity: f64,
    pub connected: bool,
}

pub fn link_budget(fap: &FapPosition, user: &UserSpec, radio: &RadioParams) -> LinkBudget {
    let distance = fap.distance_to_ground(user.x, user.y);
    // Users are on the ground and the FAP flies at z_min > 0, so d > 0.
    let rssi = radio.tx_power - friis_db(distance.max(f64::MIN_POSITIVE), radio.carrier_freq);
    let snr = rssi - radio.noise_floor;
    let rate = radio
        .mcs_table
        .iter()
        .rev()
        .find(|m| m.snr_threshold <= snr)
        .map(|m| m.phy_rate);
    match rate {
        Some(rate) if rssi >= radio.min_rssi => LinkBudget {
            rssi,
            snr,
            capacity: radio.mac_efficiency * rate,
            connected: true,
        },
        _ => LinkBudget {
            rssi,
            snr,
            capacity: 0.0,
            connected: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLinkStats {
    pub rssi: f64,
    pub snr: f64,
    pub capacity: f64,
    /// Delivered rate, bit/s.
    pub served: f64,
    /// Seconds.
    pub delay: f64,
    pub plr: f64,
    pub connected: bool,
    /// Fraction of channel airtime granted.
    pub airtime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub per_user: Vec<UserLinkStats>,
    pub norm_throughput: f64,
    pub norm_delay: f64,
    pub mean_plr: f64,
    pub utility: f64,
}

/// Max-min fair split of one unit of airtime over `demands`.
///
/// Each round offers the remaining airtime equally to the unsatisfied users;
/// those asking for no more than the share are satisfied and keep their
/// demand. Stops when a round satisfies nobody, leaving the share to each
/// remaining user.
pub fn progressive_fill(demands: &[f64]) -> Vec<f64> {
    let mut granted = vec![0.0; demands.len()];
    let mut open: Vec<usize> = (0..demands.len()).collect();
    let mut remaining = 1.0;
    while !open.is_empty() {
        let share = remaining / open.len() as f64;
        let (satisfied, rest): (Vec<usize>, Vec<usize>) =
            open.iter().partition(|&&i| demands[i] <= share);
        if satisfied.is_empty() {
            for &i in &rest {
                granted[i] = share;
            }
            break;
        }
        for &i in &satisfied {
            granted[i] = demands[i];
            remaining -= demands[i];
        }
        remaining = remaining.max(0.0);
        open = rest;
    }
    granted
}

/// Runs the fluid model for one time step with the FAP at `fap`.
pub fn simulate_step(
    fap: &FapPosition,
    s: &Scenario,
    radio: &RadioParams,
    queue: &QueueParams,
    weights: &UtilityWeights,
) -> Result<StepMetrics> {
    if s.users.is_empty() {
        return Err(Error::InvalidInput(format!("scenario {} has no users", s.id)));
    }
    let budgets: Vec<LinkBudget> = s.users.iter().map(|u| link_budget(fap, u, radio)).collect();
    let connected: Vec<usize> = (0..budgets.len()).filter(|&i| budgets[i].connected).collect();
    let demand: Vec<f64> = connected
        .iter()
        .map(|&i| s.users[i].offered_load / budgets[i].capacity)
        .collect();
    let total_demand: f64 = demand.iter().sum();
    let saturated = total_demand > 1.0;
    let granted = if saturated {
        progressive_fill(&demand)
    } else {
        demand.clone()
    };

    let mut per_user: Vec<UserLinkStats> = budgets
        .iter()
        .map(|b| UserLinkStats {
            rssi: b.rssi,
            snr: b.snr,
            capacity: 0.0,
            served: 0.0,
            delay: queue.delay_cap,
            plr: 1.0,
            connected: false,
            airtime: 0.0,
        })
        .collect();

    let bits = queue.packet_bits();
    for (k, &i) in connected.iter().enumerate() {
        let offered = s.users[i].offered_load;
        let capacity = budgets[i].capacity;
        let packet_time = bits / capacity;
        let stats = &mut per_user[i];
        stats.capacity = capacity;
        stats.connected = true;
        stats.airtime = granted[k];
        if !saturated {
            stats.served = offered;
            stats.plr = 0.0;
            let idle = 1.0 - total_demand;
            stats.delay = if idle > 0.0 {
                (packet_time + queue.access_delay / idle).min(queue.delay_cap)
            } else {
                queue.delay_cap
            };
            continue;
        }
        if granted[k] < demand[k] {
            let served = (granted[k] * capacity).min(offered);
            stats.served = served;
            stats.plr = 1.0 - served / offered;
            stats.delay = if served > 0.0 {
                (queue.queue_capacity * bits / served).min(queue.delay_cap)
            } else {
                queue.delay_cap
            };
        } else {
            stats.served = offered;
            stats.plr = 0.0;
            stats.delay = (packet_time + queue.access_delay * connected.len() as f64)
                .min(queue.delay_cap);
        }
    }
    let n = per_user.len() as f64;
    let served: f64 = per_user.iter().map(|u| u.served).sum();
    let norm_throughput = if s.aggregate_load > 0.0 {
        (served / s.aggregate_load).min(1.0)
    } else {
        1.0
    };
    let norm_delay = per_user.iter().map(|u| u.delay / queue.delay_cap).sum::<f64>() / n;
    let mean_plr = per_user.iter().map(|u| u.plr).sum::<f64>() / n;
    Ok(StepMetrics {
        utility: weights.utility(norm_throughput, norm_delay, mean_plr),
        per_user,
        norm_throughput,
        norm_delay,
        mean_plr,
    })
}

/// Mean per-step utility of an episode.
pub fn episode_utility(steps: &[StepMetrics]) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::InvalidInput("episode has no steps".into()));
    }
    Ok(steps.iter().map(|m| m.utility).sum::<f64>() / steps.len() as f64)
}
