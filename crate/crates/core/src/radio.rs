//! Air-to-ground link budgets.
//!
//! Free-space path loss plus an elevation-driven sigmoid line-of-sight
//! model and log-normal shadowing. Rates are Shannon capacities; the
//! expected rate is the LoS/NLoS mixture of the two branch *rates*
//! (not the rate of the mean SNR).

use crate::grid::{GridCell, World};
use crate::rng::Stream;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Parameters of one radio link (access or backhaul).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub carrier_hz: f64,
    pub noise_psd_dbm_hz: f64,
    /// Extra path loss charged on the NLoS branch.
    pub nlos_excess_db: f64,
    /// Sigmoid LoS shape: p = 1 / (1 + a·exp(−b·(elev − a))).
    pub los_a: f64,
    pub los_b: f64,
    pub shadowing_sigma_db: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            bandwidth_hz: 10.0e6,
            tx_power_dbm: 30.0,
            carrier_hz: 2.0e9,
            noise_psd_dbm_hz: -174.0,
            nlos_excess_db: 30.0,
            los_a: 9.61,
            los_b: 0.16,
            shadowing_sigma_db: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub distance_m: f64,
    pub elevation_deg: f64,
}

/// Geometry from a horizontal ground separation and a flight altitude.
pub fn geometry_from_horizontal(horizontal_m: f64, altitude_m: f64) -> Geometry {
    let distance_m = (horizontal_m * horizontal_m + altitude_m * altitude_m).sqrt();
    let elevation_deg = if horizontal_m == 0.0 {
        90.0
    } else {
        (altitude_m / horizontal_m).atan().to_degrees()
    };
    Geometry {
        distance_m,
        elevation_deg,
    }
}

/// Cell-center to cell-center geometry at the world's cell pitch and altitude.
pub fn geometry(world: &World, uav: GridCell, ground: GridCell) -> Geometry {
    let dx = f64::from(uav.x - ground.x) * world.cell_size_m;
    let dy = f64::from(uav.y - ground.y) * world.cell_size_m;
    geometry_from_horizontal((dx * dx + dy * dy).sqrt(), world.altitude_m)
}

pub fn los_probability(link: &LinkConfig, g: &Geometry) -> f64 {
    1.0 / (1.0 + link.los_a * (-link.los_b * (g.elevation_deg - link.los_a)).exp())
}

fn fspl_db(distance_m: f64, carrier_hz: f64) -> f64 {
    20.0 * distance_m.log10() + 20.0 * carrier_hz.log10() - 147.55
}

fn noise_dbm(link: &LinkConfig) -> f64 {
    link.noise_psd_dbm_hz + 10.0 * link.bandwidth_hz.log10()
}

/// SNR of the LoS branch, before shadowing.
pub fn snr_los_db(link: &LinkConfig, g: &Geometry) -> f64 {
    link.tx_power_dbm - fspl_db(g.distance_m, link.carrier_hz) - noise_dbm(link)
}

fn shannon_bps(bandwidth_hz: f64, snr_db: f64) -> f64 {
    if bandwidth_hz <= 0.0 {
        return 0.0; // avoids 0 * inf when the noise floor degenerates
    }
    bandwidth_hz * (1.0 + 10f64.powf(snr_db / 10.0)).log2()
}

/// Shadowing-free expected rate: LoS-probability mixture of branch rates.
pub fn expected_rate_bps(link: &LinkConfig, g: &Geometry) -> f64 {
    let s = snr_los_db(link, g);
    let p = los_probability(link, g);
    p * shannon_bps(link.bandwidth_hz, s)
        + (1.0 - p) * shannon_bps(link.bandwidth_hz, s - link.nlos_excess_db)
}

/// One stochastic rate measurement. Draw order is fixed (LoS Bernoulli,
/// then shadowing) so identical stream state reproduces identical rates.
pub fn sample_rate_bps(link: &LinkConfig, g: &Geometry, rng: &mut Stream, snr_drop_db: f64) -> f64 {
    let los = rng.gen::<f64>() < los_probability(link, g);
    let shadow = Normal::new(0.0, link.shadowing_sigma_db)
        .expect("sigma >= 0")
        .sample(rng);
    let snr =
        snr_los_db(link, g) - if los { 0.0 } else { link.nlos_excess_db } + shadow - snr_drop_db;
    shannon_bps(link.bandwidth_hz, snr)
}

/// Strict threshold gate ("exceeds", not "meets").
pub fn link_feasible(rate_bps: f64, threshold_bps: f64) -> bool {
    rate_bps > threshold_bps
}
