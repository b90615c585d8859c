//! Scalar model inputs and agency unit-cost rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed part of the per-km operating rate ($/veh-km).
pub const KM_RATE_BASE: f64 = 0.0314;
/// Per-seat slope of the per-km operating rate ($/veh-km per seat).
pub const KM_RATE_PER_SEAT: f64 = 0.0039;
/// Fixed part of the per-hour operating rate ($/veh-h).
pub const HOUR_RATE_BASE: f64 = 2.068;
/// Per-seat slope of the per-hour operating rate ($/veh-h per seat).
pub const HOUR_RATE_PER_SEAT: f64 = 0.108;
/// Crew cost multiplier applied to the value of time ($/veh-h per $/h).
pub const HOUR_RATE_CREW: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("parameter violations: {}", .0.join("; "))]
    Violations(Vec<String>),
}

/// All scalar inputs of the model. Distances in km, times in hours,
/// money in dollars. Immutable after construction; share freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Region length along the line axis (km).
    pub region_len: f64,
    /// Region width along the stop axis (km).
    pub region_width: f64,
    /// Patron value of time ($/h).
    pub value_of_time: f64,
    /// Amortized infrastructure cost per stop per operating hour ($/stop/h).
    pub stop_cost: f64,
    /// Fixed time lost per bus stop: deceleration, doors, acceleration (h).
    pub dwell_per_stop: f64,
    /// Alighting time per patron (h).
    pub alight_time: f64,
    /// Boarding time per patron (h).
    pub board_time: f64,
    /// Walking speed (km/h).
    pub walk_speed: f64,
    /// Bus cruise speed (km/h).
    pub cruise_speed: f64,
    /// Transfer delay, feeder to trunk, per patron (h).
    pub feeder_trunk_delay: f64,
    /// Transfer delay, trunk to feeder, per patron (h).
    pub trunk_feeder_delay: f64,
    /// Minimum feeder headway (h).
    pub headway_min: f64,
    /// Maximum feeder headway (h).
    pub headway_max: f64,
    /// Trunk-line headway at the terminal (h).
    pub trunk_headway: f64,
    /// Convergence tolerance of the iterative solver.
    pub tolerance: f64,
    /// Manhattan radius around the terminal inside which patrons walk (km).
    pub walk_radius: f64,
    /// Smallest vehicle capacity considered by the exhaustive search.
    pub capacity_min: u32,
    /// Largest vehicle capacity considered by the exhaustive search.
    pub capacity_max: u32,
    /// Lattice columns along x.
    pub lattice_nx: usize,
    /// Lattice rows along y.
    pub lattice_ny: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            region_len: 3.0,
            region_width: 2.0,
            value_of_time: 20.0,
            stop_cost: 0.0,
            dwell_per_stop: 12.0 / 3600.0,
            alight_time: 2.0 / 3600.0,
            board_time: 4.0 / 3600.0,
            walk_speed: 2.0,
            cruise_speed: 25.0,
            feeder_trunk_delay: 3.0 / 60.0,
            trunk_feeder_delay: 3.0 / 60.0,
            headway_min: 3.0 / 60.0,
            headway_max: 30.0 / 60.0,
            trunk_headway: 5.0 / 60.0,
            tolerance: 1e-4,
            walk_radius: 0.3,
            capacity_min: 4,
            capacity_max: 80,
            lattice_nx: 20,
            lattice_ny: 30,
        }
    }
}

impl ModelParams {
    /// Checks every invariant and returns the full violation list.
    pub fn validate(&self) -> Result<(), ParamError> {
        let mut violations = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0) {
                violations.push(format!("{name} > 0 (got {v})"));
            }
        };
        positive("region_len", self.region_len);
        positive("region_width", self.region_width);
        positive("walk_speed", self.walk_speed);
        positive("cruise_speed", self.cruise_speed);
        positive("headway_min", self.headway_min);
        positive("trunk_headway", self.trunk_headway);
        positive("tolerance", self.tolerance);
        positive("value_of_time", self.value_of_time);
        if !(self.headway_min <= self.headway_max) {
            violations.push(format!(
                "headway_min <= headway_max (got {} > {})",
                self.headway_min, self.headway_max
            ));
        }
        for (name, v) in [
            ("dwell_per_stop", self.dwell_per_stop),
            ("alight_time", self.alight_time),
            ("board_time", self.board_time),
            ("stop_cost", self.stop_cost),
            ("walk_radius", self.walk_radius),
            ("feeder_trunk_delay", self.feeder_trunk_delay),
            ("trunk_feeder_delay", self.trunk_feeder_delay),
        ] {
            if !(v >= 0.0) {
                violations.push(format!("{name} >= 0 (got {v})"));
            }
        }
        if self.capacity_min < 1 || self.capacity_min > self.capacity_max {
            violations.push(format!(
                "1 <= capacity_min <= capacity_max (got {}..{})",
                self.capacity_min, self.capacity_max
            ));
        }
        if self.lattice_nx < 2 || self.lattice_ny < 2 {
            violations.push(format!(
                "lattice must be at least 2x2 (got {}x{})",
                self.lattice_nx, self.lattice_ny
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ParamError::Violations(violations))
        }
    }
}

/// Agency unit-cost rates derived from vehicle capacity and value of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgencyRates {
    /// Operating cost per bus-km traveled ($/veh-km).
    pub per_km: f64,
    /// Operating cost per bus-hour: amortized purchase, upkeep, crew ($/veh-h).
    pub per_hour: f64,
}

/// Unit-cost rates for a vehicle of `capacity` seats under value of time
/// `value_of_time`. Both rates are affine in capacity; the hourly rate
/// additionally carries the crew wage term.
pub fn agency_rates(capacity: u32, value_of_time: f64) -> Result<AgencyRates, ParamError> {
    if capacity < 1 {
        return Err(ParamError::Invalid(format!("capacity must be >= 1, got {capacity}")));
    }
    if !(value_of_time > 0.0) {
        return Err(ParamError::Invalid(format!(
            "value_of_time must be > 0, got {value_of_time}"
        )));
    }
    let seats = f64::from(capacity);
    Ok(AgencyRates {
        per_km: KM_RATE_BASE + KM_RATE_PER_SEAT * seats,
        per_hour: HOUR_RATE_BASE + HOUR_RATE_PER_SEAT * seats + HOUR_RATE_CREW * value_of_time,
    })
}
