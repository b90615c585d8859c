//! Generalized-cost evaluation of a lattice design.
//!
//! Every component is an hourly quantity expressed in hours: patron time
//! directly, agency money divided by the value of time. Components are
//! integrated with midpoint sums on the same lattice the solver uses, so
//! solver updates and cost evaluation stay mutually consistent. A second,
//! algebraically rearranged evaluation of the same objective doubles as an
//! internal identity check for the uncoordinated mode.

use crate::demand::{AggregateTables, Direction};
use crate::grid::Grid2;
use crate::params::{AgencyRates, ModelParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack used when validating float-valued constraints.
const CONSTRAINT_REL_TOL: f64 = 1e-9;
/// Agreement required between the two objective evaluation routes.
const IDENTITY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("design lattice ({0}x{1}) does not match demand lattice ({2}x{3})")]
    LatticeMismatch(usize, usize, usize, usize),
    #[error("design violates constraints: {}", format_violations(.0))]
    Constraints(Vec<ConstraintViolation>),
}

fn format_violations(v: &[ConstraintViolation]) -> String {
    let shown: Vec<String> = v.iter().take(8).map(|c| c.to_string()).collect();
    if v.len() > 8 {
        format!("{} ... ({} total)", shown.join("; "), v.len())
    } else {
        shown.join("; ")
    }
}

/// A single constraint violation, pinned to the offending lattice point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintViolation {
    pub kind: String,
    pub i: usize,
    pub j: Option<usize>,
    pub value: f64,
    pub bound: f64,
}

impl std::fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.j {
            Some(j) => write!(
                f,
                "{} at (i={}, j={}): {} vs bound {}",
                self.kind, self.i, j, self.value, self.bound
            ),
            None => write!(f, "{} at i={}: {} vs bound {}", self.kind, self.i, self.value, self.bound),
        }
    }
}

/// Schedule coordination between trunk and feeder services.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Coordination {
    /// No coordination; patrons wait half a headway at each transfer.
    #[default]
    None,
    /// Collection direction coordinated: feeder headways are integer
    /// multiples of the trunk headway, trunk wait eliminated.
    #[serde(alias = "collect")]
    Collection,
    /// Distribution direction coordinated: feeder headways equal the
    /// trunk headway, feeder wait at the terminal eliminated.
    #[serde(alias = "distribute")]
    Distribution,
    /// Both directions coordinated.
    Both,
}

impl Coordination {
    pub fn collection_coordinated(self) -> bool {
        matches!(self, Coordination::Collection | Coordination::Both)
    }

    pub fn distribution_coordinated(self) -> bool {
        matches!(self, Coordination::Distribution | Coordination::Both)
    }
}

/// Lattice-valued decision functions plus the vehicle size.
///
/// `headway_col[i]` and `headway_dist[i]` are the directional headways of
/// lines near `x_i` (h); `line_spacing[i]` the spacing between adjacent
/// lines (km); `stop_spacing` the local stop spacing (km) per lattice cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGrid {
    pub headway_col: Vec<f64>,
    pub headway_dist: Vec<f64>,
    pub line_spacing: Vec<f64>,
    pub stop_spacing: Grid2,
    pub capacity: u32,
    pub coordination: Coordination,
}

impl DesignGrid {
    /// Spatially uniform design, mostly useful as a starting point or for
    /// benchmark classes.
    pub fn uniform(
        nx: usize,
        ny: usize,
        headway_col: f64,
        headway_dist: f64,
        line_spacing: f64,
        stop_spacing: f64,
        capacity: u32,
        coordination: Coordination,
    ) -> Self {
        Self {
            headway_col: vec![headway_col; nx],
            headway_dist: vec![headway_dist; nx],
            line_spacing: vec![line_spacing; nx],
            stop_spacing: Grid2::filled(nx, ny, stop_spacing),
            capacity,
            coordination,
        }
    }

    pub fn nx(&self) -> usize {
        self.headway_col.len()
    }

    pub fn ny(&self) -> usize {
        self.stop_spacing.ny()
    }

    fn check_lattice(&self, agg: &AggregateTables) -> Result<(), CostError> {
        let ok = self.headway_col.len() == agg.nx()
            && self.headway_dist.len() == agg.nx()
            && self.line_spacing.len() == agg.nx()
            && self.stop_spacing.nx() == agg.nx()
            && self.stop_spacing.ny() == agg.ny();
        if ok {
            Ok(())
        } else {
            Err(CostError::LatticeMismatch(self.nx(), self.ny(), agg.nx(), agg.ny()))
        }
    }

    /// Checks headway bounds, spacing bounds, per-column capacity, and the
    /// coordination scheme. Returns every violation.
    pub fn validate(
        &self,
        agg: &AggregateTables,
        params: &ModelParams,
    ) -> Result<(), CostError> {
        self.check_lattice(agg)?;
        let mut out = Vec::new();
        let cap = f64::from(self.capacity);
        let slack = 1.0 + CONSTRAINT_REL_TOL;
        let h_lo_dist = params.headway_min.max(params.trunk_headway);
        for i in 0..self.nx() {
            let hp = self.headway_col[i];
            let hd = self.headway_dist[i];
            let s = self.line_spacing[i];
            if hp < params.headway_min / slack || hp > params.headway_max * slack {
                out.push(ConstraintViolation {
                    kind: "collection headway out of bounds".into(),
                    i,
                    j: None,
                    value: hp,
                    bound: params.headway_min,
                });
            }
            if hd < h_lo_dist / slack || hd > params.headway_max * slack {
                out.push(ConstraintViolation {
                    kind: "distribution headway out of bounds".into(),
                    i,
                    j: None,
                    value: hd,
                    bound: h_lo_dist,
                });
            }
            if !(s > 0.0) || s > params.region_len * slack {
                out.push(ConstraintViolation {
                    kind: "line spacing out of bounds".into(),
                    i,
                    j: None,
                    value: s,
                    bound: params.region_len,
                });
            }
            let load_col = agg.column_total(Direction::Collection, i) * s * hp;
            if load_col > cap * slack {
                out.push(ConstraintViolation {
                    kind: "collection capacity exceeded".into(),
                    i,
                    j: None,
                    value: load_col,
                    bound: cap,
                });
            }
            let load_dist = agg.column_total(Direction::Distribution, i) * s * hd;
            if load_dist > cap * slack {
                out.push(ConstraintViolation {
                    kind: "distribution capacity exceeded".into(),
                    i,
                    j: None,
                    value: load_dist,
                    bound: cap,
                });
            }
            if self.coordination.collection_coordinated() {
                let k = hp / params.trunk_headway;
                if (k - k.round()).abs() > CONSTRAINT_REL_TOL * k.max(1.0) || k.round() < 1.0 {
                    out.push(ConstraintViolation {
                        kind: "collection headway not an integer trunk multiple".into(),
                        i,
                        j: None,
                        value: hp,
                        bound: params.trunk_headway,
                    });
                }
            }
            if self.coordination.distribution_coordinated()
                && (hd - params.trunk_headway).abs()
                    > CONSTRAINT_REL_TOL * params.trunk_headway
            {
                out.push(ConstraintViolation {
                    kind: "distribution headway must equal the trunk headway".into(),
                    i,
                    j: None,
                    value: hd,
                    bound: params.trunk_headway,
                });
            }
            for j in 0..self.ny() {
                let b = self.stop_spacing.get(i, j);
                if !(b > 0.0) || b > params.region_width * slack {
                    out.push(ConstraintViolation {
                        kind: "stop spacing out of bounds".into(),
                        i,
                        j: Some(j),
                        value: b,
                        bound: params.region_width,
                    });
                }
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(CostError::Constraints(out))
        }
    }
}

/// Full decomposition of the hourly generalized cost (all entries hours;
/// serialized names follow the conventional notation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Stop infrastructure cost.
    #[serde(rename = "C_s")]
    pub stop_infra: f64,
    /// Distance-based operating cost (bus-km).
    #[serde(rename = "C_vk")]
    pub bus_distance: f64,
    /// Fleet-based operating cost (bus-h).
    #[serde(rename = "C_vh")]
    pub fleet: f64,
    /// Buses moving between stops.
    #[serde(rename = "V_h1")]
    pub fleet_moving: f64,
    /// Buses consumed by fixed per-stop time losses.
    #[serde(rename = "V_h2")]
    pub fleet_stopped: f64,
    /// Buses consumed by boarding and alighting.
    #[serde(rename = "V_h3")]
    pub fleet_dwelling: f64,
    /// Walking access and egress time.
    #[serde(rename = "C_A")]
    pub access: f64,
    /// Waiting and transfer time, collection direction.
    #[serde(rename = "C_Wp")]
    pub wait_col: f64,
    /// Waiting and transfer time, distribution direction.
    #[serde(rename = "C_Wd")]
    pub wait_dist: f64,
    /// Total waiting and transfer time.
    #[serde(rename = "C_W")]
    pub wait: f64,
    /// Riding time to cover distance.
    #[serde(rename = "C_T1")]
    pub ride_distance: f64,
    /// Riding time lost to fixed per-stop losses.
    #[serde(rename = "C_T2")]
    pub ride_stopping: f64,
    /// Riding time lost to boarding/alighting of others.
    #[serde(rename = "C_T3")]
    pub ride_dwell: f64,
    /// Total in-vehicle time.
    #[serde(rename = "C_T")]
    pub ride: f64,
    /// Total agency cost.
    #[serde(rename = "AC")]
    pub agency: f64,
    /// Total user cost.
    #[serde(rename = "UC")]
    pub user: f64,
    /// Generalized cost: agency plus user.
    #[serde(rename = "GC")]
    pub generalized: f64,
}

impl CostBreakdown {
    /// CSV header matching [`CostBreakdown::csv_row`].
    pub fn csv_header() -> &'static str {
        "C_s,C_vk,C_vh,V_h1,V_h2,V_h3,C_A,C_Wp,C_Wd,C_W,C_T1,C_T2,C_T3,C_T,AC,UC,GC"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.stop_infra,
            self.bus_distance,
            self.fleet,
            self.fleet_moving,
            self.fleet_stopped,
            self.fleet_dwelling,
            self.access,
            self.wait_col,
            self.wait_dist,
            self.wait,
            self.ride_distance,
            self.ride_stopping,
            self.ride_dwell,
            self.ride,
            self.agency,
            self.user,
            self.generalized
        )
    }
}

/// Walking access and egress time: average walk `(S + B) / 4` at walking
/// speed, weighted by both direction densities.
pub fn access_cost(design: &DesignGrid, agg: &AggregateTables, params: &ModelParams) -> f64 {
    let cell = agg.cell_dx() * agg.cell_dy();
    let mut total = 0.0;
    for i in 0..agg.nx() {
        let s = design.line_spacing[i];
        for j in 0..agg.ny() {
            let lambda = agg.density(Direction::Collection, i, j)
                + agg.density(Direction::Distribution, i, j);
            if lambda == 0.0 {
                continue;
            }
            total += (s + design.stop_spacing.get(i, j)) / (4.0 * params.walk_speed)
                * lambda
                * cell;
        }
    }
    total
}

/// Waiting and transfer time per direction.
///
/// Collection: stop wait of half a headway, terminal alighting queue,
/// feeder-to-trunk transfer walk, and (uncoordinated only) half a trunk
/// headway. Coordination removes the trunk wait and doubles the alighting
/// loss. Distribution mirrors this with boarding at the terminal; there
/// the boarding batch accumulates over one trunk headway.
pub fn wait_transfer_cost(
    design: &DesignGrid,
    agg: &AggregateTables,
    params: &ModelParams,
) -> (f64, f64) {
    let dx = agg.cell_dx();
    let coord_col = design.coordination.collection_coordinated();
    let coord_dist = design.coordination.distribution_coordinated();
    let mut wait_col = 0.0;
    let mut wait_dist = 0.0;
    for i in 0..agg.nx() {
        let col = agg.column_total(Direction::Collection, i);
        let dist = agg.column_total(Direction::Distribution, i);
        let s = design.line_spacing[i];
        let hp = design.headway_col[i];
        let hd = design.headway_dist[i];
        if col > 0.0 {
            let alight_factor = if coord_col { params.alight_time } else { params.alight_time / 2.0 };
            let trunk_wait = if coord_col { 0.0 } else { params.trunk_headway / 2.0 };
            let per_patron = hp / 2.0
                + alight_factor * s * hp * col
                + params.feeder_trunk_delay
                + trunk_wait;
            wait_col += per_patron * col * dx;
        }
        if dist > 0.0 {
            let board_factor = if coord_dist { params.board_time } else { params.board_time / 2.0 };
            let feeder_wait = if coord_dist { 0.0 } else { hd / 2.0 };
            let per_patron = params.trunk_feeder_delay
                + feeder_wait
                + board_factor * s * params.trunk_headway * dist;
            wait_dist += per_patron * dist * dx;
        }
    }
    (wait_col, wait_dist)
}

/// In-vehicle time split into distance coverage, fixed per-stop losses,
/// and exposure to other patrons' boarding/alighting.
pub fn invehicle_cost(
    design: &DesignGrid,
    agg: &AggregateTables,
    params: &ModelParams,
) -> (f64, f64, f64) {
    let cell = agg.cell_dx() * agg.cell_dy();
    let dx = agg.cell_dx();
    let mut ride_distance = 0.0;
    let mut ride_stopping = 0.0;
    for i in 0..agg.nx() {
        let x = agg.xs()[i];
        for j in 0..agg.ny() {
            let lambda = agg.density(Direction::Collection, i, j)
                + agg.density(Direction::Distribution, i, j);
            if lambda > 0.0 {
                ride_distance += (x + agg.ys()[j]) / params.cruise_speed * lambda * cell;
            }
            let onboard = agg.tail_mid(Direction::Collection, i, j)
                + agg.tail_mid(Direction::Distribution, i, j);
            if onboard > 0.0 {
                ride_stopping +=
                    params.dwell_per_stop * onboard / design.stop_spacing.get(i, j) * cell;
            }
        }
    }
    let mut ride_dwell = 0.0;
    for i in 0..agg.nx() {
        ride_dwell += design.line_spacing[i]
            * (params.board_time
                * design.headway_col[i]
                * agg.dwell_moment(Direction::Collection, i)
                + params.alight_time
                    * design.headway_dist[i]
                    * agg.dwell_moment(Direction::Distribution, i))
            * dx;
    }
    (ride_distance, ride_stopping, ride_dwell)
}

/// Agency cost: stop infrastructure, bus-km, and the three fleet parts
/// (moving, fixed stop losses, boarding/alighting).
pub fn agency_cost(
    design: &DesignGrid,
    agg: &AggregateTables,
    rates: &AgencyRates,
    params: &ModelParams,
) -> (f64, f64, f64, f64, f64, f64) {
    let dx = agg.cell_dx();
    let cell = agg.cell_dx() * agg.cell_dy();
    let mut stop_infra = 0.0;
    let mut bus_distance = 0.0;
    let mut fleet_moving = 0.0;
    let mut fleet_stopped = 0.0;
    for i in 0..agg.nx() {
        let line_len = params.region_width + agg.xs()[i];
        let s = design.line_spacing[i];
        let dispatch = 1.0 / design.headway_col[i] + 1.0 / design.headway_dist[i];
        bus_distance += rates.per_km / params.value_of_time * line_len / s * dispatch * dx;
        fleet_moving += line_len / (s * params.cruise_speed) * dispatch * dx;
        for j in 0..agg.ny() {
            let stops_per_area = 1.0 / (s * design.stop_spacing.get(i, j));
            stop_infra += params.stop_cost / params.value_of_time * stops_per_area * cell;
            fleet_stopped += params.dwell_per_stop * stops_per_area * dispatch * cell;
        }
    }
    let fleet_dwelling = (params.alight_time + params.board_time) * agg.grand_total();
    let fleet = rates.per_hour / params.value_of_time
        * (fleet_moving + fleet_stopped + fleet_dwelling);
    (stop_infra, bus_distance, fleet, fleet_moving, fleet_stopped, fleet_dwelling)
}

/// Full cost breakdown of a feasible design.
///
/// Validates the constraints first (violations are errors, never silent
/// clamps) and, in the uncoordinated mode, cross-checks the component sum
/// against the rearranged single-pass evaluation of the same objective.
pub fn generalized_cost(
    design: &DesignGrid,
    agg: &AggregateTables,
    rates: &AgencyRates,
    params: &ModelParams,
) -> Result<CostBreakdown, CostError> {
    design.validate(agg, params)?;
    let breakdown = generalized_cost_unchecked(design, agg, rates, params);
    if design.coordination == Coordination::None {
        let alt = rearranged_generalized_cost(design, agg, rates, params);
        let rel = (breakdown.generalized - alt).abs() / breakdown.generalized.max(1e-30);
        assert!(
            rel <= IDENTITY_REL_TOL,
            "objective evaluation routes disagree: components {} vs rearranged {alt}",
            breakdown.generalized,
        );
    }
    Ok(breakdown)
}

/// Component-route evaluation without constraint validation. The solver
/// uses it on intermediate iterates that may still violate capacity.
pub(crate) fn generalized_cost_unchecked(
    design: &DesignGrid,
    agg: &AggregateTables,
    rates: &AgencyRates,
    params: &ModelParams,
) -> CostBreakdown {
    let access = access_cost(design, agg, params);
    let (wait_col, wait_dist) = wait_transfer_cost(design, agg, params);
    let (ride_distance, ride_stopping, ride_dwell) = invehicle_cost(design, agg, params);
    let (stop_infra, bus_distance, fleet, fleet_moving, fleet_stopped, fleet_dwelling) =
        agency_cost(design, agg, rates, params);
    let wait = wait_col + wait_dist;
    let ride = ride_distance + ride_stopping + ride_dwell;
    let agency = stop_infra + bus_distance + fleet;
    let user = access + wait + ride;
    CostBreakdown {
        stop_infra,
        bus_distance,
        fleet,
        fleet_moving,
        fleet_stopped,
        fleet_dwelling,
        access,
        wait_col,
        wait_dist,
        wait,
        ride_distance,
        ride_stopping,
        ride_dwell,
        ride,
        agency,
        user,
        generalized: agency + user,
    }
}

/// The uncoordinated objective evaluated through its rearranged form:
/// a design-independent block, a block of line integrals over x, and a
/// block of double integrals over the region. Agrees with the component
/// route to rounding error; kept as an independent algebraic route for
/// cross-checking.
pub fn rearranged_generalized_cost(
    design: &DesignGrid,
    agg: &AggregateTables,
    rates: &AgencyRates,
    params: &ModelParams,
) -> f64 {
    let dx = agg.cell_dx();
    let dy = agg.cell_dy();
    let theta = params.value_of_time;

    // block 1: independent of every decision function
    let mut fixed = rates.per_hour / theta
        * (params.alight_time + params.board_time)
        * agg.grand_total();
    for i in 0..agg.nx() {
        let col = agg.column_total(Direction::Collection, i);
        let dist = agg.column_total(Direction::Distribution, i);
        fixed += (agg.xs()[i] / params.cruise_speed * (col + dist)
            + (params.feeder_trunk_delay + params.trunk_headway / 2.0) * col
            + params.trunk_feeder_delay * dist)
            * dx;
    }
    for j in 0..agg.ny() {
        fixed += agg.ys()[j] / params.cruise_speed
            * (agg.row_total(Direction::Collection, j) + agg.row_total(Direction::Distribution, j))
            * dy;
    }

    // block 2: single integrals in the line axis
    let mut line_terms = 0.0;
    for i in 0..agg.nx() {
        let s = design.line_spacing[i];
        let hp = design.headway_col[i];
        let hd = design.headway_dist[i];
        let col = agg.column_total(Direction::Collection, i);
        let dist = agg.column_total(Direction::Distribution, i);
        let line_len = params.region_width + agg.xs()[i];
        let dispatch = 1.0 / hp + 1.0 / hd;
        line_terms += ((rates.per_km * line_len / (theta * s)
            + rates.per_hour * line_len / (theta * s * params.cruise_speed))
            * dispatch
            + s / (4.0 * params.walk_speed) * (col + dist)
            + hp / 2.0 * col
            + hd / 2.0 * dist
            + params.alight_time / 2.0 * s * hp * col * col
            + params.board_time / 2.0 * s * params.trunk_headway * dist * dist
            + params.board_time * s * hp * agg.dwell_moment(Direction::Collection, i)
            + params.alight_time * s * hd * agg.dwell_moment(Direction::Distribution, i))
            * dx;
    }

    // block 3: double integrals over the region
    let mut area_terms = 0.0;
    for i in 0..agg.nx() {
        let s = design.line_spacing[i];
        let hp = design.headway_col[i];
        let hd = design.headway_dist[i];
        let dispatch = 1.0 / hp + 1.0 / hd;
        for j in 0..agg.ny() {
            let b = design.stop_spacing.get(i, j);
            let lambda = agg.density(Direction::Collection, i, j)
                + agg.density(Direction::Distribution, i, j);
            let onboard = agg.tail_mid(Direction::Collection, i, j)
                + agg.tail_mid(Direction::Distribution, i, j);
            area_terms += (params.stop_cost / (theta * s * b)
                + rates.per_hour * params.dwell_per_stop / (theta * s * b) * dispatch
                + b / (4.0 * params.walk_speed) * lambda
                + params.dwell_per_stop * onboard / b)
                * dx
                * dy;
        }
    }

    fixed + line_terms + area_terms
}
