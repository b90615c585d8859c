//! Iterative solver for the lattice design problem.
//!
//! The objective is coordinate-wise convex, so each decision value has a
//! closed-form optimum given the others: square-root expressions clamped
//! into their feasible boxes. The solver alternates a stop-spacing sweep
//! over the whole lattice with an inner fixed-point loop over headways and
//! line spacings until the summed per-lattice changes fall below the
//! tolerance.

use crate::costmodel::{
    generalized_cost, generalized_cost_unchecked, Coordination, CostBreakdown, CostError,
    DesignGrid,
};
use crate::demand::{AggregateTables, DemandError, DemandField, Direction};
use crate::grid::Grid2;
use crate::params::{agency_rates, AgencyRates, ModelParams, ParamError};
use rand::Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Safety cap on outer iterations; convergence normally takes a handful.
pub const OUTER_ITERATION_CAP: usize = 200;
/// Safety cap on inner fixed-point iterations per outer pass.
pub const INNER_ITERATION_CAP: usize = 500;
/// Smallest stop spacing ever produced (km); guards divisions by zero
/// in degenerate parameterizations such as zero dwell loss.
pub const STOP_SPACING_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("stop spacing must be positive at (i={0}, j={1})")]
    NonPositiveStopSpacing(usize, usize),
    #[error("coordination infeasible: {0}")]
    InfeasibleCoordination(String),
    #[error(
        "no convergence within {} outer iterations (residuals S={:.3e}, H={:.3e}, B={:.3e})",
        .report.outer_iterations,
        .report.residual_history.last().map_or(f64::NAN, |r| r.line_spacing),
        .report.residual_history.last().map_or(f64::NAN, |r| r.headways),
        .report.residual_history.last().map_or(f64::NAN, |r| r.stop_spacing),
    )]
    NonConvergence { report: Box<SolveReport> },
    #[error("vehicle size search failed: {0}")]
    SearchFailed(String),
}

/// Per-column rates entering the closed-form updates.
///
/// `bus_rate` is the hourly cost (in hours) of keeping one bus route
/// dispatched at that column: distance cost, moving time, and fixed
/// per-stop dwell, all divided by the value of time. `dwell_col` /
/// `dwell_dist` capture the demand-squared dwell exposure of each
/// direction; `stop_rate` the infrastructure cost per line-km.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRates {
    pub bus_rate: Vec<f64>,
    pub dwell_col: Vec<f64>,
    pub dwell_dist: Vec<f64>,
    pub stop_rate: Vec<f64>,
}

/// Computes the per-column rates for a given stop-spacing table.
pub fn local_rates(
    stop_spacing: &Grid2,
    agg: &AggregateTables,
    rates: &AgencyRates,
    params: &ModelParams,
) -> Result<LocalRates, SolverError> {
    let nx = agg.nx();
    let ny = agg.ny();
    let mut bus_rate = Vec::with_capacity(nx);
    let mut stop_rate = Vec::with_capacity(nx);
    let mut dwell_col = Vec::with_capacity(nx);
    let mut dwell_dist = Vec::with_capacity(nx);
    for i in 0..nx {
        let mut inv_spacing_len = 0.0;
        for j in 0..ny {
            let b = stop_spacing.get(i, j);
            if !(b > 0.0) {
                return Err(SolverError::NonPositiveStopSpacing(i, j));
            }
            inv_spacing_len += agg.cell_dy() / b;
        }
        let line_len = params.region_width + agg.xs()[i];
        bus_rate.push(
            (rates.per_km * line_len
                + rates.per_hour * line_len / params.cruise_speed
                + rates.per_hour * params.dwell_per_stop * inv_spacing_len)
                / params.value_of_time,
        );
        stop_rate.push(params.stop_cost * inv_spacing_len / params.value_of_time);
        let col = agg.column_total(Direction::Collection, i);
        let dist = agg.column_total(Direction::Distribution, i);
        dwell_col.push(
            params.alight_time * col * col
                + 2.0 * params.board_time * agg.dwell_moment(Direction::Collection, i),
        );
        dwell_dist.push(2.0 * params.alight_time * agg.dwell_moment(Direction::Distribution, i));
        let _ = dist;
    }
    Ok(LocalRates { bus_rate, dwell_col, dwell_dist, stop_rate })
}

fn effective_dwell_col(
    local: &LocalRates,
    agg: &AggregateTables,
    params: &ModelParams,
    i: usize,
    coordination: Coordination,
) -> f64 {
    let mut beta = local.dwell_col[i];
    if coordination.collection_coordinated() {
        // coordinated transfers double the terminal alighting loss
        let col = agg.column_total(Direction::Collection, i);
        beta += params.alight_time * col * col;
    }
    beta
}

/// Result of one per-column headway update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadwayUpdate {
    pub col: f64,
    pub dist: f64,
    /// Set when a capacity cap fell below the feasible lower bound, i.e.
    /// the column needs a smaller line spacing before the headway box is
    /// nonempty. The caller's line-spacing update shrinks it.
    pub capacity_pinched: bool,
}

/// Median of three values; the standard projection of an interior optimum
/// into a one-dimensional feasible box.
pub fn mid3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Headway optimum for raw scalar inputs: interior square-root expression
/// projected into `[lower, upper]`, pinned to `lower` when the box is
/// empty. Shared by the lattice updates and per-line plan refinement.
pub fn headway_optimum_raw(
    bus_rate: f64,
    line_spacing: f64,
    demand: f64,
    dwell: f64,
    lower: f64,
    upper: f64,
) -> f64 {
    let denom = line_spacing * (demand + dwell * line_spacing);
    let interior = if denom > 0.0 { (2.0 * bus_rate / denom).sqrt() } else { f64::INFINITY };
    if upper < lower {
        lower
    } else {
        mid3(lower, upper, interior)
    }
}

/// Stop-spacing optimum for raw scalar inputs, clamped to `(0, width]`.
/// `per_stop_cost` bundles the agency cost of one stop and the dwell loss
/// it imposes on the onboard flow.
pub fn stop_spacing_optimum_raw(
    per_stop_cost: f64,
    local_demand: f64,
    walk_speed: f64,
    width: f64,
) -> f64 {
    if !(local_demand > 0.0) {
        return width;
    }
    (4.0 * walk_speed * per_stop_cost / local_demand)
        .sqrt()
        .min(width)
        .max(STOP_SPACING_FLOOR)
}

/// Closed-form headway updates at column `i` for a fixed line spacing.
///
/// Uncoordinated headways are the interior square-root optimum projected
/// into `[lower, min(capacity cap, max)]`. Under collection coordination
/// the headway is restricted to integer multiples of the trunk headway;
/// the two multiples adjacent to the unconstrained optimum are compared
/// exactly. Under distribution coordination the headway is pinned to the
/// trunk headway.
pub fn update_headways(
    i: usize,
    line_spacing: f64,
    local: &LocalRates,
    agg: &AggregateTables,
    params: &ModelParams,
    capacity: u32,
    coordination: Coordination,
) -> HeadwayUpdate {
    debug_assert!(line_spacing > 0.0);
    let cap = f64::from(capacity);
    let alpha = local.bus_rate[i];
    let col = agg.column_total(Direction::Collection, i);
    let dist = agg.column_total(Direction::Distribution, i);
    let beta_col = effective_dwell_col(local, agg, params, i, coordination);
    let mut pinched = false;

    let capacity_cap = |demand: f64| -> f64 {
        if demand > 0.0 {
            cap / (demand * line_spacing)
        } else {
            f64::INFINITY
        }
    };

    let h_col = if coordination.collection_coordinated() {
        let (h, p) = coordinated_collection_headway(
            alpha,
            line_spacing,
            col,
            beta_col,
            capacity_cap(col),
            params,
        );
        pinched |= p;
        h
    } else {
        let lower = params.headway_min;
        let upper = capacity_cap(col).min(params.headway_max);
        if upper < lower {
            pinched = true;
        }
        headway_optimum_raw(alpha, line_spacing, col, beta_col, lower, upper)
    };

    let h_dist = if coordination.distribution_coordinated() {
        if capacity_cap(dist) < params.trunk_headway {
            pinched = true;
        }
        params.trunk_headway
    } else {
        let lower = params.headway_min.max(params.trunk_headway);
        let upper = capacity_cap(dist).min(params.headway_max);
        if upper < lower {
            pinched = true;
        }
        headway_optimum_raw(alpha, line_spacing, dist, local.dwell_dist[i], lower, upper)
    };

    HeadwayUpdate { col: h_col, dist: h_dist, capacity_pinched: pinched }
}

/// Best collection headway restricted to integer trunk multiples: the two
/// multiples adjacent to the unconstrained optimum are compared on the
/// convex headway slice of the objective. Returns the headway and whether
/// the capacity cap squeezed the multiple range empty.
pub(crate) fn coordinated_collection_headway(
    bus_rate: f64,
    line_spacing: f64,
    demand: f64,
    dwell: f64,
    capacity_cap: f64,
    params: &ModelParams,
) -> (f64, bool) {
    let ht = params.trunk_headway;
    let mut pinched = false;
    let k_lo = ((params.headway_min / ht) - 1e-12).ceil().max(1.0);
    let k_bound = ((params.headway_max / ht) + 1e-12).floor();
    let k_cap = ((capacity_cap / ht) + 1e-12).floor().min(k_bound);
    let k_hi = if k_cap < k_lo {
        pinched = true;
        k_lo
    } else {
        k_cap
    };
    let denom = line_spacing * (demand + dwell * line_spacing);
    let target =
        if denom > 0.0 { (2.0 * bus_rate / denom).sqrt() / ht } else { f64::INFINITY };
    let k1 = target.floor().clamp(k_lo, k_hi);
    let k2 = target.ceil().clamp(k_lo, k_hi);
    let slice = |h: f64| bus_rate / (line_spacing * h) + h / 2.0 * (demand + dwell * line_spacing);
    let best = if slice(k1 * ht) <= slice(k2 * ht) { k1 * ht } else { k2 * ht };
    (best, pinched)
}

/// Closed-form line-spacing update at column `i` for fixed headways:
/// the interior square-root optimum capped by both directional capacity
/// terms and clamped to `(0, region_len]`.
pub fn update_line_spacing(
    i: usize,
    h_col: f64,
    h_dist: f64,
    local: &LocalRates,
    agg: &AggregateTables,
    params: &ModelParams,
    capacity: u32,
    coordination: Coordination,
) -> f64 {
    debug_assert!(h_col > 0.0 && h_dist > 0.0);
    let cap = f64::from(capacity);
    let col = agg.column_total(Direction::Collection, i);
    let dist = agg.column_total(Direction::Distribution, i);
    let beta_col = effective_dwell_col(local, agg, params, i, coordination);
    let boarding_scale = if coordination.distribution_coordinated() { 2.0 } else { 1.0 };
    let numerator =
        2.0 * local.bus_rate[i] * (1.0 / h_col + 1.0 / h_dist) + 2.0 * local.stop_rate[i];
    let denominator = (col + dist) / (2.0 * params.walk_speed)
        + boarding_scale * params.board_time * params.trunk_headway * dist * dist
        + beta_col * h_col
        + local.dwell_dist[i] * h_dist;
    let interior = if denominator > 0.0 {
        (numerator / denominator).sqrt()
    } else {
        f64::INFINITY
    };
    let cap_col = if col > 0.0 { cap / (col * h_col) } else { f64::INFINITY };
    let cap_dist = if dist > 0.0 { cap / (dist * h_dist) } else { f64::INFINITY };
    interior.min(cap_col).min(cap_dist).min(params.region_len)
}

/// Closed-form stop-spacing update at cell `(i, j)` for fixed headways and
/// line spacing: balances walking access against per-stop agency cost and
/// the fixed stop loss imposed on the onboard flow. Cells without local
/// demand take the width clamp.
pub fn update_stop_spacing(
    i: usize,
    j: usize,
    line_spacing: f64,
    h_col: f64,
    h_dist: f64,
    agg: &AggregateTables,
    rates: &AgencyRates,
    params: &ModelParams,
) -> f64 {
    debug_assert!(line_spacing > 0.0 && h_col > 0.0 && h_dist > 0.0);
    let local_demand = agg.density(Direction::Collection, i, j)
        + agg.density(Direction::Distribution, i, j);
    let per_stop = (params.stop_cost
        + rates.per_hour * params.dwell_per_stop * (1.0 / h_col + 1.0 / h_dist))
        / (params.value_of_time * line_spacing)
        + params.dwell_per_stop
            * (agg.tail_mid(Direction::Collection, i, j)
                + agg.tail_mid(Direction::Distribution, i, j));
    stop_spacing_optimum_raw(per_stop, local_demand, params.walk_speed, params.region_width)
}

/// Residual sums of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    /// Sum over columns of |change in line spacing|.
    pub line_spacing: f64,
    /// Sum over columns of |change in both headways|.
    pub headways: f64,
    /// Sum over cells of |change in stop spacing|.
    pub stop_spacing: f64,
}

/// Outcome of a solve: the converged (or last) design, its cost

/// breakdown, and iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub design: DesignGrid,
    pub costs: CostBreakdown,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub residual_history: Vec<ResidualEntry>,
    pub wall_time_secs: f64,
}

/// Boundary-feasible spatially uniform starting point: fifteen-minute
/// headways (projected into the coordination scheme), half-kilometre line
/// spacing and 0.4 km stop spacing.
pub fn default_initial_design(
    params: &ModelParams,
    nx: usize,
    ny: usize,
    capacity: u32,
    coordination: Coordination,
) -> DesignGrid {
    let h = 15.0 / 60.0;
    let h_col = project_collection_headway(h, params, coordination);
    let h_dist = if coordination.distribution_coordinated() {
        params.trunk_headway
    } else {
        h.clamp(params.headway_min.max(params.trunk_headway), params.headway_max)
    };
    DesignGrid::uniform(
        nx,
        ny,
        h_col,
        h_dist,
        0.5_f64.min(params.region_len),
        0.4_f64.min(params.region_width),
        capacity,
        coordination,
    )
}

/// Random boundary-feasible starting point for multi-start experiments.
pub fn random_initial_design(
    params: &ModelParams,
    nx: usize,
    ny: usize,
    capacity: u32,
    coordination: Coordination,
    seed: u64,
) -> DesignGrid {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h_lo = params.headway_min;
    let h_hi = params.headway_max;
    let hd_lo = params.headway_min.max(params.trunk_headway);
    let headway_col: Vec<f64> = (0..nx)
        .map(|_| project_collection_headway(rng.random_range(h_lo..=h_hi), params, coordination))
        .collect();
    let headway_dist: Vec<f64> = (0..nx)
        .map(|_| {
            if coordination.distribution_coordinated() {
                params.trunk_headway
            } else {
                rng.random_range(hd_lo..=h_hi)
            }
        })
        .collect();
    let line_spacing: Vec<f64> = (0..nx)
        .map(|_| rng.random_range(0.02 * params.region_len..=params.region_len))
        .collect();
    let stop_spacing =
        Grid2::from_fn(nx, ny, |_, _| rng.random_range(0.02 * params.region_width..=params.region_width));
    DesignGrid {
        headway_col,
        headway_dist,
        line_spacing,
        stop_spacing,
        capacity,
        coordination,
    }
}

fn project_collection_headway(h: f64, params: &ModelParams, coordination: Coordination) -> f64 {
    if coordination.collection_coordinated() {
        let ht = params.trunk_headway;
        let k_lo = ((params.headway_min / ht) - 1e-12).ceil().max(1.0);
        let k_hi = ((params.headway_max / ht) + 1e-12).floor().max(k_lo);
        (h / ht).round().clamp(k_lo, k_hi) * ht
    } else {
        h.clamp(params.headway_min, params.headway_max)
    }
}

fn check_coordination_feasible(
    params: &ModelParams,
    coordination: Coordination,
) -> Result<(), SolverError> {
    if coordination.collection_coordinated() && params.trunk_headway > params.headway_max {
        return Err(SolverError::InfeasibleCoordination(format!(
            "trunk headway {} exceeds the maximum feeder headway {}; no integer multiple fits",
            params.trunk_headway, params.headway_max
        )));
    }
    if coordination.distribution_coordinated()
        && (params.trunk_headway > params.headway_max || params.trunk_headway < params.headway_min)
    {
        return Err(SolverError::InfeasibleCoordination(format!(
            "distribution coordination pins headways to {} outside [{}, {}]",
            params.trunk_headway, params.headway_min, params.headway_max
        )));
    }
    Ok(())
}

/// Solves the design problem for a demand field on the lattice configured
/// in `params`. See [`solve_with_aggregates`] for details.
pub fn solve_design(
    params: &ModelParams,
    field: &DemandField,
    rates: &AgencyRates,
    capacity: u32,
    coordination: Coordination,
    initial: Option<DesignGrid>,
) -> Result<SolveReport, SolverError> {
    params.validate()?;
    let agg = field.aggregates(params.lattice_nx, params.lattice_ny)?;
    solve_with_aggregates(params, &agg, rates, capacity, coordination, initial)
}

/// Core iteration on precomputed aggregates.
///
/// Alternates a full stop-spacing sweep with an inner headway/line-spacing
/// fixed point until the summed absolute changes drop below the tolerance
/// (`nx * eps` for spacings, `2 nx * eps` for headways, `nx * ny * eps`
/// for the stop table). Errors with the partial report when the outer cap
/// is hit.
pub fn solve_with_aggregates(
    params: &ModelParams,
    agg: &AggregateTables,
    rates: &AgencyRates,
    capacity: u32,
    coordination: Coordination,
    initial: Option<DesignGrid>,
) -> Result<SolveReport, SolverError> {
    check_coordination_feasible(params, coordination)?;
    let started = std::time::Instant::now();
    let nx = agg.nx();
    let ny = agg.ny();
    let eps = params.tolerance;

    let init = initial
        .unwrap_or_else(|| default_initial_design(params, nx, ny, capacity, coordination));
    let mut h_col = init.headway_col.clone();
    let mut h_dist = init.headway_dist.clone();
    let mut spacing = init.line_spacing.clone();
    let mut stops = init.stop_spacing.clone();

    let mut history: Vec<ResidualEntry> = Vec::new();
    let mut inner_total = 0usize;
    let mut converged = false;

    for _outer in 0..OUTER_ITERATION_CAP {
        // stop-spacing sweep with the previous headways and spacings
        let new_stops = Grid2::from_fn(nx, ny, |i, j| {
            update_stop_spacing(i, j, spacing[i], h_col[i], h_dist[i], agg, rates, params)
        });
        let stop_residual = new_stops.abs_diff_sum(&stops);
        stops = new_stops;

        let local = local_rates(&stops, agg, rates, params)?;

        // inner fixed point over headways and line spacings
        let (prev_h_col, prev_h_dist, prev_spacing) =
            (h_col.clone(), h_dist.clone(), spacing.clone());
        let mut tilde_spacing = spacing.clone();
        let mut tilde_h_col = h_col.clone();
        let mut tilde_h_dist = h_dist.clone();
        for _inner in 0..INNER_ITERATION_CAP {
            inner_total += 1;
            let mut h_residual = 0.0;
            let mut s_residual = 0.0;
            for i in 0..nx {
                let upd = update_headways(
                    i,
                    tilde_spacing[i],
                    &local,
                    agg,
                    params,
                    capacity,
                    coordination,
                );
                h_residual +=
                    (upd.col - tilde_h_col[i]).abs() + (upd.dist - tilde_h_dist[i]).abs();
                tilde_h_col[i] = upd.col;
                tilde_h_dist[i] = upd.dist;
                let s = update_line_spacing(
                    i,
                    upd.col,
                    upd.dist,
                    &local,
                    agg,
                    params,
                    capacity,
                    coordination,
                );
                s_residual += (s - tilde_spacing[i]).abs();
                tilde_spacing[i] = s;
            }
            if s_residual <= nx as f64 * eps && h_residual <= 2.0 * nx as f64 * eps {
                break;
            }
        }
        h_col = tilde_h_col;
        h_dist = tilde_h_dist;
        spacing = tilde_spacing;

        let spacing_residual: f64 =
            spacing.iter().zip(&prev_spacing).map(|(a, b)| (a - b).abs()).sum();
        let headway_residual: f64 = h_col
            .iter()
            .zip(&prev_h_col)
            .map(|(a, b)| (a - b).abs())
            .chain(h_dist.iter().zip(&prev_h_dist).map(|(a, b)| (a - b).abs()))
            .sum();
        history.push(ResidualEntry {
            line_spacing: spacing_residual,
            headways: headway_residual,
            stop_spacing: stop_residual,
        });
        if spacing_residual <= nx as f64 * eps
            && headway_residual <= 2.0 * nx as f64 * eps
            && stop_residual <= (nx * ny) as f64 * eps
        {
            converged = true;
            break;
        }
    }

    let design = DesignGrid {
        headway_col: h_col,
        headway_dist: h_dist,
        line_spacing: spacing,
        stop_spacing: stops,
        capacity,
        coordination,
    };
    let outer_iterations = history.len();
    if converged {
        let costs = generalized_cost(&design, agg, rates, params)?;
        Ok(SolveReport {
            design,
            costs,
            converged: true,
            outer_iterations,
            inner_iterations: inner_total,
            residual_history: history,
            wall_time_secs: started.elapsed().as_secs_f64(),
        })
    } else {
        let costs = generalized_cost_unchecked(&design, agg, rates, params);
        Err(SolverError::NonConvergence {
            report: Box::new(SolveReport {
                design,
                costs,
                converged: false,
                outer_iterations,
                inner_iterations: inner_total,
                residual_history: history,
                wall_time_secs: started.elapsed().as_secs_f64(),
            }),
        })
    }
}

/// Exhaustive vehicle-size search over the configured capacity range.
///
/// Solves every integer capacity with its own unit-cost rates and returns
/// the feasible solution with the lowest generalized cost; ties break
/// toward the smaller vehicle. Capacities whose solve fails are skipped;
/// an error is returned only when every capacity fails.
pub fn optimize_vehicle_size(
    params: &ModelParams,
    field: &DemandField,
    coordination: Coordination,
) -> Result<(u32, SolveReport), SolverError> {
    params.validate()?;
    let agg = field.aggregates(params.lattice_nx, params.lattice_ny)?;
    optimize_vehicle_size_with_aggregates(params, &agg, coordination)
}

/// Vehicle-size search on precomputed aggregates.
pub fn optimize_vehicle_size_with_aggregates(
    params: &ModelParams,
    agg: &AggregateTables,
    coordination: Coordination,
) -> Result<(u32, SolveReport), SolverError> {
    let candidates: Vec<u32> = (params.capacity_min..=params.capacity_max).collect();
    let mut results: Vec<(u32, Result<SolveReport, SolverError>)> = candidates
        .par_iter()
        .map(|&capacity| {
            let run = agency_rates(capacity, params.value_of_time)
                .map_err(SolverError::from)
                .and_then(|rates| {
                    solve_with_aggregates(params, agg, &rates, capacity, coordination, None)
                });
            (capacity, run)
        })
        .collect();

    let mut best: Option<(u32, SolveReport)> = None;
    let mut failures = 0usize;
    let mut last_error = None;
    results.sort_by_key(|(capacity, _)| *capacity);
    for (capacity, outcome) in results {
        match outcome {
            Ok(report) => {
                let better = match &best {
                    None => true,
                    Some((_, incumbent)) => {
                        report.costs.generalized < incumbent.costs.generalized
                    }
                };
                if better {
                    best = Some((capacity, report));
                }
            }
            Err(err) => {
                failures += 1;
                last_error = Some(err.to_string());
            }
        }
    }
    match best {
        Some(found) => Ok(found),
        None => Err(SolverError::SearchFailed(format!(
            "all {failures} capacities failed; last error: {}",
            last_error.unwrap_or_else(|| "none".into())
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{Marginal, Spread};

    fn case_params() -> ModelParams {
        ModelParams::default()
    }

    fn case_field() -> DemandField {
        DemandField::product(
            1200.0,
            Marginal::new(0.0, Spread::StdDev(0.75)),
            Marginal::new(0.0, Spread::StdDev(0.5)),
            1200.0,
            Marginal::new(0.0, Spread::StdDev(0.75)),
            Marginal::new(0.0, Spread::StdDev(0.5)),
            3.0,
            2.0,
            0.3,
        )
        .unwrap()
    }

    fn zero_field() -> DemandField {
        DemandField::product(
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            3.0,
            2.0,
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn mid3_is_the_median() {
        assert_eq!(mid3(1.0, 3.0, 2.0), 2.0);
        assert_eq!(mid3(1.0, 3.0, 0.5), 1.0);
        assert_eq!(mid3(1.0, 3.0, 9.0), 3.0);
        assert_eq!(mid3(3.0, 1.0, 2.0), 2.0);
        assert_eq!(mid3(2.0, 2.0, 5.0), 2.0);
    }

    #[test]
    fn local_rates_zero_stop_cost_zeroes_gamma() {
        let p = case_params();
        let agg = case_field().aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let stops = Grid2::filled(20, 30, 0.4);
        let local = local_rates(&stops, &agg, &rates, &p).unwrap();
        assert!(local.stop_rate.iter().all(|&g| g == 0.0));
        assert!(local.bus_rate.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn local_rates_dwell_free_patrons_zero_betas() {
        let mut p = case_params();
        p.alight_time = 0.0;
        p.board_time = 0.0;
        let agg = case_field().aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let local = local_rates(&Grid2::filled(20, 30, 0.4), &agg, &rates, &p).unwrap();
        assert!(local.dwell_col.iter().all(|&b| b == 0.0));
        assert!(local.dwell_dist.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn local_rates_match_uniform_closed_form() {
        // uniform collection-only demand of density c: column total cW and
        // dwell moment c^2 W^2 / 2 give beta_col = (alight + board) (cW)^2
        let p = case_params();
        let c = 40.0;
        let f = DemandField::product(
            c * 6.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            3.0,
            2.0,
            0.0,
        )
        .unwrap();
        let agg = f.aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let local = local_rates(&Grid2::filled(20, 30, 0.4), &agg, &rates, &p).unwrap();
        let expected = (p.alight_time + p.board_time) * (c * 2.0) * (c * 2.0);
        for i in 0..20 {
            assert!((local.dwell_col[i] - expected).abs() < 1e-6);
            assert_eq!(local.dwell_dist[i], 0.0);
        }
    }

    #[test]
    fn local_rates_reject_nonpositive_stop_spacing() {
        let p = case_params();
        let agg = case_field().aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let mut stops = Grid2::filled(20, 30, 0.4);
        stops.set(3, 7, 0.0);
        assert!(matches!(
            local_rates(&stops, &agg, &rates, &p),
            Err(SolverError::NonPositiveStopSpacing(3, 7))
        ));
    }

    #[test]
    fn headway_clamps_at_bounds_for_degenerate_demand() {
        let p = case_params();
        let agg = zero_field().aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let local = local_rates(&Grid2::filled(20, 30, 0.4), &agg, &rates, &p).unwrap();
        let upd = update_headways(5, 0.5, &local, &agg, &p, 10, Coordination::None);
        // zero demand: interior optima diverge, both directions sit at the cap
        assert_eq!(upd.col, p.headway_max);
        assert_eq!(upd.dist, p.headway_max);
        assert!(!upd.capacity_pinched);
    }

    #[test]
    fn headway_box_empty_pins_to_lower_bound() {
        let p = case_params();
        let agg = case_field().aggregates(20, 30).unwrap();
        let rates = agency_rates(4, p.value_of_time).unwrap();
        let local = local_rates(&Grid2::filled(20, 30, 0.4), &agg, &rates, &p).unwrap();
        // giant spacing at a high-demand column: capacity cap below h_min
        let upd = update_headways(2, 3.0, &local, &agg, &p, 4, Coordination::None);
        assert!(upd.capacity_pinched);
        assert_eq!(upd.col, p.headway_min);
        assert_eq!(upd.dist, p.headway_min.max(p.trunk_headway));
    }

    #[test]
    fn line_spacing_clamps_to_region_len_without_demand() {
        let p = case_params();
        let agg = zero_field().aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let local = local_rates(&Grid2::filled(20, 30, 0.4), &agg, &rates, &p).unwrap();
        let s = update_line_spacing(7, 0.5, 0.5, &local, &agg, &p, 10, Coordination::None);
        assert_eq!(s, p.region_len);
    }

    #[test]
    fn line_spacing_capacity_cap_binds_under_heavy_demand() {
        let p = case_params();
        // demand heavy enough that the capacity term is the smallest branch
        let f = case_field().with_product_totals(20_000.0, 20_000.0);
        let agg = f.aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let local = local_rates(&Grid2::filled(20, 30, 0.2), &agg, &rates, &p).unwrap();
        let (hp, hd) = (p.headway_min, p.headway_min.max(p.trunk_headway));
        let s = update_line_spacing(2, hp, hd, &local, &agg, &p, 10, Coordination::None);
        let cap_col = 10.0 / (agg.column_total(Direction::Collection, 2) * hp);
        let cap_dist = 10.0 / (agg.column_total(Direction::Distribution, 2) * hd);
        assert!((s - cap_col.min(cap_dist)).abs() < 1e-12);
    }

    #[test]
    fn stop_spacing_clamps_to_width_without_local_demand() {
        let p = case_params();
        let agg = case_field().aggregates(20, 30).unwrap();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        // cell (0, 0) lies inside the walking zone: no local demand
        let b = update_stop_spacing(0, 0, 0.5, 0.2, 0.2, &agg, &rates, &p);
        assert_eq!(b, p.region_width);
    }

    #[test]
    fn solve_zero_demand_hits_all_clamps_immediately() {
        let p = case_params();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let report =
            solve_design(&p, &zero_field(), &rates, 10, Coordination::None, None).unwrap();
        assert!(report.converged);
        for i in 0..p.lattice_nx {
            assert_eq!(report.design.headway_col[i], p.headway_max);
            assert_eq!(report.design.headway_dist[i], p.headway_max);
            assert_eq!(report.design.line_spacing[i], p.region_len);
        }
        assert!(report
            .design
            .stop_spacing
            .values()
            .iter()
            .all(|&b| b == p.region_width));
        assert!(report.costs.user == 0.0);
    }

    #[test]
    fn solve_is_deterministic() {
        let p = case_params();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let a = solve_design(&p, &case_field(), &rates, 10, Coordination::None, None).unwrap();
        let b = solve_design(&p, &case_field(), &rates, 10, Coordination::None, None).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.costs, b.costs);
    }

    #[test]
    fn reapplying_updates_to_converged_design_is_a_fixed_point() {
        let p = case_params();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let agg = case_field().aggregates(p.lattice_nx, p.lattice_ny).unwrap();
        let report =
            solve_with_aggregates(&p, &agg, &rates, 10, Coordination::None, None).unwrap();
        let d = &report.design;
        let local = local_rates(&d.stop_spacing, &agg, &rates, &p).unwrap();
        for i in 0..agg.nx() {
            let upd =
                update_headways(i, d.line_spacing[i], &local, &agg, &p, 10, Coordination::None);
            assert!((upd.col - d.headway_col[i]).abs() < 50.0 * p.tolerance);
            assert!((upd.dist - d.headway_dist[i]).abs() < 50.0 * p.tolerance);
            let s = update_line_spacing(
                i,
                upd.col,
                upd.dist,
                &local,
                &agg,
                &p,
                10,
                Coordination::None,
            );
            assert!((s - d.line_spacing[i]).abs() < 50.0 * p.tolerance);
        }
    }

    #[test]
    fn converged_design_respects_all_bounds() {
        let p = case_params();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let report =
            solve_design(&p, &case_field(), &rates, 10, Coordination::None, None).unwrap();
        let d = report.design;
        for i in 0..p.lattice_nx {
            assert!(d.headway_col[i] >= p.headway_min && d.headway_col[i] <= p.headway_max);
            assert!(d.headway_dist[i] >= p.trunk_headway && d.headway_dist[i] <= p.headway_max);
            assert!(d.line_spacing[i] > 0.0 && d.line_spacing[i] <= p.region_len);
        }
        assert!(d
            .stop_spacing
            .values()
            .iter()
            .all(|&b| b > 0.0 && b <= p.region_width));
    }

    #[test]
    fn coordination_constraints_hold_exactly_at_solution() {
        let p = case_params();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let report =
            solve_design(&p, &case_field(), &rates, 10, Coordination::Both, None).unwrap();
        for i in 0..p.lattice_nx {
            let k = report.design.headway_col[i] / p.trunk_headway;
            assert!((k - k.round()).abs() < 1e-9 && k.round() >= 1.0);
            assert_eq!(report.design.headway_dist[i], p.trunk_headway);
        }
    }

    #[test]
    fn scaling_demand_up_never_raises_interior_collection_headways() {
        let p = case_params();
        let rates = agency_rates(10, p.value_of_time).unwrap();
        let base =
            solve_design(&p, &case_field(), &rates, 10, Coordination::None, None).unwrap();
        let doubled = case_field().with_product_totals(2400.0, 2400.0);
        let heavy = solve_design(&p, &doubled, &rates, 10, Coordination::None, None).unwrap();
        for i in 0..p.lattice_nx {
            let was_clamped = base.design.headway_col[i] >= p.headway_max - 1e-9
                || base.design.headway_col[i] <= p.headway_min + 1e-9;
            if !was_clamped {
                assert!(
                    heavy.design.headway_col[i] <= base.design.headway_col[i] + 1e-6,
                    "headway rose at column {i}"
                );
            }
        }
    }

    #[test]
    fn infeasible_coordination_is_reported() {
        let mut p = case_params();
        p.trunk_headway = 0.6; // beyond headway_max
        let rates = agency_rates(10, p.value_of_time).unwrap();
        assert!(matches!(
            solve_design(&p, &case_field(), &rates, 10, Coordination::Both, None),
            Err(SolverError::InfeasibleCoordination(_))
        ));
    }

    #[test]
    fn vehicle_search_returns_smaller_capacity_on_ties() {
        // zero demand: the cost is increasing in capacity through the rates,
        // so the search must return the smallest capacity
        let mut p = case_params();
        p.capacity_min = 4;
        p.capacity_max = 8;
        let (k, _) = optimize_vehicle_size(&p, &zero_field(), Coordination::None).unwrap();
        assert_eq!(k, 4);
    }
}
