//! Design of heterogeneous fixed-route feeder bus networks under
//! spatially varying demand.
//!
//! The library models a rectangular service quarter next to a trunk-line
//! terminal. Feeder lines run parallel to the y-axis, collect and
//! distribute patrons at discrete stops, and travel nonstop along the
//! x-axis to the terminal. Line spacing, stop spacing and the two
//! directional headways are continuous functions of position; the solver
//! finds the cost-minimizing functions on a lattice via closed-form
//! coordinate updates inside a fixed-point iteration, then optionally
//! converts the result into an explicit line-and-stop plan and re-costs
//! that plan with a discrete assignment model.
//!
//! Module map:
//! * [`params`] — scalar inputs, agency unit-cost rates, validation.
//! * [`demand`] — demand density fields and lattice aggregates.
//! * [`costmodel`] — generalized-cost evaluation for a lattice design.
//! * [`solver`] — coordinate-optimum updates and the iterative solver.
//! * [`netgen`] — discrete plan generation and assignment-based costing.
//! * [`experiments`] — scenario runner, benchmark design classes, sweeps.
//! * [`config`] — TOML scenario configuration.

pub mod config;
pub mod costmodel;
pub mod demand;
pub mod experiments;
pub mod grid;
pub mod netgen;
pub mod numeric;
pub mod params;
pub mod solver;

pub use costmodel::{Coordination, CostBreakdown, DesignGrid};
pub use demand::{AggregateTables, DemandField, Direction, Spread};
pub use params::{AgencyRates, ModelParams};
pub use solver::{SolveReport, optimize_vehicle_size, solve_design};
