//! Demand density fields over the service quarter and their lattice
//! aggregates.
//!
//! A field carries one density surface per travel direction: collection
//! (origins heading to the terminal) and distribution (trips leaving the
//! terminal). Patrons whose origin or destination lies within the
//! Manhattan walking radius of the terminal walk instead, so the field
//! evaluates to zero there and every aggregate excludes that demand.

use crate::grid::Grid2;
use libm::erf;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("point ({0}, {1}) lies outside the service region")]
    OutOfDomain(f64, f64),
}

/// Travel direction of a demand surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Origins spread over the region, destination at the terminal.
    Collection,
    /// Origin at the terminal, destinations spread over the region.
    Distribution,
}

/// Dispersion of a one-dimensional marginal. `Uniform` is the flat limit
/// of the truncated normal and is kept as an explicit marker instead of a
/// large standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spread {
    StdDev(f64),
    Uniform,
}

impl Serialize for Spread {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Spread::StdDev(v) => s.serialize_f64(*v),
            Spread::Uniform => s.serialize_str("uniform"),
        }
    }
}

impl<'de> Deserialize<'de> for Spread {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Spread::StdDev(v)),
            Raw::Text(t) if t.eq_ignore_ascii_case("uniform") || t == "inf" => Ok(Spread::Uniform),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"uniform\", got \"{t}\""
            ))),
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Density of a normal distribution truncated to `[lo, hi]`, evaluated at
/// `x`. Integrates to one over the support and vanishes outside it.
/// `Spread::Uniform` yields the flat density `1 / (hi - lo)`.
pub fn trunc_normal_pdf(
    x: f64,
    mean: f64,
    spread: Spread,
    lo: f64,
    hi: f64,
) -> Result<f64, DemandError> {
    if !(lo < hi) {
        return Err(DemandError::Invalid(format!(
            "support must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    if x < lo || x > hi {
        return Ok(0.0);
    }
    match spread {
        Spread::Uniform => Ok(1.0 / (hi - lo)),
        Spread::StdDev(sd) => {
            if !(sd > 0.0) {
                return Err(DemandError::Invalid(format!(
                    "standard deviation must be > 0, got {sd}"
                )));
            }
            let mass = std_normal_cdf((hi - mean) / sd) - std_normal_cdf((lo - mean) / sd);
            if mass <= 0.0 {
                return Err(DemandError::Invalid(format!(
                    "truncated support [{lo}, {hi}] carries no probability mass \
                     for mean {mean}, sd {sd}"
                )));
            }
            Ok(std_normal_pdf((x - mean) / sd) / (sd * mass))
        }
    }
}

/// One-dimensional marginal of a product-form demand surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub mean: f64,
    pub spread: Spread,
}

impl Marginal {
    pub fn new(mean: f64, spread: Spread) -> Self {
        Self { mean, spread }
    }

    fn pdf(&self, x: f64, lo: f64, hi: f64) -> Result<f64, DemandError> {
        trunc_normal_pdf(x, self.mean, self.spread, lo, hi)
    }
}

/// Density surface of a single direction, before walking-zone exclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DirectionSpec {
    /// Product of two truncated-normal marginals scaled by the hourly total.
    Product { total: f64, along_len: Marginal, along_width: Marginal },
    /// Tabulated samples with bilinear interpolation; coordinates are
    /// clamped into the sample hull, extending edge values to the region
    /// boundary. `values` are patrons/km^2/h at `(xs[i], ys[j])`.
    Tabulated { xs: Vec<f64>, ys: Vec<f64>, values: Grid2 },
}

impl DirectionSpec {
    fn raw_density(&self, x: f64, y: f64, len: f64, width: f64) -> Result<f64, DemandError> {
        match self {
            DirectionSpec::Product { total, along_len, along_width } => {
                Ok(total * along_len.pdf(x, 0.0, len)? * along_width.pdf(y, 0.0, width)?)
            }
            DirectionSpec::Tabulated { xs, ys, values } => {
                Ok(bilinear(xs, ys, values, x, y))
            }
        }
    }

    fn validate(&self, len: f64, width: f64) -> Result<(), DemandError> {
        match self {
            DirectionSpec::Product { total, along_len, along_width } => {
                if !(*total >= 0.0) {
                    return Err(DemandError::Invalid(format!(
                        "direction total must be >= 0, got {total}"
                    )));
                }
                along_len.pdf(0.0, 0.0, len)?;
                along_width.pdf(0.0, 0.0, width)?;
                Ok(())
            }
            DirectionSpec::Tabulated { xs, ys, values } => {
                if xs.len() < 2 || ys.len() < 2 {
                    return Err(DemandError::Invalid(
                        "tabulated demand needs at least a 2x2 sample grid".into(),
                    ));
                }
                if xs.len() != values.nx() || ys.len() != values.ny() {
                    return Err(DemandError::Invalid(
                        "tabulated demand sample dimensions do not match values".into(),
                    ));
                }
                for w in xs.windows(2).chain(ys.windows(2)) {
                    if !(w[1] > w[0]) {
                        return Err(DemandError::Invalid(
                            "tabulated demand coordinates must be strictly increasing".into(),
                        ));
                    }
                }
                if values.values().iter().any(|v| !(*v >= 0.0)) {
                    return Err(DemandError::Invalid(
                        "tabulated demand densities must be nonnegative".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

fn bilinear(xs: &[f64], ys: &[f64], values: &Grid2, x: f64, y: f64) -> f64 {
    let locate = |grid: &[f64], v: f64| -> (usize, f64) {
        let v = v.clamp(grid[0], grid[grid.len() - 1]);
        let k = grid.partition_point(|g| *g <= v).min(grid.len() - 1).max(1) - 1;
        let t = (v - grid[k]) / (grid[k + 1] - grid[k]);
        (k, t.clamp(0.0, 1.0))
    };
    let (i, tx) = locate(xs, x);
    let (j, ty) = locate(ys, y);
    let v00 = values.get(i, j);
    let v10 = values.get(i + 1, j);
    let v01 = values.get(i, j + 1);
    let v11 = values.get(i + 1, j + 1);
    v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
}

/// Per-direction demand densities over the quarter region, with the
/// walking-zone exclusion applied on evaluation. Immutable and cheap to
/// share; evaluation is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandField {
    collection: DirectionSpec,
    distribution: DirectionSpec,
    region_len: f64,
    region_width: f64,
    walk_radius: f64,
}

impl DemandField {
    pub fn new(
        collection: DirectionSpec,
        distribution: DirectionSpec,
        region_len: f64,
        region_width: f64,
        walk_radius: f64,
    ) -> Result<Self, DemandError> {
        if !(region_len > 0.0) || !(region_width > 0.0) {
            return Err(DemandError::Invalid("region dimensions must be positive".into()));
        }
        if !(walk_radius >= 0.0) {
            return Err(DemandError::Invalid("walk radius must be >= 0".into()));
        }
        collection.validate(region_len, region_width)?;
        distribution.validate(region_len, region_width)?;
        Ok(Self { collection, distribution, region_len, region_width, walk_radius })
    }

    /// Product-form field with identical structure in both directions.
    #[allow(clippy::too_many_arguments)]
    pub fn product(
        collection_total: f64,
        collection_x: Marginal,
        collection_y: Marginal,
        distribution_total: f64,
        distribution_x: Marginal,
        distribution_y: Marginal,
        region_len: f64,
        region_width: f64,
        walk_radius: f64,
    ) -> Result<Self, DemandError> {
        Self::new(
            DirectionSpec::Product {
                total: collection_total,
                along_len: collection_x,
                along_width: collection_y,
            },
            DirectionSpec::Product {
                total: distribution_total,
                along_len: distribution_x,
                along_width: distribution_y,
            },
            region_len,
            region_width,
            walk_radius,
        )
    }

    pub fn region_len(&self) -> f64 {
        self.region_len
    }

    pub fn region_width(&self) -> f64 {
        self.region_width
    }

    pub fn walk_radius(&self) -> f64 {
        self.walk_radius
    }

    /// Density (patrons/km^2/h) at a point, zero inside the walking zone.
    pub fn density(&self, dir: Direction, x: f64, y: f64) -> Result<f64, DemandError> {
        if x < 0.0 || x > self.region_len || y < 0.0 || y > self.region_width {
            return Err(DemandError::OutOfDomain(x, y));
        }
        if x + y <= self.walk_radius {
            return Ok(0.0);
        }
        let spec = match dir {
            Direction::Collection => &self.collection,
            Direction::Distribution => &self.distribution,
        };
        spec.raw_density(x, y, self.region_len, self.region_width)
    }

    /// The same field with the two axes swapped: lines of the transposed
    /// field run along the original x-axis.
    pub fn transposed(&self) -> Self {
        let swap = |spec: &DirectionSpec| match spec {
            DirectionSpec::Product { total, along_len, along_width } => DirectionSpec::Product {
                total: *total,
                along_len: *along_width,
                along_width: *along_len,
            },
            DirectionSpec::Tabulated { xs, ys, values } => {
                let t = Grid2::from_fn(ys.len(), xs.len(), |j, i| values.get(i, j));
                DirectionSpec::Tabulated { xs: ys.clone(), ys: xs.clone(), values: t }
            }
        };
        Self {
            collection: swap(&self.collection),
            distribution: swap(&self.distribution),
            region_len: self.region_width,
            region_width: self.region_len,
            walk_radius: self.walk_radius,
        }
    }

    /// Geometrically rescaled field: coordinates stretch by `(fx, fy)`
    /// and both direction totals multiply by `total_scale`.
    pub fn rescaled(&self, fx: f64, fy: f64, total_scale: f64) -> Self {
        let scale = |spec: &DirectionSpec| match spec {
            DirectionSpec::Product { total, along_len, along_width } => DirectionSpec::Product {
                total: total * total_scale,
                along_len: Marginal {
                    mean: along_len.mean * fx,
                    spread: match along_len.spread {
                        Spread::StdDev(s) => Spread::StdDev(s * fx),
                        Spread::Uniform => Spread::Uniform,
                    },
                },
                along_width: Marginal {
                    mean: along_width.mean * fy,
                    spread: match along_width.spread {
                        Spread::StdDev(s) => Spread::StdDev(s * fy),
                        Spread::Uniform => Spread::Uniform,
                    },
                },
            },
            DirectionSpec::Tabulated { xs, ys, values } => DirectionSpec::Tabulated {
                xs: xs.iter().map(|v| v * fx).collect(),
                ys: ys.iter().map(|v| v * fy).collect(),
                values: values.map(|v| v * total_scale / (fx * fy)),
            },
        };
        Self {
            collection: scale(&self.collection),
            distribution: scale(&self.distribution),
            region_len: self.region_len * fx,
            region_width: self.region_width * fy,
            walk_radius: self.walk_radius,
        }
    }

    /// Both direction densities multiplied so the per-direction totals
    /// become `collection_total` and `distribution_total` before exclusion.
    pub fn with_product_totals(&self, collection_total: f64, distribution_total: f64) -> Self {
        let set = |spec: &DirectionSpec, new_total: f64| match spec {
            DirectionSpec::Product { along_len, along_width, .. } => DirectionSpec::Product {
                total: new_total,
                along_len: *along_len,
                along_width: *along_width,
            },
            DirectionSpec::Tabulated { xs, ys, values } => {
                // integrate by trapezoid to learn the current total
                let mut total = 0.0;
                for i in 0..xs.len() - 1 {
                    for j in 0..ys.len() - 1 {
                        let cell = (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
                        let avg = 0.25
                            * (values.get(i, j)
                                + values.get(i + 1, j)
                                + values.get(i, j + 1)
                                + values.get(i + 1, j + 1));
                        total += cell * avg;
                    }
                }
                let f = if total > 0.0 { new_total / total } else { 0.0 };
                DirectionSpec::Tabulated {
                    xs: xs.clone(),
                    ys: ys.clone(),
                    values: values.map(|v| v * f),
                }
            }
        };
        Self {
            collection: set(&self.collection, collection_total),
            distribution: set(&self.distribution, distribution_total),
            region_len: self.region_len,
            region_width: self.region_width,
            walk_radius: self.walk_radius,
        }
    }

    /// Midpoint-lattice aggregates on an `nx * ny` lattice.
    ///
    /// Cells cut by the walking-zone boundary contribute in proportion to
    /// their uncovered area, which keeps the aggregate totals stable under
    /// lattice refinement despite the density discontinuity.
    pub fn aggregates(&self, nx: usize, ny: usize) -> Result<AggregateTables, DemandError> {
        assert!(nx >= 2 && ny >= 2, "lattice must be at least 2x2");
        let dx = self.region_len / nx as f64;
        let dy = self.region_width / ny as f64;
        let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
        let ys: Vec<f64> = (0..ny).map(|j| (j as f64 + 0.5) * dy).collect();

        let mut col_density = Grid2::filled(nx, ny, 0.0);
        let mut dist_density = Grid2::filled(nx, ny, 0.0);
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                let cover = uncovered_fraction(
                    x - 0.5 * dx,
                    x + 0.5 * dx,
                    y - 0.5 * dy,
                    y + 0.5 * dy,
                    self.walk_radius,
                );
                if cover == 0.0 {
                    continue;
                }
                let p = self.collection.raw_density(x, y, self.region_len, self.region_width)?;
                let d = self.distribution.raw_density(x, y, self.region_len, self.region_width)?;
                col_density.set(i, j, p * cover);
                dist_density.set(i, j, d * cover);
            }
        }
        Ok(AggregateTables::build(xs, ys, dx, dy, col_density, dist_density))
    }
}

/// Fraction of the axis-aligned cell `[x0,x1] x [y0,y1]` lying outside the
/// Manhattan ball `x + y <= radius` (first quadrant).
fn uncovered_fraction(x0: f64, x1: f64, y0: f64, y1: f64, radius: f64) -> f64 {
    if x0 + y0 >= radius {
        return 1.0;
    }
    if x1 + y1 <= radius {
        return 0.0;
    }
    // Clip the half-plane x + y <= radius against the cell and measure
    // the clipped polygon area (Sutherland-Hodgman with one plane).
    let corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    let mut poly: Vec<(f64, f64)> = Vec::with_capacity(5);
    for k in 0..4 {
        let p = corners[k];
        let q = corners[(k + 1) % 4];
        let p_in = p.0 + p.1 <= radius;
        let q_in = q.0 + q.1 <= radius;
        if p_in {
            poly.push(p);
        }
        if p_in != q_in {
            let t = (radius - p.0 - p.1) / ((q.0 + q.1) - (p.0 + p.1));
            poly.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    if poly.len() < 3 {
        return 1.0;
    }
    let mut twice_area = 0.0;
    for k in 0..poly.len() {
        let (ax, ay) = poly[k];
        let (bx, by) = poly[(k + 1) % poly.len()];
        twice_area += ax * by - bx * ay;
    }
    let covered = 0.5 * twice_area.abs();
    (1.0 - covered / ((x1 - x0) * (y1 - y0))).clamp(0.0, 1.0)
}

/// Lattice-sampled demand aggregates consumed by the cost model and the
/// solver. All quantities use midpoint sums of the exclusion-weighted
/// densities; onboard tails are stored at cell edges so that the tail at
/// the region base equals the column total exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTables {
    xs: Vec<f64>,
    ys: Vec<f64>,
    cell_dx: f64,
    cell_dy: f64,
    col_density: Grid2,
    dist_density: Grid2,
    /// Onboard tails at cell edges, `(nx, ny + 1)`; edge `j` sits at `y = j * dy`.
    col_tail_edges: Grid2,
    dist_tail_edges: Grid2,
    col_x: Vec<f64>,
    dist_x: Vec<f64>,
    col_y: Vec<f64>,
    dist_y: Vec<f64>,
    col_dwell: Vec<f64>,
    dist_dwell: Vec<f64>,
    total_collection: f64,
    total_distribution: f64,
}

impl AggregateTables {
    fn build(
        xs: Vec<f64>,
        ys: Vec<f64>,
        cell_dx: f64,
        cell_dy: f64,
        col_density: Grid2,
        dist_density: Grid2,
    ) -> Self {
        let nx = xs.len();
        let ny = ys.len();
        let column_sums = |g: &Grid2| -> Vec<f64> {
            (0..nx).map(|i| g.column(i).iter().sum::<f64>() * cell_dy).collect()
        };
        let row_sums = |g: &Grid2| -> Vec<f64> {
            (0..ny).map(|j| (0..nx).map(|i| g.get(i, j)).sum::<f64>() * cell_dx).collect()
        };
        let tails = |g: &Grid2| -> Grid2 {
            let mut edges = Grid2::filled(nx, ny + 1, 0.0);
            for i in 0..nx {
                let mut acc = 0.0;
                for j in (0..ny).rev() {
                    acc += g.get(i, j) * cell_dy;
                    edges.set(i, j, acc);
                }
            }
            edges
        };
        let col_tail_edges = tails(&col_density);
        let dist_tail_edges = tails(&dist_density);
        let dwell = |g: &Grid2, edges: &Grid2| -> Vec<f64> {
            (0..nx)
                .map(|i| {
                    (0..ny)
                        .map(|j| {
                            let mid = 0.5 * (edges.get(i, j) + edges.get(i, j + 1));
                            g.get(i, j) * mid * cell_dy
                        })
                        .sum()
                })
                .collect()
        };
        let col_x = column_sums(&col_density);
        let dist_x = column_sums(&dist_density);
        let col_y = row_sums(&col_density);
        let dist_y = row_sums(&dist_density);
        let col_dwell = dwell(&col_density, &col_tail_edges);
        let dist_dwell = dwell(&dist_density, &dist_tail_edges);
        let total_collection = col_x.iter().sum::<f64>() * cell_dx;
        let total_distribution = dist_x.iter().sum::<f64>() * cell_dx;
        Self {
            xs,
            ys,
            cell_dx,
            cell_dy,
            col_density,
            dist_density,
            col_tail_edges,
            dist_tail_edges,
            col_x,
            dist_x,
            col_y,
            dist_y,
            col_dwell,
            dist_dwell,
            total_collection,
            total_distribution,
        }
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn cell_dx(&self) -> f64 {
        self.cell_dx
    }

    pub fn cell_dy(&self) -> f64 {
        self.cell_dy
    }

    /// Exclusion-weighted density at lattice cell `(i, j)`.
    pub fn density(&self, dir: Direction, i: usize, j: usize) -> f64 {
        match dir {
            Direction::Collection => self.col_density.get(i, j),
            Direction::Distribution => self.dist_density.get(i, j),
        }
    }

    /// Column demand per unit length of x (patrons/km/h) at `x_i`.
    pub fn column_total(&self, dir: Direction, i: usize) -> f64 {
        match dir {
            Direction::Collection => self.col_x[i],
            Direction::Distribution => self.dist_x[i],
        }
    }

    pub fn column_totals(&self, dir: Direction) -> &[f64] {
        match dir {
            Direction::Collection => &self.col_x,
            Direction::Distribution => &self.dist_x,
        }
    }

    /// Row demand per unit length of y (patrons/km/h) at `y_j`.
    pub fn row_total(&self, dir: Direction, j: usize) -> f64 {
        match dir {
            Direction::Collection => self.col_y[j],
            Direction::Distribution => self.dist_y[j],
        }
    }

    /// Onboard tail at the cell edge `y = j * dy`, `j` in `0..=ny`.
    /// Edge 0 equals the column total; edge `ny` is zero.
    pub fn tail_edge(&self, dir: Direction, i: usize, j: usize) -> f64 {
        match dir {
            Direction::Collection => self.col_tail_edges.get(i, j),
            Direction::Distribution => self.dist_tail_edges.get(i, j),
        }
    }

    /// Onboard tail at the cell midpoint `y_j`: demand above `y_j`
    /// plus half of the local cell, consistent with the midpoint sums.
    pub fn tail_mid(&self, dir: Direction, i: usize, j: usize) -> f64 {
        0.5 * (self.tail_edge(dir, i, j) + self.tail_edge(dir, i, j + 1))
    }

    /// Dwell-exposure moment at `x_i`: the column integral of density
    /// times its onboard tail (patrons^2/km^2/h^2 scale).
    pub fn dwell_moment(&self, dir: Direction, i: usize) -> f64 {
        match dir {
            Direction::Collection => self.col_dwell[i],
            Direction::Distribution => self.dist_dwell[i],
        }
    }

    /// Served hourly demand of one direction (walking zone excluded).
    pub fn total(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Collection => self.total_collection,
            Direction::Distribution => self.total_distribution,
        }
    }

    /// Served hourly demand of both directions combined.
    pub fn grand_total(&self) -> f64 {
        self.total_collection + self.total_distribution
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REGION_LEN: f64 = 3.0;
    const REGION_WIDTH: f64 = 2.0;

    fn quadrature_normal_mass(mean: f64, sd: f64, lo: f64, hi: f64, steps: usize) -> f64 {
        // midpoint quadrature of the untruncated normal over [lo, hi]
        let h = (hi - lo) / steps as f64;
        (0..steps)
            .map(|k| {
                let x = lo + (k as f64 + 0.5) * h;
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn trunc_normal_zero_outside_support() {
        assert_eq!(trunc_normal_pdf(-0.1, 0.0, Spread::StdDev(1.0), 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(trunc_normal_pdf(3.2, 0.0, Spread::StdDev(1.0), 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn trunc_normal_uniform_limit() {
        for x in [0.0, 0.5, 1.7, 2.0] {
            assert!((trunc_normal_pdf(x, 9.0, Spread::Uniform, 0.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn trunc_normal_rejects_bad_support_and_sd() {
        assert!(trunc_normal_pdf(0.0, 0.0, Spread::StdDev(1.0), 2.0, 2.0).is_err());
        assert!(trunc_normal_pdf(0.0, 0.0, Spread::StdDev(0.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn trunc_normal_matches_quadrature_oracle() {
        // density at the origin = untruncated pdf / quadrature mass over the support
        let pdf = trunc_normal_pdf(0.0, 0.0, Spread::StdDev(0.75), 0.0, 3.0).unwrap();
        let mass = quadrature_normal_mass(0.0, 0.75, 0.0, 3.0, 200_000);
        let phi0 = 1.0 / (0.75 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((pdf - phi0 / mass).abs() < 1e-9, "pdf {pdf} vs oracle {}", phi0 / mass);
    }

    proptest::proptest! {
        #[test]
        fn trunc_normal_integrates_to_one(
            mean_frac in 0.0f64..1.0,
            sd in 0.05f64..4.0,
            hi in 0.5f64..6.0,
        ) {
            // mean inside the support keeps the truncated mass well away
            // from underflow for any of these spreads
            let mean = mean_frac * hi;
            let steps = 40_000;
            let h = hi / steps as f64;
            let total: f64 = (0..steps)
                .map(|k| trunc_normal_pdf((k as f64 + 0.5) * h, mean, Spread::StdDev(sd), 0.0, hi).unwrap())
                .sum::<f64>() * h;
            proptest::prop_assert!((total - 1.0).abs() < 1e-4, "integral {}", total);
        }
    }

    fn case_field() -> DemandField {
        DemandField::product(
            1200.0,
            Marginal::new(0.0, Spread::StdDev(REGION_LEN / 4.0)),
            Marginal::new(0.0, Spread::StdDev(REGION_WIDTH / 4.0)),
            1200.0,
            Marginal::new(0.0, Spread::StdDev(REGION_LEN / 4.0)),
            Marginal::new(0.0, Spread::StdDev(REGION_WIDTH / 4.0)),
            REGION_LEN,
            REGION_WIDTH,
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn density_zero_for_zero_total() {
        let f = DemandField::product(
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            REGION_LEN,
            REGION_WIDTH,
            0.3,
        )
        .unwrap();
        assert_eq!(f.density(Direction::Collection, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn density_excluded_inside_walking_zone() {
        let f = case_field();
        assert_eq!(f.density(Direction::Collection, 0.1, 0.1).unwrap(), 0.0);
        assert!(f.density(Direction::Collection, 0.3, 0.1).unwrap() > 0.0);
    }

    #[test]
    fn density_rejects_out_of_domain() {
        let f = case_field();
        assert!(matches!(
            f.density(Direction::Collection, -0.1, 0.5),
            Err(DemandError::OutOfDomain(..))
        ));
        assert!(matches!(
            f.density(Direction::Distribution, 1.0, 2.5),
            Err(DemandError::OutOfDomain(..))
        ));
    }

    #[test]
    fn density_matches_product_oracle() {
        // independent product-of-pdfs oracle at (1, 1)
        let f = case_field();
        let got = f.density(Direction::Collection, 1.0, 1.0).unwrap();
        let px = trunc_normal_pdf(1.0, 0.0, Spread::StdDev(0.75), 0.0, REGION_LEN).unwrap();
        let py = trunc_normal_pdf(1.0, 0.0, Spread::StdDev(0.5), 0.0, REGION_WIDTH).unwrap();
        assert!((got - 1200.0 * px * py).abs() < 1e-9);
    }

    #[test]
    fn aggregates_match_uniform_closed_forms() {
        // uniform collection density c over the full region, no exclusion:
        // column total c*W, midpoint tail c*(W - y), dwell moment c^2 W^2 / 2
        let c = 37.5;
        let f = DemandField::product(
            c * REGION_LEN * REGION_WIDTH,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            REGION_LEN,
            REGION_WIDTH,
            0.0,
        )
        .unwrap();
        let agg = f.aggregates(10, 12).unwrap();
        for i in 0..10 {
            assert!((agg.column_total(Direction::Collection, i) - c * REGION_WIDTH).abs() < 1e-9);
            assert!(agg.column_total(Direction::Distribution, i).abs() < 1e-12);
            let expected_dwell = c * c * REGION_WIDTH * REGION_WIDTH / 2.0;
            assert!((agg.dwell_moment(Direction::Collection, i) - expected_dwell).abs() < 1e-6);
            for (j, &y) in agg.ys().iter().enumerate() {
                let got = agg.tail_mid(Direction::Collection, i, j);
                assert!((got - c * (REGION_WIDTH - y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn aggregates_zero_field_all_zero() {
        let f = DemandField::product(
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            0.0,
            Marginal::new(0.0, Spread::Uniform),
            Marginal::new(0.0, Spread::Uniform),
            REGION_LEN,
            REGION_WIDTH,
            0.3,
        )
        .unwrap();
        let agg = f.aggregates(6, 8).unwrap();
        assert_eq!(agg.grand_total(), 0.0);
        for i in 0..6 {
            assert_eq!(agg.column_total(Direction::Collection, i), 0.0);
            assert_eq!(agg.dwell_moment(Direction::Distribution, i), 0.0);
        }
    }

    #[test]
    fn aggregates_total_matches_refined_quadrature_oracle() {
        // served demand vs a 10x refined lattice of the same construction
        let f = case_field();
        let coarse = f.aggregates(20, 30).unwrap();
        let fine = f.aggregates(200, 300).unwrap();
        let a = coarse.grand_total();
        let b = fine.grand_total();
        assert!(a < 2400.0, "exclusion must remove some demand");
        assert!(((a - b) / b).abs() < 0.005, "coarse {a} vs fine {b}");
    }

    #[test]
    fn aggregates_tail_edges_are_consistent() {
        let f = case_field();
        let agg = f.aggregates(20, 30).unwrap();
        for i in 0..agg.nx() {
            let base = agg.tail_edge(Direction::Collection, i, 0);
            assert!((base - agg.column_total(Direction::Collection, i)).abs() < 1e-12);
            assert_eq!(agg.tail_edge(Direction::Collection, i, agg.ny()), 0.0);
            for j in 0..agg.ny() {
                assert!(
                    agg.tail_edge(Direction::Collection, i, j)
                        >= agg.tail_edge(Direction::Collection, i, j + 1)
                );
            }
        }
    }

    #[test]
    fn aggregates_lattice_sum_equals_total_by_construction() {
        let f = case_field();
        let agg = f.aggregates(20, 30).unwrap();
        let cell = agg.cell_dx() * agg.cell_dy();
        let sum: f64 = (0..agg.nx())
            .flat_map(|i| (0..agg.ny()).map(move |j| (i, j)))
            .map(|(i, j)| agg.density(Direction::Collection, i, j) * cell)
            .sum();
        assert!((sum - agg.total(Direction::Collection)).abs() < 1e-9 * sum.max(1.0));
    }

    #[test]
    fn aggregates_refinement_stable_for_smooth_fields() {
        // no walking zone: doubling the lattice moves aggregates < 0.5%
        let f = DemandField::product(
            1200.0,
            Marginal::new(0.0, Spread::StdDev(0.75)),
            Marginal::new(0.0, Spread::StdDev(0.5)),
            900.0,
            Marginal::new(1.0, Spread::StdDev(1.0)),
            Marginal::new(0.5, Spread::StdDev(0.8)),
            REGION_LEN,
            REGION_WIDTH,
            0.0,
        )
        .unwrap();
        let a = f.aggregates(20, 30).unwrap();
        let b = f.aggregates(40, 60).unwrap();
        let rel = |x: f64, y: f64| ((x - y) / y.max(1e-12)).abs();
        assert!(rel(a.grand_total(), b.grand_total()) < 0.005);
        assert!(rel(
            a.total(Direction::Collection),
            b.total(Direction::Collection)
        ) < 0.005);
    }

    #[test]
    fn transpose_swaps_axes() {
        let f = case_field();
        let t = f.transposed();
        assert_eq!(t.region_len(), REGION_WIDTH);
        assert_eq!(t.region_width(), REGION_LEN);
        let a = f.density(Direction::Collection, 1.2, 0.7).unwrap();
        let b = t.density(Direction::Collection, 0.7, 1.2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rescale_preserves_totals_when_density_held() {
        // no walking zone: halving both axes with totals scaled by the
        // area ratio keeps the average density, so served demand scales
        // exactly with area
        let mut f = case_field();
        f.walk_radius = 0.0;
        let s = f.rescaled(0.5, 0.5, 0.25);
        let a = f.aggregates(40, 40).unwrap();
        let b = s.aggregates(40, 40).unwrap();
        let ratio = b.grand_total() / a.grand_total();
        assert!((ratio - 0.25).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn bilinear_grid_evaluates_and_clamps() {
        let spec = DirectionSpec::Tabulated {
            xs: vec![0.5, 1.5, 2.5],
            ys: vec![0.5, 1.5],
            values: Grid2::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        };
        let f = DemandField::new(
            spec,
            DirectionSpec::Product {
                total: 0.0,
                along_len: Marginal::new(0.0, Spread::Uniform),
                along_width: Marginal::new(0.0, Spread::Uniform),
            },
            REGION_LEN,
            REGION_WIDTH,
            0.0,
        )
        .unwrap();
        // midpoint of the first cell averages its four corners
        let mid = f.density(Direction::Collection, 1.0, 1.0).unwrap();
        assert!((mid - 2.5).abs() < 1e-12);
        // clamped beyond the sample hull
        let edge = f.density(Direction::Collection, 2.9, 1.9).unwrap();
        assert!((edge - 6.0).abs() < 1e-12);
    }

    #[test]
    fn uncovered_fraction_geometry() {
        // cell entirely inside the zone
        assert_eq!(uncovered_fraction(0.0, 0.1, 0.0, 0.1, 0.3), 0.0);
        // cell entirely outside
        assert_eq!(uncovered_fraction(1.0, 1.2, 1.0, 1.2, 0.3), 1.0);
        // unit cell at origin, radius 1: the zone covers half of it
        assert!((uncovered_fraction(0.0, 1.0, 0.0, 1.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
