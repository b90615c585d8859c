//! Dense 2-D value table indexed by (x-column, y-row).

use serde::{Deserialize, Serialize};

/// Row-major table of `f64` values on an `nx * ny` lattice.
///
/// Index order is `(i, j)` where `i` selects the x-column and `j` the
/// y-row, matching how the design and demand functions are discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl Grid2 {
    pub fn filled(nx: usize, ny: usize, value: f64) -> Self {
        Self { nx, ny, values: vec![value; nx * ny] }
    }

    /// Builds from a row-major vector (`i * ny + j` layout).
    pub fn from_vec(nx: usize, ny: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), nx * ny, "grid size mismatch");
        Self { nx, ny, values }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                values.push(f(i, j));
            }
        }
        Self { nx, ny, values }
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nx && j < self.ny);
        self.values[i * self.ny + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.nx && j < self.ny);
        self.values[i * self.ny + j] = value;
    }

    /// Values of one x-column, ordered by ascending y.
    #[inline]
    pub fn column(&self, i: usize) -> &[f64] {
        &self.values[i * self.ny..(i + 1) * self.ny]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { nx: self.nx, ny: self.ny, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Sum of absolute elementwise differences against another grid.
    pub fn abs_diff_sum(&self, other: &Self) -> f64 {
        assert_eq!((self.nx, self.ny), (other.nx, other.ny));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}
