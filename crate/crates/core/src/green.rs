//! Green's function of a polynomial and its evaluation over a raster grid.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::PolynomialMap;

pub const ESCAPE_RADIUS: f64 = 1e8;
pub const ITERATION_CAP: usize = 256;

/// Escape-rate potential `G(z) = lim log|f^n z| / d^n`.
///
/// Evaluated at the first `n` where `|f^n z|` exceeds [`ESCAPE_RADIUS`], with the
/// constant `log|a_d| / (d - 1)` added so that `G(z) ~ log|z| + log|a_d|/(d-1)` near
/// infinity. Points still bounded after `n_iter` steps get 0.
pub fn green(map: &PolynomialMap, z: Complex64, n_iter: usize) -> f64 {
    let d = map.degree() as f64;
    let offset = map.leading().norm().ln() / (d - 1.0);
    let r2 = ESCAPE_RADIUS * ESCAPE_RADIUS;
    let mut w = z;
    let mut scale = 1.0;
    for _ in 0..=n_iter {
        let m = w.norm_sqr();
        if !(m <= r2) {
            if !m.is_finite() {
                // overflowed in one step; the previous scale is still a valid bound
                return f64::INFINITY;
            }
            return ((0.5 * m.ln() + offset) / scale).max(0.0);
        }
        w = map.eval(w);
        scale *= d;
    }
    0.0
}

/// A square grid of `resolution x resolution` cells. Row 0 is the top edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: Complex64,
    pub half_width: f64,
    pub resolution: usize,
}

impl GridSpec {
    pub const MIN_RESOLUTION: usize = 256;
    pub const MAX_RESOLUTION: usize = 8192;

    pub fn new(center: Complex64, half_width: f64, resolution: usize) -> Result<Self> {
        let grid = Self { center, half_width, resolution };
        grid.check()?;
        Ok(grid)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half_width {} must be positive", self.half_width)));
        }
        if !self.center.re.is_finite() || !self.center.im.is_finite() {
            return Err(Error::InvalidGrid("center must be finite".into()));
        }
        let r = self.resolution;
        if !r.is_power_of_two() || !(Self::MIN_RESOLUTION..=Self::MAX_RESOLUTION).contains(&r) {
            return Err(Error::InvalidGrid(format!(
                "resolution {r} must be a power of two in [{}, {}]",
                Self::MIN_RESOLUTION,
                Self::MAX_RESOLUTION
            )));
        }
        Ok(())
    }

    /// Side length of one cell.
    pub fn cell_size(&self) -> f64 {
        2.0 * self.half_width / self.resolution as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size().powi(2)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Complex64 {
        let h = self.cell_size();
        Complex64::new(
            self.center.re - self.half_width + (col as f64 + 0.5) * h,
            self.center.im + self.half_width - (row as f64 + 0.5) * h,
        )
    }

    /// The cell containing `z`, or `None` off the grid.
    pub fn cell_of(&self, z: Complex64) -> Option<(usize, usize)> {
        let h = self.cell_size();
        let x = (z.re - (self.center.re - self.half_width)) / h;
        let y = ((self.center.im + self.half_width) - z.im) / h;
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let (col, row) = (x.floor() as usize, y.floor() as usize);
        (row < self.resolution && col < self.resolution).then_some((row, col))
    }
}

/// Green's function sampled at every cell center.
#[derive(Clone, Debug)]
pub struct GreenField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GreenField {
    pub fn compute(map: &PolynomialMap, grid: GridSpec) -> Self {
        let n = grid.resolution;
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(row, out)| {
            for (col, v) in out.iter_mut().enumerate() {
                *v = green(map, grid.cell_center(row, col), ITERATION_CAP);
            }
        });
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.resolution + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
