use super::forced::ForcedHeads;
use super::trade::TradeModel;
use super::AutoregressiveModel;
use crate::error::{config_err, Result, TradeError};
use crate::matrix::Matrix;

/// Anything that evaluates a normalized log-density on rows of a matrix.
pub trait LogDensity {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &Matrix) -> Result<Vec<f64>>;
}

impl LogDensity for TradeModel {
    fn dim(&self) -> usize {
        AutoregressiveModel::dim(self)
    }

    fn log_density(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.log_prob(x)
    }
}

impl LogDensity for ForcedHeads {
    fn dim(&self) -> usize {
        AutoregressiveModel::dim(self)
    }

    fn log_density(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.log_prob(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridBounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl GridBounds {
    pub fn square(lo: f64, hi: f64) -> Self {
        GridBounds { x: (lo, hi), y: (lo, hi) }
    }
}

/// Log-density on a `resolution × resolution` node grid spanning the bounds
/// (endpoints included). Entry `j * resolution + i` sits at `(x_i, y_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    pub bounds: GridBounds,
    pub resolution: usize,
    pub log_values: Vec<f64>,
    /// Trapezoidal estimate of the total mass on the bounds.
    pub mass: f64,
}

impl GridDensity {
    pub fn xs(&self) -> Vec<f64> {
        axis(self.bounds.x, self.resolution)
    }

    pub fn ys(&self) -> Vec<f64> {
        axis(self.bounds.y, self.resolution)
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    pub fn cell_area(&self) -> f64 {
        let r = (self.resolution - 1) as f64;
        (self.bounds.x.1 - self.bounds.x.0) / r * (self.bounds.y.1 - self.bounds.y.0) / r
    }
}

fn axis((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Grid points in row-major order (y outer, x inner).
pub fn grid_points(bounds: GridBounds, resolution: usize) -> Matrix {
    let (xs, ys) = (axis(bounds.x, resolution), axis(bounds.y, resolution));
    let mut data = Vec::with_capacity(2 * resolution * resolution);
    for y in &ys {
        for x in &xs {
            data.push(*x);
            data.push(*y);
        }
    }
    Matrix::new(resolution * resolution, 2, data).expect("grid shape")
}

pub fn grid_density(model: &dyn LogDensity, bounds: GridBounds, resolution: usize) -> Result<GridDensity> {
    if model.dim() != 2 {
        return Err(TradeError::Unsupported(format!(
            "grid evaluation needs a 2-dimensional density, got {} dimensions",
            model.dim()
        )));
    }
    if resolution < 2 || !(bounds.x.1 > bounds.x.0) || !(bounds.y.1 > bounds.y.0) {
        return Err(config_err(format!("invalid grid: resolution {resolution}, bounds {bounds:?}")));
    }
    let log_values = model.log_density(&grid_points(bounds, resolution))?;
    let mut mass = 0.0;
    let end = resolution - 1;
    for j in 0..resolution {
        let wy = if j == 0 || j == end { 0.5 } else { 1.0 };
        for i in 0..resolution {
            let wx = if i == 0 || i == end { 0.5 } else { 1.0 };
            mass += wx * wy * log_values[j * resolution + i].exp();
        }
    }
    let mut grid = GridDensity {
        bounds,
        resolution,
        log_values,
        mass: 0.0,
    };
    grid.mass = mass * grid.cell_area();
    Ok(grid)
}
