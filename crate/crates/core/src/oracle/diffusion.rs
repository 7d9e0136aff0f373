use ndarray::Array2;

use crate::error::{Error, Result};
use crate::problems::RandomField;

/// Uniform grid on `[0, 1]` with `nx` nodes and `nt` implicit Euler steps up to `horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub nx: usize,
    pub nt: usize,
    pub horizon: f64,
}

impl Grid1D {
    pub fn h(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.nt < 1 || !(self.horizon > 0.0) {
            return Err(Error::usage(format!(
                "grid needs nx >= 3, nt >= 1 and a positive horizon, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Space-time solution: row `n` holds time level `n·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeSolution {
    pub grid: Grid1D,
    pub u: Array2<f64>,
}

impl SpaceTimeSolution {
    /// Bilinear interpolation at `(t, x)`.
    pub fn at(&self, t: f64, x: f64) -> f64 {
        let (nt, nx) = (self.grid.nt, self.grid.nx);
        let (ti, tw) = locate(t / self.grid.dt(), nt);
        let (xi, xw) = locate(x / self.grid.h(), nx - 1);
        let row = |n: usize| self.u[[n, xi]] * (1.0 - xw) + self.u[[n, xi + 1]] * xw;
        row(ti) * (1.0 - tw) + row(ti + 1) * tw
    }
}

/// Cell index and weight for fractional position `s` on `0..=cells`.
pub(crate) fn locate(s: f64, cells: usize) -> (usize, f64) {
    let s = s.clamp(0.0, cells as f64);
    let i = (s.floor() as usize).min(cells - 1);
    (i, s - i as f64)
}

/// Solves a tridiagonal system in place (Thomas algorithm). `lower[0]` and `upper[n−1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < 1e-300 {
        return Err(Error::numeric("singular tridiagonal system"));
    }
    c[0] = upper[0] / pivot;
    rhs[0] /= pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot.abs() < 1e-300 || !pivot.is_finite() {
            return Err(Error::numeric(format!("singular tridiagonal system at row {i}")));
        }
        c[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// Coefficient at the `nx − 1` cell midpoints.
fn midpoint_coefficients(field: &RandomField, p: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    let h = grid.h();
    let a: Vec<f64> = (0..grid.nx - 1)
        .map(|i| field.value(&[(i as f64 + 0.5) * h], p))
        .collect();
    if let Some(i) = a.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::numeric(format!("non-positive coefficient {} at cell {i}", a[i])));
    }
    Ok(a)
}

/// `u_t = (a u_x)_x + c` on `[0, 1]` with zero ends and initial profile `initial`,
/// implicit Euler in time and conservative fluxes `a_{i±1/2}` in space.
pub fn fd_diffusion_1d(
    field: &RandomField,
    p: &[f64],
    c: f64,
    grid: Grid1D,
    initial: impl Fn(f64) -> f64,
) -> Result<SpaceTimeSolution> {
    grid.validate()?;
    let nx = grid.nx;
    let a = midpoint_coefficients(field, p, &grid)?;
    let r = grid.dt() / (grid.h() * grid.h());
    let m = nx - 2;
    let lower: Vec<f64> = (0..m).map(|k| -r * a[k]).collect();
    let upper: Vec<f64> = (0..m).map(|k| -r * a[k + 1]).collect();
    let diag: Vec<f64> = (0..m).map(|k| 1.0 + r * (a[k] + a[k + 1])).collect();

    let mut u = Array2::zeros((grid.nt + 1, nx));
    for i in 1..nx - 1 {
        u[[0, i]] = initial(grid.x(i));
    }
    let mut rhs = vec![0.0; m];
    for n in 0..grid.nt {
        for k in 0..m {
            rhs[k] = u[[n, k + 1]] + grid.dt() * c;
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
        for k in 0..m {
            u[[n + 1, k + 1]] = rhs[k];
        }
    }
    Ok(SpaceTimeSolution { grid, u })
}

/// Steady state `−(a u_x)_x = c` with zero ends, on `nx` nodes.
pub fn fd_steady_diffusion_1d(field: &RandomField, p: &[f64], c: f64, nx: usize) -> Result<Vec<f64>> {
    let grid = Grid1D {
        nx,
        nt: 1,
        horizon: 1.0,
    };
    grid.validate()?;
    let a = midpoint_coefficients(field, p, &grid)?;
    let h2 = grid.h() * grid.h();
    let m = nx - 2;
    let lower: Vec<f64> = (0..m).map(|k| -a[k]).collect();
    let upper: Vec<f64> = (0..m).map(|k| -a[k + 1]).collect();
    let diag: Vec<f64> = (0..m).map(|k| a[k] + a[k + 1]).collect();
    let mut rhs = vec![c * h2; m];
    solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
    let mut u = vec![0.0; nx];
    u[1..nx - 1].copy_from_slice(&rhs);
    Ok(u)
}
