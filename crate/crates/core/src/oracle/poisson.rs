use ndarray::Array2;

use crate::error::{Error, Result};
use crate::oracle::diffusion::locate;
use crate::problems::{Forcing, RandomField};

/// Uniform node grid on `[−half, half]²` with `cells` intervals per side, optionally
/// with nodes inside a centred disc pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub cells: usize,
    pub half: f64,
    pub hole_radius: Option<f64>,
}

impl Grid2D {
    pub fn square(cells: usize) -> Self {
        Grid2D {
            cells,
            half: 1.0,
            hole_radius: None,
        }
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half / self.cells as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half + i as f64 * self.h()
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    /// Whether node `(i, j)` carries an unknown (interior and outside the hole).
    pub fn is_free(&self, i: usize, j: usize) -> bool {
        let n = self.cells;
        if i == 0 || j == 0 || i == n || j == n {
            return false;
        }
        match self.hole_radius {
            Some(r) => {
                let (x, y) = (self.coord(i), self.coord(j));
                x * x + y * y > r * r
            }
            None => true,
        }
    }
}

/// Nodal solution, indexed `[i, j]` for `(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub grid: Grid2D,
    pub u: Array2<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl GridSolution {
    /// Bilinear interpolation at `(x, y)`.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let (i, wx) = locate((x + g.half) / g.h(), g.cells);
        let (j, wy) = locate((y + g.half) / g.h(), g.cells);
        let u = &self.u;
        (u[[i, j]] * (1.0 - wx) + u[[i + 1, j]] * wx) * (1.0 - wy)
            + (u[[i, j + 1]] * (1.0 - wx) + u[[i + 1, j + 1]] * wx) * wy
    }
}

/// Five-point operator `−∇·(k∇u)` with arithmetic face averages, restricted to free nodes.
struct Operator {
    n: usize,
    free: Vec<bool>,
    /// Face coefficients divided by h²: east (between i and i+1) and north (between j and j+1).
    east: Vec<f64>,
    north: Vec<f64>,
    diag: Vec<f64>,
}

impl Operator {
    fn new(grid: &Grid2D, k: &Array2<f64>) -> Self {
        let n = grid.nodes();
        let h2 = grid.h() * grid.h();
        let mut east = vec![0.0; n * n];
        let mut north = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i + 1 < n {
                    east[i * n + j] = 0.5 * (k[[i, j]] + k[[i + 1, j]]) / h2;
                }
                if j + 1 < n {
                    north[i * n + j] = 0.5 * (k[[i, j]] + k[[i, j + 1]]) / h2;
                }
            }
        }
        let mut free = vec![false; n * n];
        let mut diag = vec![1.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if grid.is_free(i, j) {
                    free[i * n + j] = true;
                    let id = i * n + j;
                    diag[id] = east[id] + east[id - n] + north[id] + north[id - 1];
                }
            }
        }
        Operator {
            n,
            free,
            east,
            north,
            diag,
        }
    }

    /// `out = A·u` on free nodes; zero elsewhere. `u` must vanish on pinned nodes.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let id = i * n + j;
                if !self.free[id] {
                    out[id] = 0.0;
                    continue;
                }
                out[id] = self.diag[id] * u[id]
                    - self.east[id] * u[id + n]
                    - self.east[id - n] * u[id - n]
                    - self.north[id] * u[id + 1]
                    - self.north[id - 1] * u[id - 1];
            }
        }
        for id in 0..n {
            out[id] = 0.0;
            out[(n - 1) * n + id] = 0.0;
            out[id * n] = 0.0;
            out[id * n + n - 1] = 0.0;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `−∇·(k∇u) = f` with `u = 0` on the square's edge and on pinned hole nodes.
///
/// Solved by Jacobi-preconditioned conjugate gradients to relative residual `tol`.
pub fn fd_poisson_2d(
    field: &RandomField,
    p: &[f64],
    forcing: &Forcing,
    grid: Grid2D,
    tol: f64,
) -> Result<GridSolution> {
    if grid.cells < 2 || !(grid.half > 0.0) {
        return Err(Error::usage(format!("invalid grid {grid:?}")));
    }
    let n = grid.nodes();
    let k = Array2::from_shape_fn((n, n), |(i, j)| field.value(&[grid.coord(i), grid.coord(j)], p));
    if let Some(v) = k.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::numeric(format!("non-positive conductivity {v}")));
    }
    let op = Operator::new(&grid, &k);
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if op.free[i * n + j] {
                b[i * n + j] = forcing.eval(&[grid.coord(i), grid.coord(j)]);
            }
        }
    }
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n * n];
    if b_norm == 0.0 {
        return Ok(GridSolution {
            grid,
            u: Array2::zeros((n, n)),
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(r, d)| r / d).collect();
    let mut d = z.clone();
    let mut q = vec![0.0; n * n];
    let mut rz = dot(&r, &z);
    let max_iter = 20 * n * n;
    let mut iterations = 0;
    let mut res = 1.0;
    while iterations < max_iter {
        op.apply(&d, &mut q);
        let alpha = rz / dot(&d, &q);
        for id in 0..n * n {
            x[id] += alpha * d[id];
            r[id] -= alpha * q[id];
        }
        iterations += 1;
        res = dot(&r, &r).sqrt() / b_norm;
        if !res.is_finite() {
            return Err(Error::numeric("conjugate gradient diverged"));
        }
        if res < tol {
            break;
        }
        for id in 0..n * n {
            z[id] = r[id] / op.diag[id];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for id in 0..n * n {
            d[id] = z[id] + beta * d[id];
        }
    }
    if res >= tol {
        return Err(Error::numeric(format!(
            "conjugate gradient stalled at relative residual {res:e} after {iterations} iterations"
        )));
    }
    // recompute the true residual so the reported value does not rely on the recurrence
    op.apply(&x, &mut q);
    let true_res = b.iter().zip(&q).map(|(b, q)| (b - q) * (b - q)).sum::<f64>().sqrt() / b_norm;
    Ok(GridSolution {
        grid,
        u: Array2::from_shape_vec((n, n), x).expect("node count"),
        iterations,
        relative_residual: true_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_forcing_gives_zero() {
        let s = fd_poisson_2d(
            &RandomField::Conductivity,
            &[0.5, 0.5],
            &Forcing::Constant(0.0),
            Grid2D::square(16),
            1e-12,
        )
        .unwrap();
        assert!(s.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn point_symmetry_and_positivity() {
        let g = Grid2D::square(32);
        let s = fd_poisson_2d(
            &RandomField::Conductivity,
            &[0.8, 0.2, 0.6],
            &Forcing::AbsProduct(100.0),
            g,
            1e-12,
        )
        .unwrap();
        assert!(s.relative_residual < 1e-10);
        let n = g.nodes();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (s.u[[i, j]], s.u[[n - 1 - i, n - 1 - j]]);
                assert!((a - b).abs() < 1e-10 * a.abs().max(1e-3));
                assert!(a >= 0.0);
            }
        }
    }

    #[test]
    fn hole_nodes_pinned() {
        let g = Grid2D {
            cells: 32,
            half: 1.0,
            hole_radius: Some(0.3),
        };
        let s = fd_poisson_2d(&RandomField::Constant(1.0), &[], &Forcing::Constant(2.0), g, 1e-12).unwrap();
        assert_eq!(s.u[[16, 16]], 0.0);
        assert_eq!(s.at(0.0, 0.0), 0.0);
        assert!(s.at(-0.6, 0.0) > 0.0);
    }

    #[test]
    fn tiny_grid_rejected() {
        assert!(matches!(
            fd_poisson_2d(
                &RandomField::Constant(1.0),
                &[],
                &Forcing::Constant(1.0),
                Grid2D::square(1),
                1e-12
            ),
            Err(Error::Usage(_))
        ));
    }
}
