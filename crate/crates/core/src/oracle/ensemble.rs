use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::{fd_diffusion_1d, fd_poisson_2d, Grid1D, Grid2D, CG_TOLERANCE};
use crate::problems::{Geometry, ProblemSpec};
use crate::train::member_params;

/// Resolution and size of an oracle ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub samples: usize,
    /// Spatial nodes of the 1D grid.
    pub nx: usize,
    /// Time steps of the 1D grid.
    pub nt: usize,
    /// Intervals per side of the 2D grid.
    pub cells: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            samples: 2000,
            nx: 201,
            nt: 200,
            cells: 128,
        }
    }
}

/// Oracle values at fixed probes for `samples` parameter draws.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub seed: u64,
    /// One row per member.
    pub params: Array2<f64>,
    pub probes: Vec<Vec<f64>>,
    /// `samples x probes`.
    pub values: Array2<f64>,
}

impl EnsembleRun {
    pub fn samples(&self) -> usize {
        self.values.nrows()
    }
}

fn check_probes(problem: &ProblemSpec, probes: &[Vec<f64>]) -> Result<()> {
    let mid = vec![0.5; problem.d];
    for probe in probes {
        let input: Vec<f64> = probe.iter().chain(&mid).copied().collect();
        if probe.len() != problem.domain.coord_dim() || !problem.contains_input(&input) {
            return Err(Error::usage(format!("probe {probe:?} lies outside the domain")));
        }
    }
    Ok(())
}

/// Solves one member with parameters `p` and reads the solution at `probes`.
pub fn solve_member(problem: &ProblemSpec, p: &[f64], probes: &[Vec<f64>], config: &OracleConfig) -> Result<Vec<f64>> {
    match problem.domain.geometry {
        Geometry::Interval { lo, hi } => {
            if lo != 0.0 || hi != 1.0 {
                return Err(Error::usage("the 1D oracle covers the unit interval only"));
            }
            let horizon = problem
                .domain
                .horizon
                .ok_or_else(|| Error::usage("the 1D oracle is transient"))?;
            let grid = Grid1D {
                nx: config.nx,
                nt: config.nt,
                horizon,
            };
            let c = problem.forcing.eval(&[0.0]);
            let sol = fd_diffusion_1d(&problem.field, p, c, grid, |x| problem.initial_value(&[x]))?;
            Ok(probes.iter().map(|q| sol.at(q[0], q[1])).collect())
        }
        Geometry::Square { half } | Geometry::SquareWithHole { half, .. } => {
            let hole_radius = match problem.domain.geometry {
                Geometry::SquareWithHole { radius, .. } => Some(radius),
                _ => None,
            };
            let grid = Grid2D {
                cells: config.cells,
                half,
                hole_radius,
            };
            let sol = fd_poisson_2d(&problem.field, p, &problem.forcing, grid, CG_TOLERANCE)?;
            if sol.relative_residual >= 1e-10 {
                return Err(Error::numeric(format!(
                    "linear residual {:e} above 1e-10",
                    sol.relative_residual
                )));
            }
            Ok(probes.iter().map(|q| sol.at(q[0], q[1])).collect())
        }
    }
}

/// Monte Carlo ensemble: member `m` uses the same parameter draw as surrogate member `m`
/// under the same seed. Members are solved in parallel and stored in order.
pub fn mc_ensemble(
    problem: &ProblemSpec,
    probes: &[Vec<f64>],
    config: &OracleConfig,
    seed: u64,
) -> Result<EnsembleRun> {
    problem.validate()?;
    if config.samples == 0 {
        return Err(Error::usage("an ensemble needs at least one member"));
    }
    check_probes(problem, probes)?;
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..config.samples)
        .into_par_iter()
        .map(|m| {
            let p = member_params(seed, m as u64, problem.d);
            let v = solve_member(problem, &p, probes, config)?;
            Ok((p, v))
        })
        .collect();
    let mut params = Array2::zeros((config.samples, problem.d));
    let mut values = Array2::zeros((config.samples, probes.len()));
    for (m, r) in results.into_iter().enumerate() {
        let (p, v) = r.map_err(|e| match e {
            Error::NumericFault(msg) => Error::NumericFault(format!("member {m}: {msg}")),
            Error::Usage(msg) => Error::Usage(format!("member {m}: {msg}")),
            other => other,
        })?;
        params.row_mut(m).assign(&ndarray::ArrayView1::from(&p));
        values.row_mut(m).assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(EnsembleRun {
        seed,
        params,
        probes: probes.to_vec(),
        values,
    })
}
