//! Mini-batch sampling of interior, boundary and initial points and random parameters.
//!
//! All draws come from ChaCha8 keyed by `(seed, stream)`: the trainer uses the
//! iteration index as the stream, the oracle uses the ensemble member index, so
//! any batch can be regenerated independently of what was drawn before it.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problems::{ConstraintMode, DomainSpec, Geometry, ProblemSpec};

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Distribution of the random parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamDist {
    Uniform01,
}

impl ParamDist {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "uniform01" => Ok(ParamDist::Uniform01),
            other => Err(Error::usage(format!("unknown parameter distribution '{other}'"))),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            ParamDist::Uniform01 => rng.random::<f64>(),
        }
    }
}

/// `n` i.i.d. parameter vectors as rows.
pub fn sample_params(n: usize, d: usize, dist: ParamDist, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || dist.draw(rng))
}

fn draw_time(dom: &DomainSpec, rng: &mut impl Rng) -> Option<f64> {
    dom.horizon.map(|t| rng.random::<f64>() * t)
}

/// Uniform point of the domain, or `None` once `attempts` exceeds `cap` rejections.
fn draw_space(dom: &DomainSpec, rng: &mut impl Rng, attempts: &mut usize, cap: usize) -> Option<Vec<f64>> {
    match dom.geometry {
        Geometry::Interval { lo, hi } => Some(vec![lo + (hi - lo) * rng.random::<f64>()]),
        Geometry::Square { half } => Some(vec![rng.random_range(-half..half), rng.random_range(-half..half)]),
        Geometry::SquareWithHole { half, radius } => {
            while *attempts < cap {
                *attempts += 1;
                let (x, y) = (rng.random_range(-half..half), rng.random_range(-half..half));
                if x * x + y * y > radius * radius {
                    return Some(vec![x, y]);
                }
            }
            None
        }
    }
}

fn rejection_error(attempts: usize) -> Error {
    Error::config(format!(
        "rejection sampling accepted fewer than 10% of {attempts} proposals; degenerate geometry"
    ))
}

/// A point on the spatial boundary, uniform with respect to boundary measure.
pub fn boundary_point(dom: &DomainSpec, rng: &mut impl Rng) -> Vec<f64> {
    let square_edge = |half: f64, s: f64| -> Vec<f64> {
        let side = 2.0 * half;
        let edge = ((s / side) as usize).min(3);
        let o = s - edge as f64 * side - half;
        match edge {
            0 => vec![o, -half],
            1 => vec![half, o],
            2 => vec![-o, half],
            _ => vec![-half, -o],
        }
    };
    match dom.geometry {
        Geometry::Interval { lo, hi } => vec![if rng.random::<bool>() { hi } else { lo }],
        Geometry::Square { half } => square_edge(half, rng.random::<f64>() * 8.0 * half),
        Geometry::SquareWithHole { half, radius } => {
            let outer = 8.0 * half;
            let s = rng.random::<f64>() * (outer + 2.0 * std::f64::consts::PI * radius);
            if s < outer {
                square_edge(half, s)
            } else {
                let theta = (s - outer) / radius;
                vec![radius * theta.cos(), radius * theta.sin()]
            }
        }
    }
}

fn assemble(time: Option<f64>, space: &[f64], p: impl Iterator<Item = f64>) -> Vec<f64> {
    time.into_iter().chain(space.iter().copied()).chain(p).collect()
}

fn rows(n: usize, width: usize, data: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((n, width), data).expect("row lengths are consistent")
}

/// `n` network inputs `[t?, x, p]` with `t ~ U[0, T]`, `x` uniform on the domain, `p ~ U[0,1]^d`.
pub fn sample_interior(n: usize, dom: &DomainSpec, d: usize, rng: &mut impl Rng) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    let width = dom.coord_dim() + d;
    let mut data = Vec::with_capacity(n * width);
    let mut attempts = 0;
    let cap = 10 * n + 100;
    for _ in 0..n {
        let t = draw_time(dom, rng);
        let x = draw_space(dom, rng, &mut attempts, cap).ok_or_else(|| rejection_error(attempts))?;
        data.extend(assemble(t, &x, (0..d).map(|_| rng.random::<f64>())));
    }
    Ok(rows(n, width, data))
}

/// `n` network inputs with the spatial part on the boundary.
pub fn sample_boundary(n: usize, dom: &DomainSpec, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let width = dom.coord_dim() + d;
    let mut data = Vec::with_capacity(n * width);
    for _ in 0..n {
        let t = draw_time(dom, rng);
        let x = boundary_point(dom, rng);
        data.extend(assemble(t, &x, (0..d).map(|_| rng.random::<f64>())));
    }
    rows(n, width, data)
}

/// `n` network inputs at `t = 0` (transient domains only).
pub fn sample_initial(n: usize, dom: &DomainSpec, d: usize, rng: &mut impl Rng) -> Result<Array2<f64>> {
    if dom.horizon.is_none() {
        return Err(Error::usage("initial points requested for a steady domain"));
    }
    let width = dom.coord_dim() + d;
    let mut data = Vec::with_capacity(n * width);
    let mut attempts = 0;
    let cap = 10 * n + 100;
    for _ in 0..n {
        let x = draw_space(dom, rng, &mut attempts, cap).ok_or_else(|| rejection_error(attempts))?;
        data.extend(assemble(Some(0.0), &x, (0..d).map(|_| rng.random::<f64>())));
    }
    Ok(rows(n, width, data))
}

/// Points for one training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub interior: Array2<f64>,
    /// Present in soft mode.
    pub boundary: Option<Array2<f64>>,
    /// Present in soft mode for transient problems.
    pub initial: Option<Array2<f64>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.interior.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.nrows() == 0
    }
}

/// Draws the interior batch and, in soft mode, equally sized boundary and initial batches.
pub fn sample_batch(problem: &ProblemSpec, n: usize, rng: &mut impl Rng) -> Result<SampleBatch> {
    let dom = &problem.domain;
    let interior = sample_interior(n, dom, problem.d, rng)?;
    let (boundary, initial) = match problem.constraint {
        ConstraintMode::Hard => (None, None),
        ConstraintMode::Soft => {
            let b = sample_boundary(n, dom, problem.d, rng);
            let i = if problem.is_transient() {
                Some(sample_initial(n, dom, problem.d, rng)?)
            } else {
                None
            };
            (Some(b), i)
        }
    };
    Ok(SampleBatch {
        interior,
        boundary,
        initial,
    })
}
