//! Strong-form and variational mini-batch losses, and a numerical first-variation check.
//!
//! The network is evaluated once per shard in batched jet mode. The per-sample
//! composition (trial wrap, PDE residual or energy integrand, penalties, mean)
//! is recorded on a scalar [`Tape`] whose leaves are the network output
//! components; their adjoints seed [`BatchCache::backward`], which returns the
//! parameter gradient.

use ndarray::{s, ArrayView2};
use rayon::prelude::*;

use crate::autodiff::{GradientMap, Jet2, Scalar, Tape, Var};
use crate::constraints::hard_wrap;
use crate::error::{Error, Result};
use crate::problems::{ConstraintMode, FieldValue, LossMode, ProblemSpec};
use crate::resnet::{forward_batch, BatchCache, Direction, NetworkParams};
use crate::sampler::SampleBatch;

/// `u_t − (a_x·u_x + a·u_xx) − c` from jets along `t` and along `x`.
pub fn diffusion_residual<S: Scalar>(along_t: Jet2<S>, along_x: Jet2<S>, a: f64, a_x: f64, c: f64) -> S {
    along_t.d1 - (along_x.d1 * a_x + along_x.d2 * a) - c
}

/// `−(k_x·u_x + k_y·u_y + k·(u_xx + u_yy)) − f` from jets along `x` and `y`.
pub fn heat_residual<S: Scalar>(along_x: Jet2<S>, along_y: Jet2<S>, k: FieldValue, f: f64) -> S {
    let flux = along_x.d1 * k.grad[0] + along_y.d1 * k.grad[1] + (along_x.d2 + along_y.d2) * k.value;
    -flux - f
}

/// `(k/2)(u_x² + u_y²) − f·u`.
pub fn heat_variational_integrand<S: Scalar>(along_x: Jet2<S>, along_y: Jet2<S>, k: f64, f: f64) -> S {
    (along_x.d1.square() + along_y.d1.square()) * (0.5 * k) - along_x.v * f
}

/// Loss value and its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub gradient: GradientMap,
}

/// Directions the interior residual needs: `(t, x)` for transient problems, `(x, y)` otherwise.
fn interior_directions(problem: &ProblemSpec) -> Vec<Direction> {
    match (problem.is_transient(), problem.loss) {
        (true, _) => vec![Direction::first(0), Direction::second(1)],
        (false, LossMode::Strong) => vec![Direction::second(0), Direction::second(1)],
        (false, LossMode::Variational) => vec![Direction::first(0), Direction::first(1)],
    }
}

/// Network output leaves of one cached stack, in stack-row order.
fn leaves<'t>(tape: &'t Tape, cache: &BatchCache<'_>) -> Vec<Var<'t>> {
    cache.outputs().iter().map(|&o| tape.input(o)).collect()
}

fn surrogate_jet<'t>(
    tape: &'t Tape,
    problem: &ProblemSpec,
    cache: &BatchCache<'_>,
    out: &[Var<'t>],
    input: &[f64],
    k: usize,
    j: usize,
) -> Result<Jet2<Var<'t>>> {
    let layout = cache.layout();
    let net = Jet2 {
        v: out[layout.value_row(j)],
        d1: out[layout.d1_row(k, j)],
        d2: layout.d2_row(k, j).map_or_else(|| tape.constant(0.0), |r| out[r]),
    };
    wrap(problem, net, input, Some(layout.directions[k].coord))
}

fn wrap<S: Scalar>(problem: &ProblemSpec, net: Jet2<S>, input: &[f64], seeded: Option<usize>) -> Result<Jet2<S>> {
    match (problem.constraint, &problem.trial) {
        (ConstraintMode::Hard, Some(trial)) => {
            let coords: Vec<_> = (0..trial.arity())
                .map(|i| Jet2::coordinate(input[i], Some(i) == seeded))
                .collect();
            hard_wrap(trial, net, &coords)
        }
        (ConstraintMode::Hard, None) => Err(Error::config("hard constraints need a trial form")),
        (ConstraintMode::Soft, _) => Ok(net),
    }
}

/// Per-sample interior term: the squared residual (strong) or the integrand (variational).
fn interior_term<'t>(
    tape: &'t Tape,
    problem: &ProblemSpec,
    cache: &BatchCache<'_>,
    out: &[Var<'t>],
    input: &[f64],
    j: usize,
) -> Result<Var<'t>> {
    let along0 = surrogate_jet(tape, problem, cache, out, input, 0, j)?;
    let along1 = surrogate_jet(tape, problem, cache, out, input, 1, j)?;
    let cd = problem.domain.coord_dim();
    let p = &input[cd..];
    let term = if problem.is_transient() {
        let x = &input[1..2];
        let a = problem.field.eval(x, p);
        diffusion_residual(along0, along1, a.value, a.grad[0], problem.forcing.eval(x)).square()
    } else {
        let x = &input[0..2];
        let f = problem.forcing.eval(x);
        match problem.loss {
            LossMode::Strong => heat_residual(along0, along1, problem.field.eval(x, p), f).square(),
            LossMode::Variational => heat_variational_integrand(along0, along1, problem.field.value(x, p), f),
        }
    };
    if !term.value().is_finite() {
        return Err(Error::numeric(format!(
            "non-finite residual at sample {j}, input {input:?}"
        )));
    }
    Ok(term)
}

struct Part<'a> {
    rows: ArrayView2<'a, f64>,
    cache: BatchCache<'a>,
}

/// Loss contribution and gradient of one shard; every term is divided by the full batch size `n_total`.
fn shard_loss(
    params: &NetworkParams,
    problem: &ProblemSpec,
    interior: ArrayView2<'_, f64>,
    boundary: Option<ArrayView2<'_, f64>>,
    initial: Option<ArrayView2<'_, f64>>,
    n_total: usize,
) -> Result<LossValue> {
    let n = n_total as f64;
    let variational = problem.loss == LossMode::Variational;
    let interior_scale = if variational { problem.domain.volume() } else { 1.0 } / n;
    let boundary_scale = problem.weights.boundary
        * if variational {
            problem.domain.boundary_measure()
        } else {
            1.0
        }
        / n;
    let initial_scale = problem.weights.initial / n;

    let int = Part {
        cache: forward_batch(params, interior, &interior_directions(problem))?,
        rows: interior,
    };
    let bnd = boundary
        .map(|rows| {
            Ok::<_, Error>(Part {
                cache: forward_batch(params, rows, &[])?,
                rows,
            })
        })
        .transpose()?;
    let ini = initial
        .map(|rows| {
            Ok::<_, Error>(Part {
                cache: forward_batch(params, rows, &[])?,
                rows,
            })
        })
        .transpose()?;

    let tape = Tape::with_capacity(64 * interior.nrows() + int.cache.outputs().len());
    let int_out = leaves(&tape, &int.cache);
    let bnd_out = bnd.as_ref().map(|b| leaves(&tape, &b.cache));
    let ini_out = ini.as_ref().map(|b| leaves(&tape, &b.cache));

    let mut total = tape.constant(0.0);
    for (j, row) in int.rows.rows().into_iter().enumerate() {
        let input = row.to_vec();
        total = total + interior_term(&tape, problem, &int.cache, &int_out, &input, j)? * interior_scale;
    }
    for (part, out, scale, initial) in [
        (&bnd, &bnd_out, boundary_scale, false),
        (&ini, &ini_out, initial_scale, true),
    ] {
        let (Some(part), Some(out)) = (part, out) else { continue };
        let sd = problem.space_offset();
        for (j, row) in part.rows.rows().into_iter().enumerate() {
            let x = &row.as_slice().expect("standard layout")[sd..sd + problem.domain.space_dim()];
            let target = if initial {
                problem.initial_value(x)
            } else {
                problem.boundary_value(x)
            };
            let r = out[part.cache.layout().value_row(j)] - target;
            if !r.value().is_finite() {
                return Err(Error::numeric(format!("non-finite constraint residual at sample {j}")));
            }
            total = total + r.square() * scale;
        }
    }

    let loss = total.value();
    let adjoints = tape.backward(total.id())?.gradient_map();
    let adj = adjoints.as_slice();
    let (a_int, rest) = adj.split_at(int_out.len());
    let mut gradient = int.cache.backward(a_int)?;
    let mut rest = rest;
    for part in [&bnd, &ini].into_iter().flatten() {
        let (a, r) = rest.split_at(part.cache.outputs().len());
        gradient.accumulate(&part.cache.backward(a)?);
        rest = r;
    }
    Ok(LossValue { loss, gradient })
}

/// Mini-batch loss of the problem's configured mode, evaluated in shards of `shard` samples.
///
/// Shards are processed in parallel and reduced in shard order, so the result
/// does not depend on the number of worker threads.
pub fn batch_loss<'a>(
    params: &NetworkParams,
    problem: &ProblemSpec,
    batch: &'a SampleBatch,
    shard: usize,
) -> Result<LossValue> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::usage("empty batch"));
    }
    if params.config().input_dim != problem.input_dim() {
        return Err(Error::usage(format!(
            "network reads {} inputs but the problem provides {}",
            params.config().input_dim,
            problem.input_dim()
        )));
    }
    let shard = shard.max(1);
    let starts: Vec<usize> = (0..n).step_by(shard).collect();
    let parts: Vec<Result<LossValue>> = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + shard).min(n);
            let cut = |m: &'a ndarray::Array2<f64>| m.slice(s![lo..hi, ..]);
            shard_loss(
                params,
                problem,
                cut(&batch.interior),
                batch.boundary.as_ref().map(cut),
                batch.initial.as_ref().map(cut),
                n,
            )
        })
        .collect();
    let mut loss = 0.0;
    let mut gradient = GradientMap::zeros(params.len());
    for part in parts {
        let part = part?;
        loss += part.loss;
        gradient.accumulate(&part.gradient);
    }
    Ok(LossValue { loss, gradient })
}

fn check_mode(problem: &ProblemSpec, mode: LossMode) -> Result<()> {
    if problem.loss != mode {
        return Err(Error::usage(format!(
            "problem is configured for the {} loss",
            problem.loss.name()
        )));
    }
    Ok(())
}

/// Mean squared PDE residual plus weighted constraint penalties in soft mode.
pub fn strong_batch_loss(params: &NetworkParams, problem: &ProblemSpec, batch: &SampleBatch) -> Result<LossValue> {
    check_mode(problem, LossMode::Strong)?;
    batch_loss(params, problem, batch, batch.len())
}

/// Volume-weighted mean energy integrand plus the boundary penalty in soft mode.
pub fn variational_batch_loss(params: &NetworkParams, problem: &ProblemSpec, batch: &SampleBatch) -> Result<LossValue> {
    check_mode(problem, LossMode::Variational)?;
    batch_loss(params, problem, batch, batch.len())
}

/// Surrogate values `u_h` at the given network inputs (trial form applied in hard mode).
pub fn surrogate_values(
    params: &NetworkParams,
    problem: &ProblemSpec,
    inputs: ArrayView2<'_, f64>,
) -> Result<Vec<f64>> {
    let cache = forward_batch(params, inputs, &[])?;
    inputs
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, row)| {
            let u = wrap(
                problem,
                Jet2::constant(cache.value(j)),
                row.as_slice().expect("standard layout"),
                None,
            )?
            .v;
            if u.is_finite() {
                Ok(u)
            } else {
                Err(Error::numeric(format!(
                    "non-finite surrogate value at input {:?}",
                    row.to_vec()
                )))
            }
        })
        .collect()
}

/// A spatial field on the plane with its gradient.
pub type Field2<'a> = &'a (dyn Fn(f64, f64) -> (f64, [f64; 2]) + Sync);
/// A spatially varying weight.
pub type Weight<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// One term of an energy integrand, paired with its first-variation rule.
#[derive(Clone, Copy)]
pub enum IntegrandTerm<'a> {
    /// `w·|∇u|²`, variation `w·2∇u·∇v`.
    GradSquared(Weight<'a>),
    /// `w·|u|^p`, variation `w·p|u|^{p−2}u·v`.
    Power(Weight<'a>, f64),
    /// `w·g(u)`, variation `w·g′(u)·v`.
    Composite(Weight<'a>, fn(f64) -> f64, fn(f64) -> f64),
}

impl IntegrandTerm<'_> {
    fn value(&self, x: f64, y: f64, u: f64, g: [f64; 2]) -> f64 {
        match self {
            IntegrandTerm::GradSquared(w) => w(x, y) * (g[0] * g[0] + g[1] * g[1]),
            IntegrandTerm::Power(w, p) => w(x, y) * u.abs().powf(*p),
            IntegrandTerm::Composite(w, g_fn, _) => w(x, y) * g_fn(u),
        }
    }

    fn variation(&self, x: f64, y: f64, u: f64, gu: [f64; 2], v: f64, gv: [f64; 2]) -> f64 {
        match self {
            IntegrandTerm::GradSquared(w) => w(x, y) * 2.0 * (gu[0] * gv[0] + gu[1] * gv[1]),
            IntegrandTerm::Power(w, p) => {
                let mag = if u == 0.0 { 0.0 } else { p * u.abs().powf(p - 2.0) * u };
                w(x, y) * mag * v
            }
            IntegrandTerm::Composite(w, _, dg) => w(x, y) * dg(u) * v,
        }
    }
}

/// Tensor-product midpoint rule on `[lo, hi]²` with `cells` cells per side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadGrid {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl QuadGrid {
    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let h = self.h();
        let mut sum = 0.0;
        for i in 0..self.cells {
            let x = self.lo + (i as f64 + 0.5) * h;
            for j in 0..self.cells {
                let y = self.lo + (j as f64 + 0.5) * h;
                sum += f(x, y);
            }
        }
        sum * h * h
    }
}

/// Quadrature of the energy `∫ Σ terms`.
pub fn energy(terms: &[IntegrandTerm<'_>], u: Field2<'_>, grid: &QuadGrid) -> f64 {
    grid.integrate(|x, y| {
        let (uv, ug) = u(x, y);
        terms.iter().map(|t| t.value(x, y, uv, ug)).sum()
    })
}

/// Quadrature of the weak form `∫ Σ δterms(u; v)` given by the rule table.
pub fn weak_form(terms: &[IntegrandTerm<'_>], u: Field2<'_>, v: Field2<'_>, grid: &QuadGrid) -> f64 {
    grid.integrate(|x, y| {
        let (uv, ug) = u(x, y);
        let (vv, vg) = v(x, y);
        terms.iter().map(|t| t.variation(x, y, uv, ug, vv, vg)).sum()
    })
}

/// `|(E(u + εv) − E(u))/ε − ∫ δE(u; v)|` on the quadrature grid.
pub fn first_variation_check(
    terms: &[IntegrandTerm<'_>],
    u: Field2<'_>,
    v: Field2<'_>,
    grid: &QuadGrid,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::usage("perturbation size must be positive"));
    }
    let shifted = |x: f64, y: f64| {
        let (a, ga) = u(x, y);
        let (b, gb) = v(x, y);
        (a + eps * b, [ga[0] + eps * gb[0], ga[1] + eps * gb[1]])
    };
    let numeric = (energy(terms, &shifted, grid) - energy(terms, u, grid)) / eps;
    Ok((numeric - weak_form(terms, u, v, grid)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_problem, Forcing, ProblemOverrides, ProblemTag, RandomField};
    use crate::resnet::{init_params, NetworkConfig};
    use crate::sampler::{sample_batch, stream_rng};
    use std::f64::consts::PI;

    #[test]
    fn constant_solution_leaves_forcing() {
        let c = Jet2::constant(4.2);
        assert_eq!(diffusion_residual(c, c, 0.7, 0.3, 3.0), -3.0);
    }

    #[test]
    fn steady_parabola_is_exact() {
        // u = c/(2a)·x(1−x): u_x = c/(2a)(1−2x), u_xx = −c/a
        let (a, c, x) = (0.26, 3.0, 0.37);
        let along_t = Jet2::new(0.0, 0.0, 0.0);
        let along_x = Jet2::new(c / (2.0 * a) * x * (1.0 - x), c / (2.0 * a) * (1.0 - 2.0 * x), -c / a);
        assert!(diffusion_residual(along_t, along_x, a, 0.0, c).abs() < 1e-14);
    }

    #[test]
    fn manufactured_sine_decay() {
        // u = sin(πx)e^{−t} at (0, 0.5): u_t = −1, u_x = 0, u_xx = −π²
        let along_t = Jet2::new(1.0, -1.0, 1.0);
        let along_x = Jet2::new(1.0, (PI * 0.5).cos() * PI, -PI * PI);
        let r = diffusion_residual(along_t, along_x, 0.26, 0.0, 3.0);
        assert!((r - (-1.0 + 0.26 * PI * PI - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn heat_integrand_arithmetic() {
        let z = Jet2::constant(0.0);
        assert_eq!(heat_variational_integrand(z, z, 3.0, 5.0), 0.0);
        let ux = Jet2::new(0.0, 1.0, 0.0);
        assert_eq!(heat_variational_integrand(ux, z, 2.0, 0.0), 1.0);
        // k = 1, f = c gives ½|∇u|² − c·u
        let (u, gx, gy, c) = (0.4, 0.3, -1.2, 2.0);
        let v = heat_variational_integrand(Jet2::new(u, gx, 0.0), Jet2::new(u, gy, 0.0), 1.0, c);
        assert!((v - (0.5 * (gx * gx + gy * gy) - c * u)).abs() < 1e-15);
    }

    #[test]
    fn translation_changes_integrand_by_forcing() {
        let (k, f, delta) = (1.7, 2.5, 0.3);
        let ax = Jet2::new(0.2, 0.5, 0.0);
        let ay = Jet2::new(0.2, -0.4, 0.0);
        let shifted = |j: Jet2<f64>| Jet2::new(j.v + delta, j.d1, j.d2);
        let diff =
            heat_variational_integrand(shifted(ax), shifted(ay), k, f) - heat_variational_integrand(ax, ay, k, f);
        assert!((diff + f * delta).abs() < 1e-15);
    }

    #[test]
    fn zero_network_on_source_free_problem_has_zero_loss() {
        let problem = build_problem(
            ProblemTag::HeatSquare,
            &ProblemOverrides {
                d: Some(2),
                loss: Some(LossMode::Strong),
                forcing: Some(Forcing::Constant(0.0)),
                ..Default::default()
            },
        )
        .unwrap();
        let params = NetworkParams::zeros(NetworkConfig::uniform(4, 8, 2)).unwrap();
        let batch = sample_batch(&problem, 16, &mut stream_rng(1, 0)).unwrap();
        let l = strong_batch_loss(&params, &problem, &batch).unwrap();
        assert!(l.loss < 1e-20);
    }

    #[test]
    fn batch_of_one_is_single_squared_residual() {
        let problem = build_problem(
            ProblemTag::DiffusionSmooth,
            &ProblemOverrides {
                d: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let params = init_params(&NetworkConfig::uniform(5, 8, 3), 2).unwrap();
        let batch = sample_batch(&problem, 1, &mut stream_rng(2, 0)).unwrap();
        let input = batch.interior.row(0).to_vec();
        let along = |dir: usize| {
            let net = crate::resnet::forward_jet(&params, &input, dir).unwrap();
            wrap(&problem, net, &input, Some(dir)).unwrap()
        };
        let a = problem.field.eval(&input[1..2], &input[2..]);
        let r = diffusion_residual(along(0), along(1), a.value, a.grad[0], 3.0);
        let l = strong_batch_loss(&params, &problem, &batch).unwrap();
        assert!((l.loss - r * r).abs() < 1e-12 * (r * r).max(1.0));
    }

    #[test]
    fn sharding_does_not_change_the_result_beyond_rounding() {
        let problem = build_problem(
            ProblemTag::HeatHole,
            &ProblemOverrides {
                d: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let params = init_params(&NetworkConfig::uniform(4, 8, 3), 3).unwrap();
        let batch = sample_batch(&problem, 20, &mut stream_rng(3, 0)).unwrap();
        let whole = batch_loss(&params, &problem, &batch, 20).unwrap();
        let split = batch_loss(&params, &problem, &batch, 6).unwrap();
        assert!((whole.loss - split.loss).abs() < 1e-12 * whole.loss.abs());
        for (a, b) in whole.gradient.as_slice().iter().zip(split.gradient.as_slice()) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
        let again = batch_loss(&params, &problem, &batch, 6).unwrap();
        assert_eq!(split, again);
    }

    #[test]
    fn wrong_mode_is_rejected() {
        let problem = build_problem(
            ProblemTag::HeatSquare,
            &ProblemOverrides {
                d: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let params = NetworkParams::zeros(NetworkConfig::uniform(3, 4, 1)).unwrap();
        let batch = sample_batch(&problem, 2, &mut stream_rng(4, 0)).unwrap();
        assert!(matches!(
            strong_batch_loss(&params, &problem, &batch),
            Err(Error::Usage(_))
        ));
        let wrong_net = NetworkParams::zeros(NetworkConfig::uniform(5, 4, 1)).unwrap();
        assert!(matches!(
            batch_loss(&wrong_net, &problem, &batch, 2),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn hard_surrogate_values_honour_trial() {
        let problem = build_problem(
            ProblemTag::DiffusionSmooth,
            &ProblemOverrides {
                d: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let params = init_params(&NetworkConfig::uniform(4, 8, 2), 5).unwrap();
        let inputs = ndarray::array![[0.3, 0.0, 0.2, 0.9], [0.0, 0.25, 0.5, 0.5]];
        let u = surrogate_values(&params, &problem, inputs.view()).unwrap();
        assert_eq!(u[0], 0.0);
        assert!((u[1] - 10.0 * 0.25 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn constant_field_override_is_used() {
        let problem = build_problem(
            ProblemTag::HeatSquare,
            &ProblemOverrides {
                d: Some(1),
                field: Some(RandomField::Constant(2.0)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(problem.field.value(&[0.3, 0.4], &[0.9]), 2.0);
    }

    #[test]
    fn gradients_match_finite_differences_in_every_mode() {
        use crate::autodiff::fd_gradient_error;
        use crate::problems::ConstraintMode::{Hard, Soft};
        let cases = [
            (ProblemTag::DiffusionSmooth, Hard, LossMode::Strong),
            (ProblemTag::DiffusionSmooth, Soft, LossMode::Strong),
            (ProblemTag::HeatSquare, Hard, LossMode::Variational),
            (ProblemTag::HeatSquare, Soft, LossMode::Variational),
            (ProblemTag::HeatSquare, Hard, LossMode::Strong),
            (ProblemTag::HeatHole, Soft, LossMode::Variational),
            (ProblemTag::HeatHole, Soft, LossMode::Strong),
        ];
        for (i, (tag, constraint, loss)) in cases.into_iter().enumerate() {
            let problem = build_problem(
                tag,
                &ProblemOverrides {
                    d: Some(2),
                    constraint: Some(constraint),
                    loss: Some(loss),
                    ..Default::default()
                },
            )
            .unwrap();
            let config = NetworkConfig::uniform(problem.input_dim(), 16, 3);
            let params = init_params(&config, 10 + i as u64).unwrap();
            let batch = sample_batch(&problem, 6, &mut stream_rng(20, i as u64)).unwrap();
            let analytic = batch_loss(&params, &problem, &batch, 4).unwrap();
            let f = |theta: &[f64]| -> Result<f64> {
                let q = NetworkParams::from_flat(config.clone(), theta.to_vec())?;
                Ok(batch_loss(&q, &problem, &batch, 4)?.loss)
            };
            let err = fd_gradient_error(f, params.as_slice(), analytic.gradient.as_slice(), 1e-5).unwrap();
            assert!(err < 1e-5, "{tag:?} {constraint:?} {loss:?}: {err}");
        }
    }

    fn poisson_terms<'a>(k: Weight<'a>, f: Weight<'a>) -> [IntegrandTerm<'a>; 2] {
        // (k/2)|∇u|² − f·u, with −f·u expressed as f·g(u), g(u) = −u
        fn neg(u: f64) -> f64 {
            -u
        }
        fn neg_prime(_: f64) -> f64 {
            -1.0
        }
        [
            IntegrandTerm::GradSquared(k),
            IntegrandTerm::Composite(f, neg, neg_prime),
        ]
    }

    #[test]
    fn zero_fields_have_zero_check() {
        let half = |_: f64, _: f64| 0.5;
        let one = |_: f64, _: f64| 1.0;
        let terms = poisson_terms(&half, &one);
        let zero = |_: f64, _: f64| (0.0, [0.0, 0.0]);
        let grid = QuadGrid {
            lo: -1.0,
            hi: 1.0,
            cells: 8,
        };
        assert_eq!(first_variation_check(&terms, &zero, &zero, &grid, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn weak_form_vanishes_at_exact_solution() {
        // u = (1−x²)(1−y²) solves −Δu = 2(1−x²) + 2(1−y²)
        let half = |_: f64, _: f64| 0.5;
        let f = |x: f64, y: f64| 2.0 * (1.0 - x * x) + 2.0 * (1.0 - y * y);
        let terms = poisson_terms(&half, &f);
        let u = |x: f64, y: f64| {
            (
                (1.0 - x * x) * (1.0 - y * y),
                [-2.0 * x * (1.0 - y * y), -2.0 * y * (1.0 - x * x)],
            )
        };
        let v = |x: f64, y: f64| {
            let (sx, cx) = (PI * (x + 1.0) / 2.0).sin_cos();
            let (sy, cy) = (PI * (y + 1.0) / 2.0).sin_cos();
            (sx * sy, [PI / 2.0 * cx * sy, PI / 2.0 * sx * cy])
        };
        let w32 = weak_form(
            &terms,
            &u,
            &v,
            &QuadGrid {
                lo: -1.0,
                hi: 1.0,
                cells: 32,
            },
        )
        .abs();
        let w64 = weak_form(
            &terms,
            &u,
            &v,
            &QuadGrid {
                lo: -1.0,
                hi: 1.0,
                cells: 64,
            },
        )
        .abs();
        assert!(w64 < 2e-3, "{w64}");
        assert!(
            w32 / w64 > 3.5,
            "midpoint rule should converge at second order: {w32} {w64}"
        );
    }

    #[test]
    fn power_and_composite_rules() {
        // |u|^3 and sin(u): compare the rule table with a difference quotient on one cell
        let one = |_: f64, _: f64| 1.0;
        let terms = [
            IntegrandTerm::Power(&one, 3.0),
            IntegrandTerm::Composite(&one, f64::sin, f64::cos),
        ];
        let u = |x: f64, y: f64| (x - 0.3 * y, [1.0, -0.3]);
        let v = |x: f64, y: f64| {
            (
                (1.0 - x * x) * (1.0 - y * y),
                [-2.0 * x * (1.0 - y * y), -2.0 * y * (1.0 - x * x)],
            )
        };
        let grid = QuadGrid {
            lo: -1.0,
            hi: 1.0,
            cells: 16,
        };
        let e3 = first_variation_check(&terms, &u, &v, &grid, 1e-3).unwrap();
        let e4 = first_variation_check(&terms, &u, &v, &grid, 1e-4).unwrap();
        assert!(e4 < e3 / 5.0 && e4 < 1e-3, "{e3} {e4}");
    }
}
