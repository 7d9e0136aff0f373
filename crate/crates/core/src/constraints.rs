//! Hard trial forms and soft penalty weights for initial/boundary conditions.
//!
//! A hard trial form writes the surrogate as `u = C + M·N` where `N` is the raw
//! network output, `C` satisfies every initial and boundary condition and `M`
//! vanishes wherever a condition is imposed. The conditions then hold for any
//! network parameters.

use crate::autodiff::{Jet2, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialForm {
    /// Transient problem on `[0, 1]` with `u(0, x) = ic_scale·x(1−x)` and zero ends:
    /// `C = ic_scale·x(1−x)`, `M = t·x(1−x)`. Coordinates are `(t, x)`.
    IntervalWithInitial { ic_scale: f64 },
    /// Steady problem on `[−1, 1]²` with zero boundary values:
    /// `C = 0`, `M = (1−x²)(1−y²)`. Coordinates are `(x, y)`.
    SquareBubble,
}

impl TrialForm {
    /// Number of coordinates the form reads.
    pub fn arity(&self) -> usize {
        2
    }

    /// `(C, M)` as jets of the given coordinate jets.
    pub fn factors(&self, coords: &[Jet2<f64>]) -> Result<(Jet2<f64>, Jet2<f64>)> {
        if coords.len() != self.arity() {
            return Err(Error::usage(format!(
                "trial form reads {} coordinates, got {}",
                self.arity(),
                coords.len()
            )));
        }
        Ok(match *self {
            TrialForm::IntervalWithInitial { ic_scale } => {
                let (t, x) = (coords[0], coords[1]);
                let q = x - x.square();
                (q.scale(ic_scale), t * q)
            }
            TrialForm::SquareBubble => {
                let (x, y) = (coords[0], coords[1]);
                let mx = -x.square() + 1.0;
                let my = -y.square() + 1.0;
                (Jet2::constant(0.0), mx * my)
            }
        })
    }

    /// Prescribed value `C` at a point (the value on the constraint manifold).
    pub fn prescribed(&self, coords: &[f64]) -> Result<f64> {
        let jets: Vec<_> = coords.iter().map(|&c| Jet2::constant(c)).collect();
        Ok(self.factors(&jets)?.0.v)
    }
}

/// `u = C + M·net` with exact jet rules. `coords` are the trial coordinates as jets
/// seeded along the same direction as `net`.
pub fn hard_wrap<S: Scalar>(trial: &TrialForm, net: Jet2<S>, coords: &[Jet2<f64>]) -> Result<Jet2<S>> {
    let (c, m) = trial.factors(coords)?;
    Ok(net.mul_known(m).add_known(c))
}

/// Weights of the squared initial-condition and boundary residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub initial: f64,
    pub boundary: f64,
}

impl PenaltyWeights {
    pub fn new(initial: f64, boundary: f64) -> Result<Self> {
        let w = PenaltyWeights { initial, boundary };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial >= 0.0 && self.initial.is_finite()) || !(self.boundary >= 0.0 && self.boundary.is_finite()) {
            return Err(Error::config(format!(
                "penalty weights must be finite and nonnegative, got ({}, {})",
                self.initial, self.boundary
            )));
        }
        Ok(())
    }
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        PenaltyWeights {
            initial: 1.0,
            boundary: 1.0,
        }
    }
}

/// `λ_I·r_I² + λ_B·r_B²`.
pub fn soft_penalty(residual_ic: f64, residual_bc: f64, w: PenaltyWeights) -> f64 {
    w.initial * residual_ic * residual_ic + w.boundary * residual_bc * residual_bc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DIFFUSION: TrialForm = TrialForm::IntervalWithInitial { ic_scale: 10.0 };

    fn wrap_value(trial: &TrialForm, coords: [f64; 2], net: f64) -> f64 {
        let jets = coords.map(Jet2::constant);
        hard_wrap(trial, Jet2::constant(net), &jets).unwrap().v
    }

    #[test]
    fn diffusion_trial_at_initial_time() {
        for net in [-3.0, 0.0, 17.5] {
            let x = 0.3;
            assert!((wrap_value(&DIFFUSION, [0.0, x], net) - 10.0 * (x - x * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn diffusion_trial_at_ends() {
        for t in [0.0, 0.4, 1.0] {
            assert_eq!(wrap_value(&DIFFUSION, [t, 0.0], 5.0), 0.0);
            assert_eq!(wrap_value(&DIFFUSION, [t, 1.0], 5.0), 0.0);
        }
    }

    #[test]
    fn square_trial_on_edge() {
        assert_eq!(wrap_value(&TrialForm::SquareBubble, [1.0, 0.3], 8.0), 0.0);
        assert_eq!(wrap_value(&TrialForm::SquareBubble, [-0.2, -1.0], 8.0), 0.0);
    }

    #[test]
    fn penalty_arithmetic() {
        assert_eq!(soft_penalty(0.0, 0.0, PenaltyWeights::default()), 0.0);
        assert_eq!(
            soft_penalty(1.0, 2.0, PenaltyWeights::new(1.0, 1000.0).unwrap()),
            4001.0
        );
        let hole = PenaltyWeights::new(0.0, 1000.0).unwrap();
        assert!((soft_penalty(0.0, 0.05, hole) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(matches!(PenaltyWeights::new(-1.0, 1.0), Err(Error::Configuration(_))));
        assert!(matches!(
            PenaltyWeights::new(1.0, f64::NAN),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn wrapped_jets_match_finite_differences() {
        // net along the seeded direction is modelled by s -> 0.7 + 1.3 s - 0.4 s^2
        let net_at = |s: f64| 0.7 + 1.3 * s - 0.4 * s * s;
        let net = Jet2::new(0.7, 1.3, -0.8);
        for trial in [DIFFUSION, TrialForm::SquareBubble] {
            for dir in 0..2 {
                let base = [0.35, -0.45];
                let f = |s: f64| {
                    let mut c = base;
                    c[dir] += s;
                    wrap_value(&trial, c, net_at(s))
                };
                let h = 1e-3;
                let d1 = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
                let d2 = (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h);
                let coords = [0, 1].map(|i| Jet2::coordinate(base[i], i == dir));
                let j = hard_wrap(&trial, net, &coords).unwrap();
                assert!((j.d1 - d1).abs() / d1.abs().max(1.0) < 1e-6);
                assert!((j.d2 - d2).abs() / d2.abs().max(1.0) < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn manifold_values_ignore_network(t in 0.0f64..1.0, s in -1.0f64..1.0, net in -1e3f64..1e3) {
            prop_assert_eq!(wrap_value(&DIFFUSION, [t, 0.0], net), 0.0);
            prop_assert_eq!(wrap_value(&DIFFUSION, [t, 1.0], net), 0.0);
            let x = (s + 1.0) / 2.0;
            prop_assert!((wrap_value(&DIFFUSION, [0.0, x], net) - 10.0 * (x - x * x)).abs() < 1e-12);
            for edge in [[1.0, s], [-1.0, s], [s, 1.0], [s, -1.0]] {
                prop_assert_eq!(wrap_value(&TrialForm::SquareBubble, edge, net), 0.0);
            }
        }
    }
}
