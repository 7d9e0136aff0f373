//! Central finite-difference checks of reverse-mode gradients.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Largest `|analytic - fd| / max(1, |analytic|)` over all coordinates, where `fd` is
/// the central difference of `f` with step `h`.
pub fn fd_gradient_error<F>(mut f: F, theta: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::usage(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    if analytic.len() != theta.len() {
        return Err(Error::usage(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for k in 0..theta.len() {
        probe[k] = theta[k] + h;
        let fp = f(&probe)?;
        probe[k] = theta[k] - h;
        let fm = f(&probe)?;
        probe[k] = theta[k];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numeric(format!(
                "objective not finite when probing coordinate {k}"
            )));
        }
        let fd = (fp - fm) / (2.0 * h);
        let err = (analytic[k] - fd).abs() / analytic[k].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Records `f` on a fresh tape, differentiates it with one reverse sweep and compares
/// against central differences of re-recorded values.
pub fn gradient_check<F>(f: F, theta: &[f64], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = theta.iter().map(|&t| tape.input(t)).collect();
    let root = f(&tape, &vars);
    let analytic = tape.backward(root.id())?.gradient_map();

    let value = |x: &[f64]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = x.iter().map(|&t| tape.input(t)).collect();
        let out = f(&tape, &vars);
        match tape.fault() {
            Some(fault) => Err(Error::NumericFault(fault)),
            None => Ok(crate::autodiff::Scalar::value(&out)),
        }
    };
    fd_gradient_error(value, theta, analytic.as_slice(), h)
}
