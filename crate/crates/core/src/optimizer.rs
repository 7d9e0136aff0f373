//! Adam with bias correction.

use crate::autodiff::GradientMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::config(format!("invalid Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        AdamState {
            config,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One Adam update of `theta`. A non-finite gradient leaves both `theta` and the state untouched.
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], g: &GradientMap) -> Result<()> {
    if g.len() != theta.len() || state.m.len() != theta.len() {
        return Err(Error::usage(format!(
            "gradient of length {} for {} parameters",
            g.len(),
            theta.len()
        )));
    }
    if let Some(k) = g.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(Error::numeric(format!("non-finite gradient entry {k}")));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((th, m), v), &gk) in theta.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(g.as_slice()) {
        *m = beta1 * *m + (1.0 - beta1) * gk;
        *v = beta2 * *v + (1.0 - beta2) * gk * gk;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *th -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
