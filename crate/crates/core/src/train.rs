//! Mini-batch training loop and surrogate ensemble evaluation.
//!
//! Each iteration draws a fresh batch from stream `iteration + 1` of the run seed
//! (stream 0 is left to parameter initialization), evaluates the configured loss,
//! and takes one Adam step. Since batches depend only on `(seed, iteration)`, a
//! run resumed from a checkpoint replays the uninterrupted loss sequence exactly.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::losses::{batch_loss, surrogate_values};
use crate::optimizer::{adam_step, AdamConfig, AdamState};
use crate::problems::{LossMode, ProblemSpec};
use crate::resnet::{init_params, NetworkConfig, NetworkParams};
use crate::sampler::{sample_batch, sample_params, stream_rng, ParamDist};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Samples per shard; shards are evaluated in parallel and reduced in order.
    pub shard: usize,
    /// Number of most recent losses kept in the state.
    pub loss_tail: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 32,
            iterations: 1000,
            seed: 0,
            shard: 32,
            loss_tail: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.shard == 0 {
            return Err(Error::config("shard size must be at least 1"));
        }
        Ok(())
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: NetworkParams,
    pub adam: AdamState,
    /// Completed iterations.
    pub iteration: u64,
    /// Most recent losses, oldest first.
    pub loss_tail: Vec<f64>,
}

impl TrainState {
    pub fn fresh(net: &NetworkConfig, adam: AdamConfig, seed: u64) -> Result<Self> {
        adam.validate()?;
        let params = init_params(net, seed)?;
        let len = params.len();
        Ok(TrainState {
            params,
            adam: AdamState::new(adam, len),
            iteration: 0,
            loss_tail: Vec::new(),
        })
    }
}

pub struct Trainer<'a> {
    problem: &'a ProblemSpec,
    config: TrainConfig,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(problem: &'a ProblemSpec, config: TrainConfig, state: TrainState) -> Result<Self> {
        config.validate()?;
        problem.validate()?;
        if state.params.config().input_dim != problem.input_dim() {
            return Err(Error::config(format!(
                "network input dimension {} does not match the problem's {}",
                state.params.config().input_dim,
                problem.input_dim()
            )));
        }
        if !state.params.config().activation.is_smooth() && problem.loss == LossMode::Strong {
            return Err(Error::config("strong-form residuals need a smooth activation"));
        }
        Ok(Trainer { problem, config, state })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Loss at the current parameters on the batch of iteration `iteration`.
    pub fn loss_at(&self, iteration: u64) -> Result<f64> {
        let mut rng = stream_rng(self.config.seed, iteration + 1);
        let batch = sample_batch(self.problem, self.config.batch, &mut rng)?;
        Ok(batch_loss(&self.state.params, self.problem, &batch, self.config.shard)?.loss)
    }

    /// One descent step; returns the loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let it = self.state.iteration;
        let tag = |e: Error| match e {
            Error::NumericFault(m) => Error::NumericFault(format!("iteration {it}: {m}")),
            other => other,
        };
        let mut rng = stream_rng(self.config.seed, it + 1);
        let batch = sample_batch(self.problem, self.config.batch, &mut rng)?;
        let value = batch_loss(&self.state.params, self.problem, &batch, self.config.shard).map_err(tag)?;
        adam_step(&mut self.state.adam, self.state.params.as_mut_slice(), &value.gradient).map_err(tag)?;
        self.state.iteration += 1;
        let tail = &mut self.state.loss_tail;
        tail.push(value.loss);
        if tail.len() > self.config.loss_tail {
            let excess = tail.len() - self.config.loss_tail;
            tail.drain(..excess);
        }
        Ok(value.loss)
    }

    /// Steps until `config.iterations` iterations are complete, calling `observe`
    /// with the state and the loss after every step.
    pub fn run(&mut self, mut observe: impl FnMut(&TrainState, f64) -> Result<()>) -> Result<()> {
        while self.state.iteration < self.config.iterations {
            let loss = self.step()?;
            observe(&self.state, loss)?;
        }
        Ok(())
    }
}

/// Parameter draw of ensemble member `member`: the same for surrogate and oracle runs sharing a seed.
pub fn member_params(seed: u64, member: u64, d: usize) -> Vec<f64> {
    sample_params(1, d, ParamDist::Uniform01, &mut stream_rng(seed, member))
        .into_raw_vec_and_offset()
        .0
}

/// Surrogate values at `probes` (time/space coordinates) for `samples` parameter draws.
///
/// Returns a `samples x probes` matrix.
pub fn surrogate_ensemble(
    params: &NetworkParams,
    problem: &ProblemSpec,
    probes: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let cd = problem.domain.coord_dim();
    for probe in probes {
        let mut input = probe.clone();
        input.extend(std::iter::repeat_n(0.5, problem.d));
        if probe.len() != cd || !problem.contains_input(&input) {
            return Err(Error::usage(format!("probe {probe:?} lies outside the domain")));
        }
    }
    let width = problem.input_dim();
    let mut out = Array2::zeros((samples, probes.len()));
    let chunk = 256;
    for lo in (0..samples).step_by(chunk) {
        let hi = (lo + chunk).min(samples);
        let mut inputs = Array2::zeros(((hi - lo) * probes.len(), width));
        for m in lo..hi {
            let p = member_params(seed, m as u64, problem.d);
            for (q, probe) in probes.iter().enumerate() {
                let mut row = inputs.row_mut((m - lo) * probes.len() + q);
                for (dst, src) in row.iter_mut().zip(probe.iter().chain(&p)) {
                    *dst = *src;
                }
            }
        }
        let u = surrogate_values(params, problem, inputs.view())?;
        for m in lo..hi {
            for q in 0..probes.len() {
                out[[m, q]] = u[(m - lo) * probes.len() + q];
            }
        }
    }
    Ok(out)
}
