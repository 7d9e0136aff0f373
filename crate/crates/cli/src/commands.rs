//! The four subcommands. Each returns the paths it wrote.

use std::path::{Path, PathBuf};

use rpde_core::oracle::mc_ensemble;
use rpde_core::problems::ProblemSpec;
use rpde_core::stats::{compare_fields, field_stats, kde_pdf, pdf_abscissae, FieldComparison};
use rpde_core::train::{surrogate_ensemble, TrainState, Trainer};
use rpde_core::Error;

use crate::checkpoint::{Checkpoint, RunEcho};
use crate::config::RunConfig;
use crate::csvio::{read_loss, read_samples, read_stats, write_loss, write_pdfs, write_samples, write_stats, LossRow};
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

/// Settings shared by every subcommand after flags are applied.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    /// `out` replaces `output.dir` when given.
    pub fn new(mut config: RunConfig, out: Option<PathBuf>) -> Self {
        let out = out.unwrap_or_else(|| config.output.dir.clone());
        config.output.dir = out.clone();
        Context { config, out }
    }

    fn ensure_out(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }
}

fn matching_echo(expected: &RunEcho, found: &RunEcho, what: &str) -> CliResult<()> {
    if expected != found {
        return Err(Error::config(format!(
            "{what} was produced by a different run setup: {found:?}, config gives {expected:?}"
        ))
        .into());
    }
    Ok(())
}

pub fn train(ctx: &Context, resume: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let problem = cfg.problem()?;
    let net = cfg.network(&problem)?;
    let train_cfg = cfg.train();
    let echo = RunEcho::new(&problem, &train_cfg);
    ctx.ensure_out()?;
    let loss_path = ctx.out.join(LOSS_FILE);

    let (state, mut log) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            matching_echo(&echo, &ck.echo, &format!("checkpoint {}", path.display()))?;
            if ck.state.params.config() != &net || ck.state.adam.config != cfg.adam() {
                return Err(Error::config("checkpoint network or optimizer settings differ from the config").into());
            }
            let mut log = if loss_path.exists() {
                read_loss(&loss_path)?
            } else {
                Vec::new()
            };
            log.retain(|r| r.iteration <= ck.state.iteration);
            (ck.state, log)
        }
        None => (TrainState::fresh(&net, cfg.adam(), train_cfg.seed)?, Vec::new()),
    };

    let mut written = vec![];
    let save = |state: &TrainState, path: PathBuf, written: &mut Vec<PathBuf>| -> CliResult<()> {
        Checkpoint {
            echo: echo.clone(),
            state: state.clone(),
        }
        .save(&path)?;
        if !written.contains(&path) {
            written.push(path);
        }
        Ok(())
    };

    let log_every = cfg.train.log_every.max(1);
    let checkpoint_every = cfg.train.checkpoint_every;
    let mut trainer = Trainer::new(&problem, train_cfg, state)?;
    let mut pending: Option<CliError> = None;
    let outcome = trainer.run(|state, loss| {
        let it = state.iteration;
        if it % log_every == 0 {
            log.push(LossRow { iteration: it, loss });
            eprintln!("iteration {it} loss {loss:e}");
        }
        if checkpoint_every > 0 && it % checkpoint_every == 0 {
            let path = ctx.out.join(format!("checkpoint-{it:08}.ckpt"));
            if let Err(e) = save(state, path, &mut written).and_then(|_| write_loss(&loss_path, &log)) {
                pending = Some(e);
                return Err(Error::usage("checkpoint write failed"));
            }
        }
        Ok(())
    });
    if let Some(e) = pending {
        return Err(e);
    }
    write_loss(&loss_path, &log)?;
    outcome?;
    save(trainer.state(), ctx.out.join(CHECKPOINT_FILE), &mut written)?;
    written.push(loss_path);
    Ok(written)
}

/// Stats, long-form samples and densities for an ensemble, written under `prefix`.
fn write_ensemble(
    ctx: &Context,
    prefix: &str,
    probes: &[Vec<f64>],
    values: &ndarray::Array2<f64>,
) -> CliResult<Vec<PathBuf>> {
    ctx.ensure_out()?;
    let mut written = vec![];
    let samples_path = ctx.out.join(format!("{prefix}_samples.csv"));
    write_samples(&samples_path, values)?;
    written.push(samples_path);
    if values.nrows() < 2 {
        eprintln!("{prefix}: a single member has no spread; statistics skipped");
        return Ok(written);
    }
    let stats = field_stats(probes, values.view())?;
    let stats_path = ctx.out.join(format!("{prefix}_stats.csv"));
    write_stats(&stats_path, &stats)?;
    written.push(stats_path);
    if values.nrows() >= 30 {
        let mut pdfs = Vec::new();
        for (q, col) in values.columns().into_iter().enumerate() {
            let s = col.to_vec();
            match pdf_abscissae(&s, 5.0, ctx.config.eval.pdf_points).and_then(|x| kde_pdf(&s, &x)) {
                Ok(pdf) => pdfs.push((q, pdf)),
                // probes on a constrained manifold have no spread and get no density
                Err(Error::Degenerate(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let pdf_path = ctx.out.join(format!("{prefix}_pdf.csv"));
        write_pdfs(&pdf_path, &pdfs)?;
        written.push(pdf_path);
    }
    Ok(written)
}

pub fn oracle(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let problem = cfg.problem()?;
    let probes = cfg.probe_points(&problem)?;
    let run = mc_ensemble(&problem, &probes, &cfg.oracle(), cfg.oracle.seed)?;
    write_ensemble(ctx, "oracle", &probes, &run.values)
}

fn problem_matches(problem: &ProblemSpec, ck: &Checkpoint, ctx: &Context) -> CliResult<()> {
    let expected = RunEcho::new(problem, &ctx.config.train());
    let strip = |e: &RunEcho| RunEcho {
        seed: 0,
        batch: 0,
        shard: 0,
        ..e.clone()
    };
    matching_echo(&strip(&expected), &strip(&ck.echo), "checkpoint")
}

pub fn evaluate(ctx: &Context, checkpoint: &Path) -> CliResult<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let problem = cfg.problem()?;
    let ck = Checkpoint::load(checkpoint)?;
    problem_matches(&problem, &ck, ctx)?;
    let probes = cfg.probe_points(&problem)?;
    let values = surrogate_ensemble(&ck.state.params, &problem, &probes, cfg.eval.samples, cfg.eval.seed)?;
    write_ensemble(ctx, "surrogate", &probes, &values)
}

/// Thresholds applied by `compare`; the KS bound is only checked when given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub mean_rel_l2: f64,
    pub std_rel_l2: f64,
    pub ks: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            mean_rel_l2: 0.05,
            std_rel_l2: 0.15,
            ks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub metrics: FieldComparison,
    pub thresholds: Thresholds,
    pub failures: Vec<String>,
}

impl Report {
    pub fn render(&self) -> String {
        let m = &self.metrics;
        let t = &self.thresholds;
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = String::new();
        s += &format!(
            "mean_rel_l2 {:.6e} limit {} {}\n",
            m.mean_rel_l2,
            t.mean_rel_l2,
            verdict(m.mean_rel_l2 <= t.mean_rel_l2)
        );
        s += &format!(
            "std_rel_l2 {:.6e} limit {} {}\n",
            m.std_rel_l2,
            t.std_rel_l2,
            verdict(m.std_rel_l2 <= t.std_rel_l2)
        );
        s += &format!("mean_max_abs {:.6e}\n", m.mean_max_abs);
        s += &format!("std_max_abs {:.6e}\n", m.std_max_abs);
        if let Some(ks) = &m.ks {
            for (q, d) in ks.iter().enumerate() {
                let flag = match t.ks {
                    Some(limit) => format!(" limit {limit} {}", verdict(*d <= limit)),
                    None => String::new(),
                };
                s += &format!("ks probe {q} {d:.6}{flag}\n");
            }
        }
        s += &format!("verdict {}\n", verdict(self.failures.is_empty()));
        s
    }
}

/// Compares a surrogate stats file with an oracle stats file. Sample files, when both are
/// given, add per-probe KS distances.
pub fn compare(
    surrogate: &Path,
    oracle: &Path,
    samples: Option<(&Path, &Path)>,
    thresholds: Thresholds,
) -> CliResult<Report> {
    let a = read_stats(surrogate)?;
    let b = read_stats(oracle)?;
    let loaded = match samples {
        Some((sa, sb)) => Some((read_samples(sa)?, read_samples(sb)?)),
        None => None,
    };
    let metrics = compare_fields(&a, &b, loaded.as_ref().map(|(x, y)| (x.view(), y.view())))
        .map_err(|e| CliError::Schema(e.to_string()))?;
    let mut failures = vec![];
    if !(metrics.mean_rel_l2 <= thresholds.mean_rel_l2) {
        failures.push(format!(
            "mean relative L2 {:.4e} above {}",
            metrics.mean_rel_l2, thresholds.mean_rel_l2
        ));
    }
    if !(metrics.std_rel_l2 <= thresholds.std_rel_l2) {
        failures.push(format!(
            "std relative L2 {:.4e} above {}",
            metrics.std_rel_l2, thresholds.std_rel_l2
        ));
    }
    if let (Some(limit), Some(ks)) = (thresholds.ks, &metrics.ks) {
        for (q, d) in ks.iter().enumerate() {
            if *d > limit {
                failures.push(format!("KS distance {d:.4} at probe {q} above {limit}"));
            }
        }
    }
    Ok(Report {
        metrics,
        thresholds,
        failures,
    })
}
