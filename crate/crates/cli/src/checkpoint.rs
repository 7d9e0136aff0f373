//! Checkpoint files: a text header of `key value` lines closed by `end`, then
//! little-endian f64 blocks for the parameters, the two Adam moments and the loss tail.

use std::io::Write;
use std::path::Path;

use rpde_core::optimizer::{AdamConfig, AdamState};
use rpde_core::problems::ProblemSpec;
use rpde_core::resnet::{Activation, NetworkConfig, NetworkParams};
use rpde_core::train::{TrainConfig, TrainState};

use crate::error::{CliError, CliResult};

pub const MAGIC: &str = "RPDE-CHECKPOINT";
pub const VERSION: u32 = 1;

/// The run settings a resumed run must share with the original.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEcho {
    pub problem: String,
    pub d: usize,
    pub constraint: String,
    pub loss: String,
    pub lambda_ic: f64,
    pub lambda_bc: f64,
    pub seed: u64,
    pub batch: usize,
    pub shard: usize,
}

impl RunEcho {
    pub fn new(problem: &ProblemSpec, train: &TrainConfig) -> Self {
        RunEcho {
            problem: problem.tag.name().into(),
            d: problem.d,
            constraint: problem.constraint.name().into(),
            loss: problem.loss.name().into(),
            lambda_ic: problem.weights.initial,
            lambda_bc: problem.weights.boundary,
            seed: train.seed,
            batch: train.batch,
            shard: train.shard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub echo: RunEcho,
    pub state: TrainState,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let net = s.params.config();
        let e = &self.echo;
        let a = &s.adam.config;
        let mut head = format!("{MAGIC} {VERSION}\n");
        let mut kv = |k: &str, v: String| head.push_str(&format!("{k} {v}\n"));
        kv("problem", e.problem.clone());
        kv("d", e.d.to_string());
        kv("constraint", e.constraint.clone());
        kv("loss", e.loss.clone());
        kv("lambda_ic", format!("{:?}", e.lambda_ic));
        kv("lambda_bc", format!("{:?}", e.lambda_bc));
        kv("seed", e.seed.to_string());
        kv("batch", e.batch.to_string());
        kv("shard", e.shard.to_string());
        kv("input_dim", net.input_dim.to_string());
        kv("widths", join(&net.widths));
        kv("block", net.block_size.to_string());
        kv("activation", net.activation.name().into());
        kv("adam_lr", format!("{:?}", a.lr));
        kv("adam_beta1", format!("{:?}", a.beta1));
        kv("adam_beta2", format!("{:?}", a.beta2));
        kv("adam_eps", format!("{:?}", a.eps));
        kv("adam_step", s.adam.step.to_string());
        kv("iteration", s.iteration.to_string());
        // batches are drawn from stream iteration + 1, so this is the only RNG counter
        kv("next_stream", (s.iteration + 1).to_string());
        kv("params", s.params.len().to_string());
        kv("tail", s.loss_tail.len().to_string());
        head.push_str("end\n");
        let mut out = head.into_bytes();
        for block in [s.params.as_slice(), &s.adam.m, &s.adam.v, &s.loss_tail] {
            for x in block {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let schema = |m: String| CliError::Schema(format!("checkpoint: {m}"));
        let first_nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| schema("missing header".into()))?;
        let first = std::str::from_utf8(&bytes[..first_nl]).map_err(|_| schema("header is not text".into()))?;
        match first.split_once(' ') {
            Some((MAGIC, v)) if v == VERSION.to_string() => {}
            Some((MAGIC, v)) => {
                return Err(schema(format!(
                    "format version {v} is not supported (expected {VERSION})"
                )))
            }
            _ => return Err(schema("not a checkpoint file".into())),
        }
        let end = bytes
            .windows(5)
            .position(|w| w == b"\nend\n")
            .ok_or_else(|| schema("header has no end marker".into()))?;
        let header =
            std::str::from_utf8(&bytes[first_nl + 1..end + 1]).map_err(|_| schema("header is not text".into()))?;
        let mut map = std::collections::BTreeMap::new();
        for line in header.lines() {
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| schema(format!("malformed line '{line}'")))?;
            map.insert(k, v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| schema(format!("missing key '{k}'")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> CliResult<T> {
            v.parse()
                .map_err(|_| CliError::Schema(format!("checkpoint: bad value '{v}' for '{k}'")))
        }
        let n = |k: &str| -> CliResult<usize> { num(k, get(k)?) };
        let u = |k: &str| -> CliResult<u64> { num(k, get(k)?) };
        let f = |k: &str| -> CliResult<f64> { num(k, get(k)?) };

        let echo = RunEcho {
            problem: get("problem")?.into(),
            d: n("d")?,
            constraint: get("constraint")?.into(),
            loss: get("loss")?.into(),
            lambda_ic: f("lambda_ic")?,
            lambda_bc: f("lambda_bc")?,
            seed: u("seed")?,
            batch: n("batch")?,
            shard: n("shard")?,
        };
        let widths = get("widths")?
            .split(' ')
            .map(|w| num::<usize>("widths", w))
            .collect::<CliResult<Vec<_>>>()?;
        let net = NetworkConfig {
            input_dim: n("input_dim")?,
            widths,
            block_size: n("block")?,
            activation: Activation::parse(get("activation")?)?,
        };
        let adam_cfg = AdamConfig {
            lr: f("adam_lr")?,
            beta1: f("adam_beta1")?,
            beta2: f("adam_beta2")?,
            eps: f("adam_eps")?,
        };
        let iteration = u("iteration")?;
        if u("next_stream")? != iteration + 1 {
            return Err(schema("stream counter disagrees with the iteration count".into()));
        }
        let (np, nt) = (n("params")?, n("tail")?);
        let body = &bytes[end + 5..];
        if body.len() != 8 * (3 * np + nt) {
            return Err(schema(format!(
                "expected {} data bytes, found {}",
                8 * (3 * np + nt),
                body.len()
            )));
        }
        let mut floats = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |k: usize| floats.by_ref().take(k).collect::<Vec<f64>>();
        let params = NetworkParams::from_flat(net, take(np))?;
        let (m, v, loss_tail) = (take(np), take(np), take(nt));
        Ok(Checkpoint {
            echo,
            state: TrainState {
                params,
                adam: AdamState {
                    config: adam_cfg,
                    step: u("adam_step")?,
                    m,
                    v,
                },
                iteration,
                loss_tail,
            },
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
