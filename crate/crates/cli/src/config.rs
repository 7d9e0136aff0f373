//! Run configuration: a TOML file of dotted sections, validated before any compute.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use rpde_core::optimizer::AdamConfig;
use rpde_core::oracle::OracleConfig;
use rpde_core::problems::{build_problem, ConstraintMode, LossMode, ProblemOverrides, ProblemSpec, ProblemTag};
use rpde_core::resnet::{Activation, NetworkConfig};
use rpde_core::train::TrainConfig;
use rpde_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub tag: String,
    pub d: Option<usize>,
    pub constraint: Option<String>,
    pub loss: Option<String>,
    pub lambda_ic: Option<f64>,
    pub lambda_bc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub width: usize,
    pub layers: usize,
    pub block: usize,
    pub activation: String,
    /// Per-layer widths; overrides `width` and `layers` when present.
    pub widths: Option<Vec<usize>>,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            width: 64,
            layers: 6,
            block: 2,
            activation: "tanh".into(),
            widths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        AdamSection {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch: usize,
    pub iterations: u64,
    pub seed: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub shard: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch: 32,
            iterations: 1000,
            seed: 0,
            log_every: 1,
            checkpoint_every: 0,
            shard: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub samples: usize,
    pub nx: usize,
    pub nt: usize,
    /// Intervals per side of the 2D grid.
    pub grid: usize,
    pub seed: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        let o = OracleConfig::default();
        OracleSection {
            samples: o.samples,
            nx: o.nx,
            nt: o.nt,
            grid: o.cells,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub samples: usize,
    pub seed: u64,
    /// Abscissae per probe in the density output.
    pub pdf_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            samples: 2000,
            seed: 1,
            pdf_points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub points: Option<Vec<Vec<f64>>>,
    /// `default` picks the problem's standard probe set.
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub adam: AdamSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub probes: ProbeSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Configuration(m) => Error::Configuration(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every section by building the objects it describes.
    pub fn validate(&self) -> Result<()> {
        let problem = self.problem()?;
        let net = self.network(&problem)?;
        net.validate()?;
        self.adam().validate()?;
        self.train().validate()?;
        if self.train.iterations > 0 && self.train.log_every == 0 {
            return Err(Error::config("train.log_every must be at least 1"));
        }
        if self.oracle.samples == 0 {
            return Err(Error::config("oracle.samples must be at least 1"));
        }
        if self.eval.samples < 2 {
            return Err(Error::config("eval.samples must be at least 2"));
        }
        self.probe_points(&problem)?;
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let tag = ProblemTag::parse(&p.tag)?;
        let overrides = ProblemOverrides {
            d: p.d,
            constraint: p.constraint.as_deref().map(ConstraintMode::parse).transpose()?,
            loss: p.loss.as_deref().map(LossMode::parse).transpose()?,
            lambda_ic: p.lambda_ic,
            lambda_bc: p.lambda_bc,
            ..Default::default()
        };
        build_problem(tag, &overrides)
    }

    pub fn network(&self, problem: &ProblemSpec) -> Result<NetworkConfig> {
        let n = &self.net;
        let activation = Activation::parse(&n.activation)?;
        let base = match &n.widths {
            Some(w) => NetworkConfig {
                input_dim: problem.input_dim(),
                widths: w.clone(),
                block_size: n.block,
                activation,
            },
            None => NetworkConfig::uniform(problem.input_dim(), n.width, n.layers),
        };
        Ok(base.with_block_size(n.block).with_activation(activation))
    }

    pub fn adam(&self) -> AdamConfig {
        let a = &self.adam;
        AdamConfig {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }

    pub fn train(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch: t.batch,
            iterations: t.iterations,
            seed: t.seed,
            shard: t.shard,
            loss_tail: 100,
        }
    }

    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            samples: self.oracle.samples,
            nx: self.oracle.nx,
            nt: self.oracle.nt,
            cells: self.oracle.grid,
        }
    }

    pub fn probe_points(&self, problem: &ProblemSpec) -> Result<Vec<Vec<f64>>> {
        match (&self.probes.points, self.probes.preset.as_deref()) {
            (Some(_), Some(_)) => Err(Error::config("give either probes.points or probes.preset, not both")),
            (Some(points), None) => Ok(points.clone()),
            (None, None) | (None, Some("default")) => Ok(default_probes(problem.tag)),
            (None, Some(other)) => Err(Error::config(format!("unknown probe preset '{other}'"))),
        }
    }
}

/// Standard probes: 21 points along x at t = 0.5 and t = 1 for diffusion, a 9×9 interior
/// grid on the square, and two points left of the hole.
pub fn default_probes(tag: ProblemTag) -> Vec<Vec<f64>> {
    match tag {
        ProblemTag::DiffusionSmooth | ProblemTag::DiffusionNonsmooth => [0.5, 1.0]
            .iter()
            .flat_map(|&t| (0..=20).map(move |i| vec![t, i as f64 / 20.0]))
            .collect(),
        ProblemTag::HeatSquare => (1..=9)
            .flat_map(|j| (1..=9).map(move |i| vec![-1.0 + 0.2 * i as f64, -1.0 + 0.2 * j as f64]))
            .collect(),
        ProblemTag::HeatHole => vec![vec![-0.6, 0.0], vec![-0.6, -0.6]],
    }
}
