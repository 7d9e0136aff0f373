//! The benchmark problems: geometry, random coefficient fields, forcing and
//! default training modes.
//!
//! Network inputs are laid out as `[t, x, p_1..p_d]` for the transient diffusion
//! problems and `[x, y, p_1..p_d]` for the steady heat problems.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::constraints::{PenaltyWeights, TrialForm};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemTag {
    DiffusionSmooth,
    DiffusionNonsmooth,
    HeatSquare,
    HeatHole,
}

impl ProblemTag {
    pub const ALL: [ProblemTag; 4] = [
        ProblemTag::DiffusionSmooth,
        ProblemTag::DiffusionNonsmooth,
        ProblemTag::HeatSquare,
        ProblemTag::HeatHole,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProblemTag::DiffusionSmooth => "diffusion-smooth",
            ProblemTag::DiffusionNonsmooth => "diffusion-nonsmooth",
            ProblemTag::HeatSquare => "heat-square",
            ProblemTag::HeatHole => "heat-hole",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::config(format!("unknown problem tag '{name}'")))
    }

    pub fn is_transient(&self) -> bool {
        matches!(self, ProblemTag::DiffusionSmooth | ProblemTag::DiffusionNonsmooth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    Hard,
    Soft,
}

impl ConstraintMode {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintMode::Hard => "hard",
            ConstraintMode::Soft => "soft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ConstraintMode::Hard),
            "soft" => Ok(ConstraintMode::Soft),
            _ => Err(Error::config(format!("unknown constraint mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    Strong,
    Variational,
}

impl LossMode {
    pub fn name(&self) -> &'static str {
        match self {
            LossMode::Strong => "strong",
            LossMode::Variational => "variational",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(LossMode::Strong),
            "variational" => Ok(LossMode::Variational),
            _ => Err(Error::config(format!("unknown loss mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
    /// `[−half, half]²`.
    Square { half: f64 },
    /// `[−half, half]²` minus the closed disc of `radius` at the origin.
    SquareWithHole { half: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub geometry: Geometry,
    /// Final time of a transient problem.
    pub horizon: Option<f64>,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        match self.geometry {
            Geometry::Interval { lo, hi } if !(hi > lo) => return Err(Error::config("interval must have hi > lo")),
            Geometry::Square { half } if !(half > 0.0) => {
                return Err(Error::config("square half-side must be positive"))
            }
            Geometry::SquareWithHole { half, radius } if !(half > 0.0 && radius > 0.0 && radius < half) => {
                return Err(Error::config("hole radius must lie in (0, half-side)"))
            }
            _ => {}
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("time horizon must be positive"));
            }
        }
        Ok(())
    }

    pub fn space_dim(&self) -> usize {
        match self.geometry {
            Geometry::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Number of leading non-random inputs (time plus space).
    pub fn coord_dim(&self) -> usize {
        self.space_dim() + usize::from(self.horizon.is_some())
    }

    /// Lebesgue measure of the spatial domain.
    pub fn volume(&self) -> f64 {
        match self.geometry {
            Geometry::Interval { lo, hi } => hi - lo,
            Geometry::Square { half } => 4.0 * half * half,
            Geometry::SquareWithHole { half, radius } => 4.0 * half * half - PI * radius * radius,
        }
    }

    /// Measure of the spatial boundary: point count in 1D, arc length in 2D.
    pub fn boundary_measure(&self) -> f64 {
        match self.geometry {
            Geometry::Interval { .. } => 2.0,
            Geometry::Square { half } => 8.0 * half,
            Geometry::SquareWithHole { half, radius } => 8.0 * half + 2.0 * PI * radius,
        }
    }

    /// Whether a spatial point lies in the closed domain (hole excluded, rim included).
    pub fn contains(&self, x: &[f64]) -> bool {
        match self.geometry {
            Geometry::Interval { lo, hi } => x.len() == 1 && x[0] >= lo && x[0] <= hi,
            Geometry::Square { half } => x.len() == 2 && x.iter().all(|c| c.abs() <= half),
            Geometry::SquareWithHole { half, radius } => {
                x.len() == 2 && x.iter().all(|c| c.abs() <= half) && x[0] * x[0] + x[1] * x[1] >= radius * radius
            }
        }
    }
}

/// Random coefficient `a(x, p)` or `k(x, y, p)` together with its spatial gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomField {
    /// `0.26 + Σ (0.05/j)·cos(πjx/2)·p_j`
    SmoothDiffusion,
    /// `0.2 + Σ (0.1/j)·cos²(πjx/2)·p_j`
    NonsmoothDiffusion,
    /// `1 + Σ (1/j)·cos²(π j^{3/2} xy / 4)·p_j`
    Conductivity,
    /// A deterministic constant, for verification runs.
    Constant(f64),
}

/// Value and spatial gradient of a coefficient field (unused gradient slots are zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub value: f64,
    pub grad: [f64; 2],
}

impl RandomField {
    /// Evaluates the field at spatial point `x` (length 1 or 2).
    pub fn eval(&self, x: &[f64], p: &[f64]) -> FieldValue {
        match *self {
            RandomField::SmoothDiffusion => {
                let (value, dx) = smooth_diffusion_coeff(x[0], p);
                FieldValue { value, grad: [dx, 0.0] }
            }
            RandomField::NonsmoothDiffusion => {
                let (value, dx) = nonsmooth_diffusion_coeff(x[0], p);
                FieldValue { value, grad: [dx, 0.0] }
            }
            RandomField::Conductivity => {
                let (value, dx, dy) = conductivity_with_gradient(x[0], x[1], p);
                FieldValue { value, grad: [dx, dy] }
            }
            RandomField::Constant(c) => FieldValue {
                value: c,
                grad: [0.0; 2],
            },
        }
    }

    pub fn value(&self, x: &[f64], p: &[f64]) -> f64 {
        match *self {
            RandomField::Conductivity => conductivity(x[0], x[1], p),
            _ => self.eval(x, p).value,
        }
    }
}

/// `(a, ∂a/∂x)` for the smooth diffusion field.
pub fn smooth_diffusion_coeff(x: f64, p: &[f64]) -> (f64, f64) {
    let mut a = 0.26;
    let mut ax = 0.0;
    for (i, &pj) in p.iter().enumerate() {
        let j = (i + 1) as f64;
        let (s, c) = (FRAC_PI_2 * j * x).sin_cos();
        a += 0.05 / j * c * pj;
        ax -= 0.05 * FRAC_PI_2 * s * pj;
    }
    (a, ax)
}

/// `(a, ∂a/∂x)` for the cos²-mode diffusion field.
pub fn nonsmooth_diffusion_coeff(x: f64, p: &[f64]) -> (f64, f64) {
    let mut a = 0.2;
    let mut ax = 0.0;
    for (i, &pj) in p.iter().enumerate() {
        let j = (i + 1) as f64;
        let c = (FRAC_PI_2 * j * x).cos();
        a += 0.1 / j * c * c * pj;
        // d/dx cos²(θx) = −θ sin(2θx)
        ax -= 0.1 * FRAC_PI_2 * (PI * j * x).sin() * pj;
    }
    (a, ax)
}

fn conductivity_frequency(j: f64) -> f64 {
    FRAC_PI_4 * j * j.sqrt()
}

pub fn conductivity(x: f64, y: f64, p: &[f64]) -> f64 {
    let xy = x * y;
    let mut k = 1.0;
    for (i, &pj) in p.iter().enumerate() {
        let j = (i + 1) as f64;
        let c = (conductivity_frequency(j) * xy).cos();
        k += c * c * pj / j;
    }
    k
}

/// `(k, ∂k/∂x, ∂k/∂y)`.
pub fn conductivity_with_gradient(x: f64, y: f64, p: &[f64]) -> (f64, f64, f64) {
    let xy = x * y;
    let mut k = 1.0;
    let mut dxy = 0.0; // ∂k/∂(xy)
    for (i, &pj) in p.iter().enumerate() {
        let j = (i + 1) as f64;
        let w = conductivity_frequency(j);
        let c = (w * xy).cos();
        k += c * c * pj / j;
        dxy -= w * (2.0 * w * xy).sin() * pj / j;
    }
    (k, dxy * y, dxy * x)
}

/// Source term of a steady or transient problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    Constant(f64),
    /// `scale·|x·y|`
    AbsProduct(f64),
}

impl Forcing {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Forcing::Constant(c) => c,
            Forcing::AbsProduct(s) => s * (x[0] * x[1]).abs(),
        }
    }
}

/// Forcing of a heat problem at `(x, y)`.
pub fn heat_forcing(tag: ProblemTag, x: f64, y: f64) -> Result<f64> {
    match tag {
        ProblemTag::HeatSquare => Ok(Forcing::AbsProduct(100.0).eval(&[x, y])),
        ProblemTag::HeatHole => Ok(Forcing::Constant(2.0).eval(&[x, y])),
        other => Err(Error::usage(format!("{} has no heat forcing", other.name()))),
    }
}

/// Optional changes to a problem's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemOverrides {
    pub d: Option<usize>,
    pub constraint: Option<ConstraintMode>,
    pub loss: Option<LossMode>,
    pub lambda_ic: Option<f64>,
    pub lambda_bc: Option<f64>,
    pub field: Option<RandomField>,
    pub forcing: Option<Forcing>,
}

/// A fully specified problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub tag: ProblemTag,
    pub domain: DomainSpec,
    pub field: RandomField,
    pub forcing: Forcing,
    /// Scale of the initial profile `ic_scale·x(1−x)` for transient problems.
    pub initial_scale: Option<f64>,
    pub d: usize,
    pub constraint: ConstraintMode,
    pub loss: LossMode,
    pub weights: PenaltyWeights,
    pub trial: Option<TrialForm>,
}

impl ProblemSpec {
    pub fn input_dim(&self) -> usize {
        self.domain.coord_dim() + self.d
    }

    pub fn is_transient(&self) -> bool {
        self.domain.horizon.is_some()
    }

    /// Index of the first spatial coordinate within a network input.
    pub fn space_offset(&self) -> usize {
        usize::from(self.is_transient())
    }

    /// Initial value at spatial point `x`; zero for steady problems.
    pub fn initial_value(&self, x: &[f64]) -> f64 {
        match self.initial_scale {
            Some(s) => s * x[0] * (1.0 - x[0]),
            None => 0.0,
        }
    }

    /// Dirichlet value on the spatial boundary (homogeneous for every shipped problem).
    pub fn boundary_value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    /// Whether a network input lies inside the space-time-parameter domain.
    pub fn contains_input(&self, input: &[f64]) -> bool {
        if input.len() != self.input_dim() {
            return false;
        }
        if let Some(t_end) = self.domain.horizon {
            if !(input[0] >= 0.0 && input[0] <= t_end) {
                return false;
            }
        }
        let s = self.space_offset();
        self.domain.contains(&input[s..s + self.domain.space_dim()])
            && input[self.domain.coord_dim()..].iter().all(|p| (0.0..=1.0).contains(p))
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.weights.validate()?;
        if self.d == 0 {
            return Err(Error::config("stochastic dimension d must be at least 1"));
        }
        if self.loss == LossMode::Variational && self.is_transient() {
            return Err(Error::config(format!(
                "{}: the variational loss is only available for steady problems",
                self.tag.name()
            )));
        }
        if self.constraint == ConstraintMode::Hard && self.trial.is_none() {
            return Err(Error::config(format!(
                "{}: no hard trial form exists for this geometry",
                self.tag.name()
            )));
        }
        if let RandomField::Constant(c) = self.field {
            if !(c > 0.0) {
                return Err(Error::config("constant coefficient must be positive"));
            }
        }
        Ok(())
    }
}

/// Builds a problem with its default settings, then applies `overrides`.
pub fn build_problem(tag: ProblemTag, overrides: &ProblemOverrides) -> Result<ProblemSpec> {
    let unit = DomainSpec {
        geometry: Geometry::Interval { lo: 0.0, hi: 1.0 },
        horizon: Some(1.0),
    };
    let square = DomainSpec {
        geometry: Geometry::Square { half: 1.0 },
        horizon: None,
    };
    let diffusion_trial = TrialForm::IntervalWithInitial { ic_scale: 10.0 };
    let mut spec = match tag {
        ProblemTag::DiffusionSmooth | ProblemTag::DiffusionNonsmooth => ProblemSpec {
            tag,
            domain: unit,
            field: if tag == ProblemTag::DiffusionSmooth {
                RandomField::SmoothDiffusion
            } else {
                RandomField::NonsmoothDiffusion
            },
            forcing: Forcing::Constant(3.0),
            initial_scale: Some(10.0),
            d: if tag == ProblemTag::DiffusionSmooth { 100 } else { 50 },
            constraint: ConstraintMode::Hard,
            loss: LossMode::Strong,
            weights: PenaltyWeights::default(),
            trial: Some(diffusion_trial),
        },
        ProblemTag::HeatSquare => ProblemSpec {
            tag,
            domain: square,
            field: RandomField::Conductivity,
            forcing: Forcing::AbsProduct(100.0),
            initial_scale: None,
            d: 50,
            constraint: ConstraintMode::Hard,
            loss: LossMode::Variational,
            weights: PenaltyWeights {
                initial: 0.0,
                boundary: 1.0,
            },
            trial: Some(TrialForm::SquareBubble),
        },
        ProblemTag::HeatHole => ProblemSpec {
            tag,
            domain: DomainSpec {
                geometry: Geometry::SquareWithHole { half: 1.0, radius: 0.3 },
                horizon: None,
            },
            field: RandomField::Conductivity,
            forcing: Forcing::Constant(2.0),
            initial_scale: None,
            d: 30,
            constraint: ConstraintMode::Soft,
            loss: LossMode::Variational,
            weights: PenaltyWeights {
                initial: 0.0,
                boundary: 1000.0,
            },
            trial: None,
        },
    };
    if let Some(d) = overrides.d {
        spec.d = d;
    }
    if let Some(c) = overrides.constraint {
        spec.constraint = c;
    }
    if let Some(l) = overrides.loss {
        spec.loss = l;
    }
    if let Some(l) = overrides.lambda_ic {
        if !spec.is_transient() {
            return Err(Error::config(format!(
                "{} is steady; an initial-condition weight has no meaning",
                tag.name()
            )));
        }
        spec.weights.initial = l;
    }
    if let Some(l) = overrides.lambda_bc {
        spec.weights.boundary = l;
    }
    if let Some(f) = overrides.field {
        spec.field = f;
    }
    if let Some(f) = overrides.forcing {
        spec.forcing = f;
    }
    spec.validate()?;
    Ok(spec)
}
