//! Second-order forward jets along a single direction.

use std::ops::{Add, Mul, Neg, Sub};

use super::scalar::Scalar;
use super::tape::OpTag;
use crate::error::{Error, Result};

/// A value together with its first and second derivative along one seeded direction.
///
/// With `S = f64` this is plain forward mode. With `S = Var` every component is a
/// taped node, so derivatives of the jet components with respect to parameters
/// come out of one reverse sweep (forward-over-reverse).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2<S = f64> {
    pub v: S,
    pub d1: S,
    pub d2: S,
}

impl<S: Scalar> Jet2<S> {
    pub fn new(v: S, d1: S, d2: S) -> Self {
        Jet2 { v, d1, d2 }
    }

    /// A jet with vanishing derivatives.
    pub fn constant(v: S) -> Self {
        let zero = v.constant_like(0.0);
        Jet2 { v, d1: zero, d2: zero }
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    pub fn chain(self, g: S, g1: S, g2: S) -> Self {
        Jet2 {
            v: g,
            d1: g1 * self.d1,
            d2: g2 * self.d1 * self.d1 + g1 * self.d2,
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Jet2 {
            v: self.v * c,
            d1: self.d1 * c,
            d2: self.d2 * c,
        }
    }

    pub fn affine(self, a: f64, b: f64) -> Self {
        Jet2 {
            v: self.v * a + b,
            d1: self.d1 * a,
            d2: self.d2 * a,
        }
    }

    pub fn square(self) -> Self {
        Jet2 {
            v: self.v.square(),
            d1: self.v * self.d1 * 2.0,
            d2: (self.d1.square() + self.v * self.d2) * 2.0,
        }
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let t1 = -(t.square() - 1.0);
        let t2 = t * t1 * -2.0;
        self.chain(t, t1, t2)
    }

    pub fn sin(self) -> Self {
        let s = self.v.sin();
        let c = self.v.cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let s = self.v.sin();
        let c = self.v.cos();
        self.chain(c, -s, -c)
    }

    /// Product with a jet of known (untaped) numbers, e.g. a closed-form multiplier.
    pub fn mul_known(self, k: Jet2<f64>) -> Self {
        Jet2 {
            v: self.v * k.v,
            d1: self.d1 * k.v + self.v * k.d1,
            d2: self.d2 * k.v + self.d1 * (2.0 * k.d1) + self.v * k.d2,
        }
    }

    /// Sum with a jet of known numbers.
    pub fn add_known(self, k: Jet2<f64>) -> Self {
        Jet2 {
            v: self.v + k.v,
            d1: self.d1 + k.d1,
            d2: self.d2 + k.d2,
        }
    }
}

impl Jet2<f64> {
    /// The identity seeded along the direction: `(x, 1, 0)`.
    pub fn variable(x: f64) -> Self {
        Jet2 { v: x, d1: 1.0, d2: 0.0 }
    }

    /// Coordinate `x` seeded (`(x, 1, 0)`) when `seeded`, constant otherwise.
    pub fn coordinate(x: f64, seeded: bool) -> Self {
        if seeded {
            Jet2::variable(x)
        } else {
            Jet2::constant(x)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl<S: Scalar> Add for Jet2<S> {
    type Output = Jet2<S>;
    fn add(self, rhs: Self) -> Self {
        Jet2 {
            v: self.v + rhs.v,
            d1: self.d1 + rhs.d1,
            d2: self.d2 + rhs.d2,
        }
    }
}

impl<S: Scalar> Sub for Jet2<S> {
    type Output = Jet2<S>;
    fn sub(self, rhs: Self) -> Self {
        Jet2 {
            v: self.v - rhs.v,
            d1: self.d1 - rhs.d1,
            d2: self.d2 - rhs.d2,
        }
    }
}

impl<S: Scalar> Mul for Jet2<S> {
    type Output = Jet2<S>;
    fn mul(self, rhs: Self) -> Self {
        Jet2 {
            v: self.v * rhs.v,
            d1: self.d1 * rhs.v + self.v * rhs.d1,
            d2: self.d2 * rhs.v + self.d1 * rhs.d1 * 2.0 + self.v * rhs.d2,
        }
    }
}

impl<S: Scalar> Neg for Jet2<S> {
    type Output = Jet2<S>;
    fn neg(self) -> Self {
        Jet2 {
            v: -self.v,
            d1: -self.d1,
            d2: -self.d2,
        }
    }
}

impl<S: Scalar> Add<f64> for Jet2<S> {
    type Output = Jet2<S>;
    fn add(self, rhs: f64) -> Self {
        Jet2 {
            v: self.v + rhs,
            ..self
        }
    }
}

impl<S: Scalar> Mul<f64> for Jet2<S> {
    type Output = Jet2<S>;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

/// Applies a tagged operation to numeric jets.
///
/// Supported tags: `Add`, `Sub`, `Mul`, `Scale`, `Affine`, `Tanh`, `Sin`, `Cos`, `Square`.
pub fn jet_apply(op: OpTag, inputs: &[Jet2<f64>]) -> Result<Jet2<f64>> {
    let supported = matches!(
        op,
        OpTag::Add
            | OpTag::Sub
            | OpTag::Mul
            | OpTag::Scale(_)
            | OpTag::Affine(..)
            | OpTag::Tanh
            | OpTag::Sin
            | OpTag::Cos
            | OpTag::Square
    );
    if !supported {
        return Err(Error::usage(format!("{op:?} has no jet rule")));
    }
    if inputs.len() != op.arity() {
        return Err(Error::usage(format!(
            "{op:?} takes {} jets, got {}",
            op.arity(),
            inputs.len()
        )));
    }
    let a = inputs[0];
    Ok(match op {
        OpTag::Add => a + inputs[1],
        OpTag::Sub => a - inputs[1],
        OpTag::Mul => a * inputs[1],
        OpTag::Scale(c) => a.scale(c),
        OpTag::Affine(m, b) => a.affine(m, b),
        OpTag::Tanh => a.tanh(),
        OpTag::Sin => a.sin(),
        OpTag::Cos => a.cos(),
        OpTag::Square => a.square(),
        _ => unreachable!(),
    })
}
