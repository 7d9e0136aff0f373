//! Scalar Wengert tape with a single reverse sweep.
//!
//! Every node stores its value and the local partial derivatives with respect to
//! at most two parents, so the reverse sweep is a plain multiply-accumulate over
//! the node list in reverse order.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Mul, Neg, Sub};

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Operation tag of a recorded node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpTag {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Neg,
    /// `c * x`
    Scale(f64),
    /// `a * x + b`
    Affine(f64, f64),
    Tanh,
    Sin,
    Cos,
    Square,
    Exp,
}

impl OpTag {
    /// Number of parents a node with this tag carries.
    pub fn arity(&self) -> usize {
        match self {
            OpTag::Leaf | OpTag::Const => 0,
            OpTag::Add | OpTag::Sub | OpTag::Mul => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub value: f64,
    pub op: OpTag,
    parents: [(u32, f64); 2],
    arity: u8,
}

impl Node {
    /// `(parent id, local partial)` pairs.
    pub fn parents(&self) -> &[(u32, f64)] {
        &self.parents[..self.arity as usize]
    }
}

/// Append-only record of a scalar computation.
///
/// A tape is owned by one worker. It is filled during a forward pass, swept once
/// by [`Tape::backward`], and cleared before the next iteration; the node buffer
/// keeps its capacity across clears.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    inputs: RefCell<Vec<NodeId>>,
    fault: RefCell<Option<String>>,
    faulted: Cell<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.nodes.borrow().capacity()
    }

    /// Drops all nodes and marks while keeping the allocation.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.inputs.get_mut().clear();
        *self.fault.get_mut() = None;
        self.faulted.set(false);
    }

    pub fn node(&self, id: NodeId) -> Option<Node> {
        self.nodes.borrow().get(id.index()).copied()
    }

    /// Ids of the marked input leaves, in marking order.
    pub fn inputs(&self) -> Vec<NodeId> {
        self.inputs.borrow().clone()
    }

    /// Appends a node after validating its parents and numbers.
    pub fn record(&self, op: OpTag, inputs: &[NodeId], value: f64, partials: &[f64]) -> Result<NodeId> {
        if inputs.len() != op.arity() || partials.len() != inputs.len() {
            return Err(Error::usage(format!(
                "{op:?} takes {} inputs, got {} inputs and {} partials",
                op.arity(),
                inputs.len(),
                partials.len()
            )));
        }
        let len = self.len();
        if let Some(bad) = inputs.iter().find(|id| id.index() >= len) {
            return Err(Error::usage(format!("input node {} is not on the tape", bad.0)));
        }
        if !value.is_finite() || partials.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric(format!(
                "{op:?} produced value {value} with partials {partials:?}"
            )));
        }
        let mut parents = [(0u32, 0.0); 2];
        for (slot, (id, d)) in parents.iter_mut().zip(inputs.iter().zip(partials)) {
            *slot = (id.0, *d);
        }
        Ok(self.push(op, value, parents, inputs.len() as u8))
    }

    fn push(&self, op: OpTag, value: f64, parents: [(u32, f64); 2], arity: u8) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        let id = NodeId(nodes.len() as u32);
        if !self.faulted.get() && (!value.is_finite() || parents[..arity as usize].iter().any(|p| !p.1.is_finite())) {
            self.faulted.set(true);
            *self.fault.borrow_mut() = Some(format!("{op:?} at node {} produced {value}", id.0));
        }
        nodes.push(Node {
            value,
            op,
            parents,
            arity,
        });
        id
    }

    /// Records a differentiable leaf and marks it as an input of the gradient map.
    pub fn input(&self, value: f64) -> Var<'_> {
        let id = self.push(OpTag::Leaf, value, [(0, 0.0); 2], 0);
        self.inputs.borrow_mut().push(id);
        Var { tape: self, id, value }
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        let id = self.push(OpTag::Const, value, [(0, 0.0); 2], 0);
        Var { tape: self, id, value }
    }

    /// Handle to an existing node.
    pub fn var(&self, id: NodeId) -> Result<Var<'_>> {
        let node = self
            .node(id)
            .ok_or_else(|| Error::usage(format!("node {} is not on the tape", id.0)))?;
        Ok(Var {
            tape: self,
            id,
            value: node.value,
        })
    }

    /// First numeric fault recorded through operator overloading, if any.
    pub fn fault(&self) -> Option<String> {
        self.fault.borrow().clone()
    }

    /// One reverse sweep from `root` down to node 0.
    pub fn backward(&self, root: NodeId) -> Result<Adjoints> {
        let nodes = self.nodes.borrow();
        if root.index() >= nodes.len() {
            return Err(Error::usage(format!(
                "root node {} is not on a tape of {} nodes",
                root.0,
                nodes.len()
            )));
        }
        if let Some(fault) = self.fault() {
            return Err(Error::NumericFault(fault));
        }
        let mut adj = vec![0.0; root.index() + 1];
        adj[root.index()] = 1.0;
        let mut visits = 0usize;
        for i in (0..=root.index()).rev() {
            visits += 1;
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for &(p, d) in node.parents() {
                adj[p as usize] += a * d;
            }
        }
        Ok(Adjoints {
            adjoints: adj,
            inputs: self.inputs.borrow().clone(),
            visits,
        })
    }
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Adjoints {
    adjoints: Vec<f64>,
    inputs: Vec<NodeId>,
    visits: usize,
}

impl Adjoints {
    /// `d root / d node`; zero for nodes recorded after the root.
    pub fn wrt(&self, id: NodeId) -> f64 {
        self.adjoints.get(id.index()).copied().unwrap_or(0.0)
    }

    /// Number of nodes the sweep visited.
    pub fn visits(&self) -> usize {
        self.visits
    }

    /// Gradient with respect to the marked inputs, in marking order.
    pub fn gradient_map(&self) -> GradientMap {
        GradientMap(self.inputs.iter().map(|&id| self.wrt(id)).collect())
    }
}

/// Per-parameter partial derivatives, indexed like the parameter vector they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap(pub Vec<f64>);

impl GradientMap {
    pub fn zeros(len: usize) -> Self {
        GradientMap(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    /// Element-wise accumulation; lengths must match.
    pub fn accumulate(&mut self, other: &GradientMap) {
        assert_eq!(self.len(), other.len(), "gradient maps of different layouts");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

/// A taped real number.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} = {})", self.id.0, self.value)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, op: OpTag, value: f64, d: f64) -> Var<'t> {
        let id = self.tape.push(op, value, [(self.id.0, d), (0, 0.0)], 1);
        Var {
            tape: self.tape,
            id,
            value,
        }
    }

    fn binary(self, other: Var<'t>, op: OpTag, value: f64, da: f64, db: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
        let id = self.tape.push(op, value, [(self.id.0, da), (other.id.0, db)], 2);
        Var {
            tape: self.tape,
            id,
            value,
        }
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        self.unary(OpTag::Exp, e, e)
    }

    pub fn affine(self, a: f64, b: f64) -> Var<'t> {
        self.unary(OpTag::Affine(a, b), a * self.value + b, a)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, OpTag::Add, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, OpTag::Sub, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, OpTag::Mul, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(OpTag::Neg, -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.affine(1.0, rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.affine(1.0, -rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(OpTag::Scale(rhs), self.value * rhs, rhs)
    }
}

impl Scalar for Var<'_> {
    fn value(&self) -> f64 {
        self.value
    }

    fn constant_like(&self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(OpTag::Tanh, t, 1.0 - t * t)
    }

    fn sin(self) -> Self {
        self.unary(OpTag::Sin, self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.unary(OpTag::Cos, self.value.cos(), -self.value.sin())
    }

    fn square(self) -> Self {
        self.unary(OpTag::Square, self.value * self.value, 2.0 * self.value)
    }
}
