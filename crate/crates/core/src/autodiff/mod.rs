//! Scalar reverse-mode tape and second-order forward jets.

mod check;
mod jet;
mod scalar;
mod tape;

pub use check::{fd_gradient_error, gradient_check};
pub use jet::{jet_apply, Jet2};
pub use scalar::Scalar;
pub use tape::{Adjoints, GradientMap, Node, NodeId, OpTag, Tape, Var};
