//! Reverse-mode differentiation for objectives built from small dense
//! networks composed with batched model rollouts.

mod check;
mod mat;
mod net;
mod tape;

pub use check::{finite_difference_check, FdReport, Probe};
pub use mat::Mat;
pub use net::{squash, Activation, LayerSpan, NetTopology, ParamVector};
pub use tape::{Gradients, NodeId, ParamId, Tape};

#[cfg(test)]
mod tests;
