//! Minimal differentiable tensor engine used by the networks.

mod graph;
mod kernels;
pub mod ops;
mod params;

pub use graph::{BackwardFn, Graph, Var};
pub use params::{Bound, ParamStore};
