//! Simulated quantum annealing on symmetric cost functions, with exact
//! references and Markov-chain comparison tools.

pub mod anneal;
pub mod chain;
pub mod cost;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod path_integral;
pub mod rng;
pub mod sa;

pub use cost::{CostKind, SpikeIndicator, SymmetricCost};
pub use error::{Result, SqaError};
pub use kernels::{Kernel, KernelKind};
pub use path_integral::{ConfigSnapshot, PathIntegralSystem, WorldlineConfiguration};
pub use rng::RngStream;
