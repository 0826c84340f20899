// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod grid;
pub mod optimizer;
pub mod propagation;
pub mod protocol;
pub mod schrodinger;
pub mod tridiag;
pub mod tunneling;

pub use config::PhysicsConfig;
pub use error::{Error, Result};
pub use grid::{SpatialGrid, WaveFunction};
pub use protocol::{Protocol, ProtocolKind};
