//! Bearing rigidity analysis and bearing-only formation control.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bearing;
pub mod control_global;
pub mod control_local;
pub mod distance;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod linalg;
mod serde_util;
pub mod sim;
pub mod target;

pub use bearing::{Framework, RigidityReport};
pub use error::{Error, Result};
pub use graph::Graph;
pub use target::{BearingConstraints, TargetSolution};
