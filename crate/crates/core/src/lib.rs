//! Age of Information simulation for distributed edge computing on LEO
//! satellite constellations.
//!
//! The crate is layered bottom-up: [`constellation`] propagates Walker
//! shells, [`topology`] turns positions into a routed link graph,
//! [`coverage`] decides which satellites can image the region of interest,
//! [`pipeline`] turns a capture into packets, [`netsim`] moves those packets
//! through FIFO links, [`metrics`] folds deliveries into AoI, and
//! [`harness`] wires it all into trials and experiment matrices.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constellation;
pub mod coverage;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod netsim;
pub mod pipeline;
pub mod topology;

pub use error::{Result, SimError};
