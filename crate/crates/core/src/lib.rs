//! Compiler passes for distributed quantum circuits on a two-level network
//! of trapped-ion nodes.

pub mod anneal;
pub mod baseline;
pub mod bench;
pub mod buffer;
pub mod cost;
pub mod error;
pub mod expand;
pub mod fixtures;
pub mod hw;
pub mod ir;
pub mod lower;
pub mod partition;
pub mod pipeline;
pub mod program;
pub mod route;
pub mod schedule;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
pub use hw::{HardwareModel, Timing};
pub use ir::{Circuit, Gate, GateKind, NodeId, Qubit};
