//! Guide chapters compiled as documentation tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/circuits.md")]
pub mod circuits {}

#[doc = include_str!("../../../book/src/hardware.md")]
pub mod hardware {}

#[doc = include_str!("../../../book/src/passes.md")]
pub mod passes {}

#[doc = include_str!("../../../book/src/cost.md")]
pub mod cost {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/results.md")]
pub mod results {}
