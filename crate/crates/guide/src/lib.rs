//! The chapters of `book/` as doc-tests, so every snippet in the guide
//! compiles and runs against the current library.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/feeder-model.md")]
pub mod feeder_model {}

#[doc = include_str!("../../../book/src/scenario-data.md")]
pub mod scenario_data {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
