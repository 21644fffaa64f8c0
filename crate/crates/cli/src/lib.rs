//! Reproducible command-line runs over the `uq-core` toolkit: strict
//! key=value configuration, NPY/PGM inputs and outputs, and SHA-256 run
//! manifests that `uq report` can re-verify.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use config::{DecomposeMode, Patching, RunConfig, SamplerKind, SeedSource, Task};
pub use error::{CliError, CliResult};
pub use manifest::{Manifest, RunWriter};
