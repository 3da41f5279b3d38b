//! Battery state-of-health estimation from cell temperature with a
//! two-input Kolmogorov-Arnold network.
//!
//! Pipeline: [`thermal`] simulates telemetry, [`data`] turns it into
//! horizon pairs, [`trainer`] fits a [`kan::KanModel`], [`symbolic`]
//! extracts a closed form of the cycle activation and [`soh`] converts it
//! to a state-of-health curve. [`commands`] ties the stages together for
//! the `sohkan` binary.

pub mod commands;
pub mod data;
pub mod error;
pub mod kan;
pub mod plot;
pub mod soh;
pub mod symbolic;
pub mod thermal;
pub mod trainer;

pub use error::{Error, Result};
