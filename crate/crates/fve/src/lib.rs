//! Simulation laboratory for measure-valued diffusions driven by a random
//! environment: particle constructions, moment duality, a density SPDE
//! solver, and the associated diagnostics.

pub mod config;
pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod initial;
pub mod kernel;
pub mod lookdown;
pub mod measure;
pub mod run;
pub mod sdsm;
pub mod seed;
pub mod spde;
pub mod stats;
pub mod testfn;
pub mod verify;

mod cli;

pub use cli::cli_main;
pub use error::{Error, Result};
