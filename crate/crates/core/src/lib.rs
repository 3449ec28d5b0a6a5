//! Multi-domain physics-informed neural network for transient heat
//! conduction in a water-cooled W / OFHC-Cu / CuCrZr divertor monoblock,
//! together with a finite-difference reference solver.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
