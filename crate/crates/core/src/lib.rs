//! PT-symmetric double-delta trap: shooting eigensolver, closed-form
//! oracle, SUSY partner potentials and the experiments built on them.

pub mod cli;
pub mod error;
pub mod integrator;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod shooting;
pub mod susy;

pub use error::{Error, Result};
