//! Subcommand implementations.

pub mod ablate;
pub mod eval;
pub mod gen;
pub mod gradcheck;
pub mod reason;
pub mod train;
pub mod viz;
