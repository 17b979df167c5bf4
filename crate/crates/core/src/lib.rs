//! Magnetic microtrap simulation above an atom-chip wire layout, and
//! inverse optimization of wire-current schedules that transport the trap
//! along a prescribed path.

pub mod error;
pub mod geometry;
pub mod inverse;
pub mod magnetics;
pub mod nelder_mead;
pub mod report;
pub mod runner;
pub mod schedule;
pub mod trap;

pub use error::{Error, Result};
