//! Bilevel division of a shared energy storage unit between a distribution
//! company and its customers.
//!
//! The upper level splits the storage capacity; each party then runs its own
//! cost-minimising operation LP on its share. The crate builds those LPs,
//! replaces them by their KKT conditions to obtain a single-level MPEC,
//! linearises the complementarity pairs with big-M selectors, and solves the
//! result with embedded simplex, branch-and-bound and complementarity
//! branching engines. A brute-force grid oracle certifies the answers.

pub mod error;
pub mod instance;
pub mod lp;
pub mod mpec;
pub mod oracle;
pub mod response;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use instance::{Division, Instance, ScheduleSet};
