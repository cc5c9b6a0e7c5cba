//! Automatic construction of hierarchies of abstract machines for a
//! blocks-world manipulator task.
//!
//! The pipeline generates small candidate machines, prunes them per
//! manipulator cluster, searches for good per-cluster structures with an
//! internal reinforcement-learning loop, and combines the winners under a
//! root dispatcher that is compared against flat Q-learning.

pub mod blocks;
pub mod dispatch;
pub mod error;
pub mod flat_q;
pub mod ham;
pub mod harness;
pub mod internal_env;
pub mod learning;
pub mod machine_gen;
pub mod pruning;

pub use error::{Error, Result};
