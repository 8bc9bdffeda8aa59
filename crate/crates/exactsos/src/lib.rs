//! Exactified local distributions, Sum-of-Squares pseudoexpectations for random CSPs,
//! bisection reductions and degree-2 refutation of imbalanced XOR instances.

pub mod error;
pub mod rational;
pub mod poly;
pub mod lp;
pub mod csp_core;
pub mod exact_dist;
pub mod weight_gadgets;
pub mod instance_gen;
pub mod expansion;
pub mod pseudoexp;
pub mod reductions;
pub mod refuter;
pub mod schema;

pub use error::{Error, Result};
pub use rational::Q;
