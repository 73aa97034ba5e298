//! Multi-parameter control of the (1+(λ,λ)) genetic algorithm on OneMax.

pub mod bitstring;
pub mod ddqn;
pub mod error;
pub mod ga;
pub mod neural_net;
pub mod policy;
pub mod stats;

pub use error::{Error, Result};
