//! Teams of Bernoulli-logistic units trained by REINFORCE, with lateral
//! connections that coordinate their exploration.
//!
//! The crate covers the multiplexer environment, the hidden-layer policy and
//! its samplers, the learning rules, an exact enumeration oracle used to
//! certify those rules, and an experiment harness with a CLI.

pub mod env;
pub mod error;
pub mod harness;
pub mod learn;
pub mod numeric;
pub mod oracle;
pub mod policy;

pub use error::{Error, Result};
pub use numeric::Rng;
